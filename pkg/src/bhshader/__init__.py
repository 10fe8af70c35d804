"""Black hole rendering with precomputed Schwarzschild geodesic tables.

Modules: ``geodesic`` (closed-form ray quantities), ``tables`` (precomputed
deflection and inverse-radius tables), ``tracer`` (constant-time beam
tracing), ``oracle`` (reference integrator), ``starfield`` (star cubemap and
footprint filter), ``disc`` (accretion disc), ``shading`` (Doppler, beaming,
bloom, tone map), ``camera`` (orbits and Lorentz frames), ``render``,
``report`` and ``cli``.
"""

__version__ = "0.1.0"
