"""Constant-time beam tracing with the precomputed tables.

A beam leaves the camera (inverse radius ``u = 1/p_r``) at angle ``delta`` from
the outward radial axis, in a plane where the accretion disc shows up as the
two lines at angles ``alpha`` and ``alpha + pi``. The tracer returns the escape
angle and at most two disc crossings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .geodesic import MU, PHOTON_SPHERE_U, BeamFrame, DomainError
from .tables import (GeodesicTables, _apsis, _lookup_d1s, _lookup_u1, _map_d_column, _scaled_d,
                     _scaled_u)

CAPTURED = math.inf


@dataclass(frozen=True)
class DiscIntersection:
    t_ret: float  # emission time minus reception time (<= 0)
    u_hit: float
    phi_hit: float  # angle of the crossed disc line in the beam plane


@dataclass(frozen=True)
class TraceResult:
    escape_delta: float
    intersections: tuple[DiscIntersection, ...] = field(default_factory=tuple)

    @property
    def captured(self) -> bool:
        return math.isinf(self.escape_delta)


@dataclass
class TraceBatch:
    """Vectorized tracer output. Slot 0 is the pre-apsis crossing, slot 1 the
    post-apsis one; unused slots have ``hit == False``."""

    escape_delta: np.ndarray
    hit: np.ndarray  # (..., 2) bool
    t_ret: np.ndarray  # (..., 2)
    u_hit: np.ndarray  # (..., 2)
    phi_hit: np.ndarray  # (..., 2)
    e: np.ndarray
    u_dot: np.ndarray

    @property
    def captured(self) -> np.ndarray:
        return np.isinf(self.escape_delta)

    def result(self, index=()) -> TraceResult:
        hits = tuple(
            DiscIntersection(float(self.t_ret[index][k]), float(self.u_hit[index][k]),
                             float(self.phi_hit[index][k]))
            for k in range(2) if self.hit[index][k])
        return TraceResult(float(self.escape_delta[index]), hits)


@numba.njit(cache=True)
def _mod_pi(x):
    y = x - math.pi * math.floor(x / math.pi)
    return 0.0 if y >= math.pi else y


@numba.njit(cache=True)
def _reg(u):
    return 1.0 / u - math.log(u)


@numba.njit(cache=True)
def _trace_kernel(dd, du, p_r, delta, alpha, u_ic, u_oc,
                  escape, hit, t_ret, u_hit, phi_hit, e_out, u_dot_out):
    for i in range(p_r.size):
        u = 1.0 / p_r[i]
        d = delta[i]
        al = alpha[i]
        hit[i, 0] = False
        hit[i, 1] = False
        for k in range(2):
            t_ret[i, k] = 0.0
            u_hit[i, k] = 0.0
            phi_hit[i, k] = 0.0
        if d <= 0.0 or d >= math.pi:
            # Exactly radial: outward escapes undeflected, inward is captured.
            escape[i] = 0.0 if d <= 0.0 else math.inf
            e_out[i] = 0.0
            u_dot_out[i] = 0.0
            continue
        u_dot = -u / math.tan(d)
        e2 = u_dot * u_dot + u * u * (1.0 - u)
        e = math.sqrt(e2)
        e_out[i] = e
        u_dot_out[i] = u_dot
        scatter = e2 < MU
        if scatter and u > PHOTON_SPHERE_U:
            escape[i] = math.inf
            continue
        s = 1.0 if u_dot >= 0.0 else -1.0
        ua = _apsis(e2) if scatter else 0.0
        col = _map_d_column(e)
        t_cam, defl = _lookup_d1s(dd, e, col, u, ua)
        time_cam = t_cam - _reg(u)
        phi_a = math.inf
        t_a = 0.0
        defl_a = 0.0
        if scatter:
            t_a, defl_a = _lookup_d1s(dd, e, col, ua, ua)
            phi_a = defl_a + 0.5 * math.pi
        # Camera azimuth on the ray from infinity; disc lines sit s * al away.
        phi_cam = defl + (math.pi - d if s > 0 else d)
        phi = phi_cam + s * al

        # A scattering ray that turns around outside the band never meets the
        # disc, which spares both U lookups for most of the sky.
        reaches = u_ic > 0.0 and (not scatter or ua >= u_oc)

        phi_0 = _mod_pi(phi)
        # The u guard alone is unreliable near the apsis, where u is flat in
        # phi; the crossing must also lie ahead of the camera along the ray.
        if reaches and phi_0 < phi_a and (phi_0 - phi_cam) * s > 0.0:
            t_0, u_0 = _lookup_u1(du, e, phi_0)
            if u_oc <= u_0 <= u_ic and u_0 > 0.0:
                hit[i, 0] = True
                # Next to the camera the table time error can flip the sign.
                t_ret[i, 0] = min(-s * (t_0 - time_cam), 0.0)
                u_hit[i, 0] = u_0
                phi_hit[i, 0] = al + phi - phi_0

        if reaches and scatter and s > 0:
            phi_m = 2.0 * phi_a - phi
            phi_1 = _mod_pi(phi_m)
            t_1, u_1 = 0.0, 0.0
            if phi_1 < phi_a:
                t_1, u_1 = _lookup_u1(du, e, phi_1)
            if phi_1 < phi_a and u_oc <= u_1 <= u_ic and u_1 > 0.0:
                hit[i, 1] = True
                t_ret[i, 1] = -(2.0 * (t_a - _reg(ua)) - time_cam - t_1)
                u_hit[i, 1] = u_1
                phi_hit[i, 1] = al + phi_m - phi_1

        if u_dot > 0.0:
            escape[i] = d + 2.0 * defl_a - defl if scatter else math.inf
        else:
            escape[i] = d + defl


def trace_rays(p_r, delta, alpha, u_ic: float, u_oc: float,
               tables: GeodesicTables) -> TraceBatch:
    """Vectorized tracer; all ray arguments broadcast together."""
    p_r, delta, alpha = np.broadcast_arrays(
        np.asarray(p_r, dtype=float), np.asarray(delta, dtype=float),
        np.asarray(alpha, dtype=float))
    if np.any(p_r <= 1.0):
        raise DomainError("camera inside the horizon")
    if not 0.0 <= u_oc <= u_ic <= 1.0 / 3.0 + 1e-15:
        raise DomainError("disc band must satisfy 0 <= u_oc <= u_ic <= 1/3")
    shape = p_r.shape
    n = p_r.size
    flat = [np.ascontiguousarray(a).ravel() for a in (p_r, delta, alpha)]
    escape = np.empty(n)
    hit = np.empty((n, 2), dtype=np.bool_)
    t_ret, u_hit, phi_hit = (np.empty((n, 2)) for _ in range(3))
    e, u_dot = np.empty(n), np.empty(n)
    _trace_kernel(_scaled_d(tables.deflection), _scaled_u(tables.inverse_radius),
                  *flat, float(u_ic), float(u_oc),
                  escape, hit, t_ret, u_hit, phi_hit, e, u_dot)
    pair = shape + (2,)
    return TraceBatch(escape.reshape(shape), hit.reshape(pair), t_ret.reshape(pair),
                      u_hit.reshape(pair), phi_hit.reshape(pair),
                      e.reshape(shape), u_dot.reshape(shape))


def trace_ray(p_r: float, delta: float, alpha: float, u_ic: float, u_oc: float,
              tables: GeodesicTables) -> TraceResult:
    if not 0.0 <= delta <= math.pi:
        raise DomainError("delta outside [0, pi]")
    if not 0.0 <= alpha < math.pi:
        raise DomainError("alpha outside [0, pi)")
    return trace_rays(p_r, delta, alpha, u_ic, u_oc, tables).result()


def escape_direction(result: TraceResult | float, frame: BeamFrame) -> np.ndarray:
    delta = result.escape_delta if isinstance(result, TraceResult) else float(result)
    if math.isinf(delta):
        raise ValueError("captured beams have no escape direction")
    return math.cos(delta) * frame.ex + math.sin(delta) * frame.ey


def escape_directions(escape_delta: np.ndarray, ex: np.ndarray, ey: np.ndarray) -> np.ndarray:
    """Vectorized escape directions; captured beams give NaN rows."""
    d = np.where(np.isinf(escape_delta), np.nan, escape_delta)[..., None]
    return np.cos(d) * ex + np.sin(d) * ey
