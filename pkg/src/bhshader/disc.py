"""Procedural accretion disc: temperature profile and precessing particle density.

The disc lies in the z = 0 plane and rotates in the direction of increasing
azimuth. Its density is a sum of "linear" particles: arcs spread along slowly
precessing quasi-circular orbits, each approximated by

    u(t) = u1 + (u2 - u1) sin^2(pi / (4K) * phi(t) * sqrt(u3 - u1))
    phi(t) = sqrt(ubar^3 / 2) t + phi0

with K the complete elliptic integral of the first kind at modulus kappa.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geodesic import DomainError
from .spectra import blackbody_xyz

# Maximum of u^3 (1 - sqrt(3u)) over (0, 1/3].
PEAK_U = 12.0 / 49.0


def _profile(u):
    u = np.asarray(u, dtype=float)
    return u ** 3 * (1.0 - np.sqrt(3.0 * u))


_PEAK_VALUE = float(_profile(PEAK_U))


def elliptic_k(kappa: float) -> float:
    """Complete elliptic integral of the first kind, by arithmetic-geometric mean."""
    if not 0.0 <= kappa < 1.0:
        raise DomainError(f"modulus {kappa} outside [0, 1)")
    a, b = 1.0, math.sqrt(1.0 - kappa * kappa)
    while abs(a - b) > 1e-15 * a:
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return math.pi / (a + b)


@dataclass(frozen=True)
class DiscParticle:
    u1: float
    u2: float
    phi0: float

    def __post_init__(self):
        if not 0.0 < self.u1 <= self.u2 <= 1.0 / 3.0:
            raise DomainError("particle orbit needs 0 < u1 <= u2 <= 1/3")

    @property
    def u3(self) -> float:
        return 1.0 - self.u1 - self.u2

    @property
    def kappa(self) -> float:
        return math.sqrt((self.u2 - self.u1) / (self.u3 - self.u1))

    @property
    def k(self) -> float:
        return elliptic_k(self.kappa)

    @property
    def u_bar(self) -> float:
        return 0.5 * (self.u1 + self.u2)

    @property
    def angular_speed(self) -> float:
        """d(phi)/dt of the circular orbit at ``u_bar``."""
        return math.sqrt(self.u_bar ** 3 / 2.0)

    @property
    def radial_period(self) -> float:
        """Azimuth swept between two consecutive periapses."""
        return 4.0 * self.k / math.sqrt(self.u3 - self.u1)

    def phase(self, t):
        return self.angular_speed * np.asarray(t, dtype=float) + self.phi0

    def orbit_u(self, phi):
        """Inverse radius of the orbit point at azimuth-like phase ``phi``."""
        x = math.pi / (4.0 * self.k) * np.asarray(phi, dtype=float) * math.sqrt(self.u3 - self.u1)
        return self.u1 + (self.u2 - self.u1) * np.sin(x) ** 2


def particle_density(t, r, phi, particle: DiscParticle, falloff: float = 1.0):
    """Density of one linear particle at hit points (t, r, phi).

    ``a`` is the particle parameter of the nearest point (the particle center
    sits at a = pi); the radial term compares r with the radius of that point
    at time t.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    phase = particle.phase(t)
    a = np.mod(np.asarray(phi, dtype=float) - phase, 2.0 * math.pi)
    u_a = particle.orbit_u(a + phase)
    d2 = (a / math.pi - 1.0) ** 2 + (r - 1.0 / u_a) ** 2
    return np.maximum(0.0, 1.0 - d2 / (falloff * falloff)) ** 2


@dataclass(frozen=True)
class DiscModel:
    u_ic: float = 1.0 / 3.0
    u_oc: float = 1.0 / 12.0
    t_scale: float = 6500.0  # peak temperature, kelvin
    particles: tuple[DiscParticle, ...] = field(default_factory=tuple)
    density_falloff: float = 1.0
    brightness: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.u_oc < self.u_ic <= 1.0 / 3.0:
            raise DomainError("disc needs 0 < u_oc < u_ic <= 1/3")

    def temperature(self, u):
        return temperature(u, self.t_scale)

    def density(self, t, r, phi):
        out = np.zeros(np.broadcast_shapes(np.shape(t), np.shape(r), np.shape(phi)))
        for p in self.particles:
            out += particle_density(t, r, phi, p, self.density_falloff)
        return out


def temperature(u, t_scale: float = 6500.0):
    """Disc temperature with T^4 proportional to u^3 (1 - sqrt(3u)), peaking at t_scale."""
    u = np.asarray(u, dtype=float)
    if np.any(u > 1.0 / 3.0) or np.any(u < 0.0):
        raise DomainError("disc temperature needs 0 <= u <= 1/3")
    ratio = np.maximum(_profile(u), 0.0) / _PEAK_VALUE
    return t_scale * ratio ** 0.25


def make_particles(seed: int, count: int, u_ic: float, u_oc: float) -> tuple[DiscParticle, ...]:
    """Deterministic particle set with u1 <= u2 drawn uniformly in the disc band."""
    rng = np.random.default_rng(seed)
    uu = np.sort(rng.uniform(u_oc, u_ic, size=(count, 2)), axis=1)
    phi0 = rng.uniform(0.0, 2.0 * math.pi, size=count)
    return tuple(DiscParticle(float(a), float(b), float(p)) for (a, b), p in zip(uu, phi0))


def make_disc(seed: int = 0, count: int = 64, u_ic: float = 1.0 / 3.0,
              u_oc: float = 1.0 / 12.0, t_scale: float = 6500.0,
              density_falloff: float = 1.0, brightness: float = 1.0) -> DiscModel:
    return DiscModel(u_ic, u_oc, t_scale, make_particles(seed, count, u_ic, u_oc),
                     density_falloff, brightness)


def disc_radiance(u, t_ret, phi, model: DiscModel):
    """Emitted XYZ and particle density at disc points (u, t, phi).

    Points outside the disc band emit nothing.
    """
    u = np.asarray(u, dtype=float)
    inside = (u >= model.u_oc) & (u <= model.u_ic)
    u_safe = np.where(inside, u, model.u_ic)
    density = np.where(inside, model.density(t_ret, 1.0 / u_safe, phi), 0.0)
    color = blackbody_xyz(model.temperature(u_safe), model.t_scale)
    return model.brightness * color * density[..., None], density
