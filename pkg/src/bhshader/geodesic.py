"""Closed-form Schwarzschild ray quantities.

Units: the horizon radius and the speed of light are 1, and ``u = 1/r``.
4-vectors are stored as ``[t, x, y, z]`` pseudo-Cartesian components, the
metric signature is (+, -, -, -).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numba
import numpy as np

# Exact rational constants; float versions are derived once.
MU_EXACT = Fraction(4, 27)
MU = float(MU_EXACT)
PHOTON_SPHERE_U = 2.0 / 3.0
ONE_THIRD = 1.0 / 3.0


class DomainError(ValueError):
    """Raised when an input lies outside the domain of a closed-form relation."""


@dataclass(frozen=True)
class SchwarzschildPosition:
    t: float
    r: float
    theta: float
    phi: float

    def __post_init__(self):
        if not self.r > 1.0:
            raise DomainError(f"r={self.r} is not outside the horizon")

    @property
    def u(self) -> float:
        return 1.0 / self.r

    @property
    def cartesian(self) -> np.ndarray:
        st = math.sin(self.theta)
        return self.r * np.array(
            [st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)]
        )


@dataclass(frozen=True)
class StaticBasis:
    e_t: np.ndarray
    e_r: np.ndarray
    e_theta: np.ndarray
    e_phi: np.ndarray

    def as_matrix(self) -> np.ndarray:
        """Rows are the basis vectors, in the order t, r, theta, phi."""
        return np.stack([self.e_t, self.e_r, self.e_theta, self.e_phi])


@dataclass(frozen=True)
class CameraBasis:
    e_tau: np.ndarray
    e_w: np.ndarray
    e_h: np.ndarray
    e_d: np.ndarray
    focal_length: float = 1.0

    @classmethod
    def from_lorentz(cls, static: StaticBasis, lorentz: np.ndarray,
                     focal_length: float = 1.0) -> "CameraBasis":
        rows = np.asarray(lorentz, dtype=float) @ static.as_matrix()
        return cls(rows[0], rows[1], rows[2], rows[3], focal_length)


@dataclass(frozen=True)
class BeamFrame:
    ex: np.ndarray
    ey: np.ndarray
    ez: np.ndarray
    delta: float
    alpha: float
    u_cam: float


class RayClass(enum.Enum):
    PLUNGING = "plunging"
    SCATTERING = "scattering"
    TRAPPED = "trapped"


@dataclass(frozen=True)
class RayState:
    u: float
    u_dot: float
    e: float
    ray_class: RayClass
    radial: bool = False

    @property
    def e2(self) -> float:
        return self.e * self.e


def metric_product(pos: SchwarzschildPosition, v, w) -> float:
    """g(v, w) for pseudo-Cartesian components at ``pos``."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    u = pos.u
    n = pos.cartesian / pos.r
    vr, wr = n @ v[1:], n @ w[1:]
    return ((1.0 - u) * v[0] * w[0] - vr * wr / (1.0 - u)
            - (v[1:] @ w[1:] - vr * wr))


def static_basis(pos: SchwarzschildPosition) -> StaticBasis:
    u = pos.u
    if not 0.0 < u < 1.0:
        raise DomainError("static observers exist only outside the horizon")
    st, ct = math.sin(pos.theta), math.cos(pos.theta)
    sp, cp = math.sin(pos.phi), math.cos(pos.phi)
    a = math.sqrt(1.0 - u)
    return StaticBasis(
        e_t=np.array([1.0 / a, 0.0, 0.0, 0.0]),
        e_r=a * np.array([0.0, st * cp, st * sp, ct]),
        e_theta=np.array([0.0, ct * cp, ct * sp, -st]),
        e_phi=np.array([0.0, -sp, cp, 0.0]),
    )


def static_camera(pos: SchwarzschildPosition, focal_length: float = 1.0,
                  orientation: np.ndarray | None = None) -> CameraBasis:
    """Static observer camera; ``orientation`` is the 3x3 spatial block of the
    Lorentz transform (rows w, h, d over r, theta, phi).

    The default looks at the black hole: ``e_d = e_r`` (the view axis is -e_d),
    ``e_w = e_phi`` and ``e_h = -e_theta``.
    """
    lam = np.eye(4)
    if orientation is None:
        orientation = np.array([[0.0, 0.0, 1.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0]])
    lam[1:, 1:] = orientation
    return CameraBasis.from_lorentz(static_basis(pos), lam, focal_length)


def beam_direction(q_w, q_h, cam: CameraBasis) -> np.ndarray:
    """Initial (backward) null direction of the beam through screen point (q_w, q_h).

    Broadcasts over array-valued screen coordinates; the result has a trailing
    axis of length 4.
    """
    f = cam.focal_length
    if not f > 0:
        raise DomainError("focal length must be positive")
    q_w = np.asarray(q_w, dtype=float)[..., None]
    q_h = np.asarray(q_h, dtype=float)[..., None]
    norm = np.sqrt(q_w * q_w + q_h * q_h + f * f)
    return -cam.e_tau + (q_w * cam.e_w + q_h * cam.e_h - f * cam.e_d) / norm


@numba.njit(cache=True)
def _cross(a0, a1, a2, b0, b1, b2):
    return a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0


@numba.njit(cache=True)
def _beam_frames_kernel(p, d, ex, ey, ez, delta, alpha):
    pn = math.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
    x0, x1, x2 = p[0] / pn, p[1] / pn, p[2] / pn
    for i in range(d.shape[0]):
        dd = math.sqrt(d[i, 0] ** 2 + d[i, 1] ** 2 + d[i, 2] ** 2)
        n0, n1, n2 = d[i, 0] / dd, d[i, 1] / dd, d[i, 2] / dd
        c = min(1.0, max(-1.0, x0 * n0 + x1 * n1 + x2 * n2))
        delta[i] = math.acos(c)
        z0, z1, z2 = _cross(x0, x1, x2, n0, n1, n2)
        nz = math.sqrt(z0 * z0 + z1 * z1 + z2 * z2)
        if nz < 1e-15:
            # Radial beam: any plane through the axis works. Prefer one containing e_z.
            z0, z1, z2 = _cross(x0, x1, x2, 0.0, 0.0, 1.0)
            nz = math.sqrt(z0 * z0 + z1 * z1 + z2 * z2)
            if not nz > 1e-12:
                z0, z1, z2 = _cross(x0, x1, x2, 1.0, 0.0, 0.0)
                nz = math.sqrt(z0 * z0 + z1 * z1 + z2 * z2)
        z0, z1, z2 = z0 / nz, z1 / nz, z2 / nz
        y0, y1, y2 = _cross(z0, z1, z2, x0, x1, x2)
        ny = math.sqrt(y0 * y0 + y1 * y1 + y2 * y2)
        y0, y1, y2 = y0 / ny, y1 / ny, y2 / ny
        # Direction of the disc line in the beam plane.
        t0, t1, t2 = _cross(0.0, 0.0, 1.0, z0, z1, z2)
        nt = math.sqrt(t0 * t0 + t1 * t1 + t2 * t2)
        if nt < 1e-15:
            t0, t1, t2 = x0, x1, x2
        else:
            t0, t1, t2 = t0 / nt, t1 / nt, t2 / nt
        if t0 * y0 + t1 * y1 + t2 * y2 < 0.0:
            t0, t1, t2 = -t0, -t1, -t2
        a = math.acos(min(1.0, max(-1.0, x0 * t0 + x1 * t1 + x2 * t2)))
        # alpha and alpha + pi describe the same pair of disc lines.
        alpha[i] = 0.0 if a >= math.pi else a
        ex[i, 0], ex[i, 1], ex[i, 2] = x0, x1, x2
        ey[i, 0], ey[i, 1], ey[i, 2] = y0, y1, y2
        ez[i, 0], ez[i, 1], ez[i, 2] = z0, z1, z2


def beam_frames(p: np.ndarray, d: np.ndarray):
    """Vectorized rotated frames for spatial beam directions ``d`` (shape (..., 3))
    from camera position ``p`` (Cartesian 3-vector).

    Returns ``(ex, ey, ez, delta, alpha)``.
    """
    p = np.ascontiguousarray(p, dtype=float)
    d = np.asarray(d, dtype=float)
    shape = d.shape[:-1]
    flat = np.ascontiguousarray(d.reshape(-1, 3))
    n = flat.shape[0]
    ex, ey, ez = np.empty((n, 3)), np.empty((n, 3)), np.empty((n, 3))
    delta, alpha = np.empty(n), np.empty(n)
    _beam_frames_kernel(p, flat, ex, ey, ez, delta, alpha)
    vec = shape + (3,)
    return (ex.reshape(vec), ey.reshape(vec), ez.reshape(vec),
            delta.reshape(shape), alpha.reshape(shape))


def make_beam_frame(pos: SchwarzschildPosition, d) -> BeamFrame:
    d = np.asarray(d, dtype=float)
    spatial = d[1:] if d.shape[-1] == 4 else d
    if not np.linalg.norm(spatial) > 0:
        raise DomainError("beam direction has no spatial part")
    ex, ey, ez, delta, alpha = beam_frames(pos.cartesian, spatial)
    return BeamFrame(ex, ey, ez, float(delta), float(alpha), pos.u)


def classify(e2: float, u: float) -> RayClass:
    if e2 >= MU:
        return RayClass.PLUNGING
    return RayClass.TRAPPED if u > PHOTON_SPHERE_U else RayClass.SCATTERING


def ray_constants(u: float, delta: float) -> RayState:
    """Motion constant and ray type for a ray leaving inverse radius ``u`` at
    angle ``delta`` from the outward radial direction."""
    if not 0.0 < u < 1.0:
        raise DomainError(f"u={u} outside (0, 1)")
    if not 0.0 <= delta <= math.pi:
        raise DomainError(f"delta={delta} outside [0, pi]")
    if delta == 0.0:
        return RayState(u, -math.inf, 0.0, RayClass.SCATTERING, radial=True)
    if delta == math.pi:
        return RayState(u, math.inf, 0.0, RayClass.PLUNGING, radial=True)
    u_dot = -u / math.tan(delta)
    e2 = u_dot * u_dot + u * u * (1.0 - u)
    return RayState(u, u_dot, math.sqrt(e2), classify(e2, u))


def apsis(e: float) -> float:
    """Inverse radius of the turning point of a scattering ray."""
    e2 = e * e
    # Allow rounding of e = sqrt(mu) back to e^2 just above mu.
    if e2 > MU * (1.0 + 4e-16):
        raise DomainError(f"e^2={e2} > mu: no apsis")
    # Branch-stable endpoints.
    if e2 == 0.0:
        return 0.0
    if math.isclose(e2, MU, rel_tol=4e-16):
        return PHOTON_SPHERE_U
    return ONE_THIRD + (2.0 / 3.0) * math.sin(math.asin(2.0 * e2 / MU - 1.0) / 3.0)


def apsis_array(e2: np.ndarray) -> np.ndarray:
    """Vectorized apsis from e^2 (values above mu are clipped to the photon sphere)."""
    x = np.clip(2.0 * np.asarray(e2, dtype=float) / MU - 1.0, -1.0, 1.0)
    return ONE_THIRD + (2.0 / 3.0) * np.sin(np.arcsin(x) / 3.0)
