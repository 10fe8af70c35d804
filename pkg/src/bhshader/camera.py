"""Freely falling camera: geodesic orbit in an inclined plane and its Lorentz frame.

The orbit lives in a plane of inclination ``chi`` and is described by polar
coordinates (r, psi) in that plane, with constants of motion e and l:

    (dr/dtau)^2 = e^2 + l^2 u^3 - l^2 u^2 + u - 1
    d2r/dtau2   = (2 l^2 u^3 - 3 l^2 u^4 - u^2) / 2
    dt/dtau = e / (1 - u),   dpsi/dtau = l u^2
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geodesic import (CameraBasis, DomainError, SchwarzschildPosition, static_basis)


class HorizonCrossing(RuntimeError):
    """The orbit reached r <= 1; views from inside the horizon are unsupported."""

    def __init__(self, state: "OrbitState"):
        super().__init__(f"camera crossed the horizon at tau={state.tau:.6g}")
        self.state = state


@dataclass(frozen=True)
class OrbitState:
    r: float
    psi: float
    chi: float
    t: float
    dr_dtau: float
    e_orb: float
    l_orb: float
    tau: float = 0.0

    @property
    def u(self) -> float:
        return 1.0 / self.r

    def radial_potential(self, r: float | None = None) -> float:
        u = self.u if r is None else 1.0 / r
        e, l = self.e_orb, self.l_orb
        return e * e + l * l * u ** 3 - l * l * u * u + u - 1.0

    def energy_residual(self) -> float:
        return self.dr_dtau ** 2 - self.radial_potential()

    def dt_dtau(self) -> float:
        return self.e_orb / (1.0 - self.u)

    def dpsi_dtau(self) -> float:
        return self.l_orb * self.u * self.u

    def velocity(self) -> np.ndarray:
        """Speed relative to the local static observer, in the (e_r, e_chi,
        e_psi) frame."""
        u = self.u
        dt = self.dt_dtau()
        return np.array([
            self.dr_dtau / (1.0 - u) / dt,
            0.0,
            self.dpsi_dtau() / (u * math.sqrt(1.0 - u)) / dt,
        ])

    def lorentz_factor(self) -> float:
        return self.e_orb / math.sqrt(1.0 - self.u)


def radial_acceleration(r: float, l_orb: float) -> float:
    u = 1.0 / r
    l2 = l_orb * l_orb
    return 0.5 * (2.0 * l2 * u ** 3 - 3.0 * l2 * u ** 4 - u * u)


def orbit_init(r0: float, delta0: float, v0: float, chi: float = 0.0,
               psi0: float = 0.0) -> OrbitState:
    """Orbit from the initial radius, direction (angle from the outward
    radial direction, in the orbital plane) and speed relative to the static
    observer."""
    if not r0 > 1.0:
        raise DomainError("r0 must be outside the horizon")
    if not 0.0 <= v0 < 1.0:
        raise DomainError("v0 must be in [0, 1)")
    if not 0.0 < delta0 < math.pi:
        raise DomainError("delta0 must be in (0, pi)")
    u0 = 1.0 / r0
    e2 = (1.0 - u0) / (1.0 - v0 * v0)
    cot = math.cos(delta0) / math.sin(delta0)
    num = e2 + u0 - 1.0
    if num < -1e-15:
        raise DomainError("inconsistent initial condition: negative l^2")
    l2 = max(num, 0.0) / (u0 * u0 * (1.0 - u0 + cot * cot))
    state = OrbitState(r0, psi0, chi, 0.0, 0.0, math.sqrt(e2), math.sqrt(l2))
    radial = math.sqrt(max(state.radial_potential(), 0.0))
    # Directions within ~1e-12 of tangential start exactly tangential.
    if abs(cot) < 1e-12:
        radial = 0.0
    return replace(state, dr_dtau=math.copysign(radial, cot))


def orbit_step(state: OrbitState, dtau: float) -> OrbitState:
    """One kick-drift-kick leapfrog step of proper time ``dtau``.

    t and psi use the trapezoid rule on their rates at both ends.
    """
    if not dtau > 0.0:
        raise DomainError("dtau must be positive")
    l = state.l_orb
    v_half = state.dr_dtau + 0.5 * dtau * radial_acceleration(state.r, l)
    r_new = state.r + dtau * v_half
    if r_new <= 1.0:
        raise HorizonCrossing(replace(state, r=r_new, tau=state.tau + dtau))
    v_new = v_half + 0.5 * dtau * radial_acceleration(r_new, l)
    u0, u1 = 1.0 / state.r, 1.0 / r_new
    e = state.e_orb
    dt = 0.5 * dtau * (e / (1.0 - u0) + e / (1.0 - u1))
    dpsi = 0.5 * dtau * l * (u0 * u0 + u1 * u1)
    return replace(state, r=r_new, dr_dtau=v_new, t=state.t + dt,
                   psi=state.psi + dpsi, tau=state.tau + dtau)


def schwarzschild_position(state: OrbitState) -> SchwarzschildPosition:
    cp, sp = math.cos(state.psi), math.sin(state.psi)
    theta = math.acos(max(-1.0, min(1.0, cp * math.sin(state.chi))))
    phi = math.atan2(sp, math.cos(state.chi) * cp) % (2.0 * math.pi)
    return SchwarzschildPosition(state.t, state.r, theta, phi)


def orbital_cartesian(state: OrbitState) -> np.ndarray:
    cp, sp = math.cos(state.psi), math.sin(state.psi)
    return state.r * np.array([math.cos(state.chi) * cp, sp, math.sin(state.chi) * cp])


@dataclass(frozen=True)
class LorentzChain:
    rotation: np.ndarray  # static (t, r, theta, phi) -> (t, r, chi, psi)
    boost: np.ndarray
    orientation: np.ndarray
    velocity: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return self.orientation @ self.boost @ self.rotation


def boost_matrix(v) -> np.ndarray:
    """Rows are the boosted basis vectors in terms of the rest frame basis."""
    v = np.asarray(v, dtype=float)
    v2 = float(v @ v)
    if v2 >= 1.0:
        raise DomainError("speed >= 1: integration blew up")
    gamma = 1.0 / math.sqrt(1.0 - v2)
    out = np.eye(4)
    out[0, 0] = gamma
    out[0, 1:] = gamma * v
    out[1:, 0] = gamma * v
    if v2 > 0.0:
        out[1:, 1:] += (gamma - 1.0) * np.outer(v, v) / v2
    return out


def orbit_rotation(state: OrbitState, pos: SchwarzschildPosition | None = None) -> np.ndarray:
    """Rotation from (e_t, e_r, e_theta, e_phi) to (e_t, e_r, e_chi, e_psi).

    e_psi is the direction of increasing psi and e_chi = e_psi x e_r, so the
    pair is a rotation of (e_theta, e_phi) about e_r.
    """
    pos = pos or schwarzschild_position(state)
    st, ct = math.sin(pos.theta), math.cos(pos.theta)
    sp, cp = math.sin(pos.phi), math.cos(pos.phi)
    e_theta = np.array([ct * cp, ct * sp, -st])
    e_phi = np.array([-sp, cp, 0.0])
    chi_vec = np.array([math.sin(state.chi), 0.0, -math.cos(state.chi)])
    c = float(chi_vec @ e_theta)
    s = float(chi_vec @ e_phi)
    out = np.eye(4)
    out[2:, 2:] = [[c, s], [-s, c]]
    return out


def default_orientation() -> np.ndarray:
    """Looks at the black hole: e_d = e_r', e_w = e_psi', e_h = -e_chi'."""
    return np.array([[0.0, 0.0, 1.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0]])


def orientation_matrix(yaw: float = 0.0, pitch: float = 0.0, roll: float = 0.0,
                       base: np.ndarray | None = None) -> np.ndarray:
    """4x4 user rotation O: yaw about e_h, pitch about e_w and roll about
    e_d (radians) applied to ``base`` (rows w, h, d over the frame axes)."""
    base = default_orientation() if base is None else np.asarray(base, dtype=float)
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    r_yaw = np.array([[cy, 0.0, -sy], [0.0, 1.0, 0.0], [sy, 0.0, cy]])
    r_pitch = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    r_roll = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    out = np.eye(4)
    out[1:, 1:] = r_roll @ r_pitch @ r_yaw @ base
    return out


def lorentz_chain(state: OrbitState, orientation: np.ndarray | None = None) -> LorentzChain:
    o = orientation_matrix() if orientation is None else np.asarray(orientation, dtype=float)
    if o.shape == (3, 3):
        full = np.eye(4)
        full[1:, 1:] = o
        o = full
    v = state.velocity()
    return LorentzChain(orbit_rotation(state), boost_matrix(v), o, v)


def camera_basis(state: OrbitState, orientation: np.ndarray | None = None,
                 focal_length: float = 1.0) -> tuple[SchwarzschildPosition, CameraBasis]:
    pos = schwarzschild_position(state)
    chain = lorentz_chain(state, orientation)
    return pos, CameraBasis.from_lorentz(static_basis(pos), chain.matrix, focal_length)


def four_velocity(state: OrbitState) -> np.ndarray:
    """Camera 4-velocity in pseudo-Cartesian components, from the orbit rates."""
    cp, sp = math.cos(state.psi), math.sin(state.psi)
    ch, sh = math.cos(state.chi), math.sin(state.chi)
    radial = np.array([ch * cp, sp, sh * cp])
    along = np.array([-ch * sp, cp, -sh * sp])
    spatial = state.dr_dtau * radial + state.r * state.dpsi_dtau() * along
    return np.concatenate([[state.dt_dtau()], spatial])
