"""Brute-force reference: fixed-step RK4 integration of the orbit equation
``u'' = 3/2 u^2 - u`` (derivatives with respect to the azimuth in the ray plane),
with ``dt/dphi = e / (u^2 (1 - u))``.

This is deliberately slow and independent of the tables; it is the ground
truth for the table and tracer checks.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba
import numpy as np

from .tracer import CAPTURED, DiscIntersection, TraceResult

DEFAULT_STEP = 1e-5


class Terminal(enum.Enum):
    PLUNGED_AT_HORIZON = "plunged"
    ESCAPED_TO_INFINITY = "escaped"
    MAX_STEPS_REACHED = "max_steps"


_TERMINALS = (Terminal.PLUNGED_AT_HORIZON, Terminal.ESCAPED_TO_INFINITY,
              Terminal.MAX_STEPS_REACHED)


@dataclass(frozen=True)
class GeodesicPath:
    phi: np.ndarray
    u: np.ndarray
    u_dot: np.ndarray
    t: np.ndarray
    terminal: Terminal
    e2: float

    def energy_residual(self) -> np.ndarray:
        return np.abs(self.u_dot ** 2 - (self.e2 - self.u ** 2 * (1.0 - self.u)))


@numba.njit(cache=True)
def _dt(e, u):
    if u <= 0.0 or u >= 1.0:
        return 0.0
    return e / (u * u * (1.0 - u))


@numba.njit(cache=True)
def _rk4(u, ud, t, e, h):
    k1u = ud
    k1v = 1.5 * u * u - u
    k1t = _dt(e, u)
    u2 = u + 0.5 * h * k1u
    k2u = ud + 0.5 * h * k1v
    k2v = 1.5 * u2 * u2 - u2
    k2t = _dt(e, u2)
    u3 = u + 0.5 * h * k2u
    k3u = ud + 0.5 * h * k2v
    k3v = 1.5 * u3 * u3 - u3
    k3t = _dt(e, u3)
    u4 = u + h * k3u
    k4u = ud + h * k3v
    k4v = 1.5 * u4 * u4 - u4
    k4t = _dt(e, u4)
    return (u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
            ud + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
            t + h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t))


@numba.njit(cache=True)
def _root_in_step(u, ud, t, e, h, target):
    """Bisection for the sub-step where u crosses ``target``; returns the
    sub-step length and the state there."""
    lo, hi = 0.0, h
    below = u < target
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        um, _, _ = _rk4(u, ud, t, e, mid)
        if (um < target) == below:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    un, udn, tn = _rk4(u, ud, t, e, hi)
    return hi, un, udn, tn


@numba.njit(cache=True)
def _integrate(u0, ud0, step, max_phi, out):
    e = math.sqrt(ud0 * ud0 + u0 * u0 * (1.0 - u0))
    n_max = out.shape[0]
    u, ud, t, phi = u0, ud0, 0.0, 0.0
    out[0, 0], out[0, 1], out[0, 2], out[0, 3] = phi, u, ud, t
    n = 1
    while n < n_max:
        h = min(step, max_phi - phi)
        if h <= 0.0:
            return n, 2
        un, udn, tn = _rk4(u, ud, t, e, h)
        status = -1
        if un >= 1.0:
            h, un, udn, tn = _root_in_step(u, ud, t, e, h, 1.0)
            status = 0
        elif un < 0.0:
            h, un, udn, tn = _root_in_step(u, ud, t, e, h, 0.0)
            un = 0.0
            status = 1
        phi += h
        u, ud, t = un, udn, tn
        out[n, 0], out[n, 1], out[n, 2], out[n, 3] = phi, u, ud, t
        n += 1
        if status >= 0:
            return n, status
    return n, 2


def integrate(u0: float, u_dot0: float, step: float = DEFAULT_STEP,
              max_phi: float = 2.0 * math.pi) -> GeodesicPath:
    """RK4 path from (u0, u_dot0) up to the horizon, infinity, or ``max_phi``."""
    if step > 1e-5:
        raise ValueError("reference step must be <= 1e-5")
    n_max = int(math.ceil(max_phi / step)) + 2
    out = np.empty((n_max, 4))
    n, status = _integrate(float(u0), float(u_dot0), float(step), float(max_phi), out)
    out = out[:n]
    return GeodesicPath(out[:, 0].copy(), out[:, 1].copy(), out[:, 2].copy(),
                        out[:, 3].copy(), _TERMINALS[status],
                        u_dot0 * u_dot0 + u0 * u0 * (1.0 - u0))


@numba.njit(cache=True)
def _trace(u0, ud0, alpha, u_ic, u_oc, step, max_phi, hits):
    """Integrates a backward ray from the camera. Returns (status, escape angle,
    hit count); hits rows are (phi, u, travel time)."""
    e = math.sqrt(ud0 * ud0 + u0 * u0 * (1.0 - u0))
    u, ud, t, phi = u0, ud0, 0.0, 0.0
    n_hits = 0
    max_hits = hits.shape[0]
    # Next disc-line crossing strictly after the camera.
    m = math.floor((phi - alpha) / math.pi) + 1
    line = alpha + m * math.pi
    if line <= 0.0:
        line += math.pi
    while phi < max_phi:
        h = step
        cross = phi + h >= line
        if cross:
            h = line - phi
        un, udn, tn = _rk4(u, ud, t, e, h)
        if un >= 1.0:
            return 0, math.inf, n_hits
        if un < 0.0:
            h, un, udn, tn = _root_in_step(u, ud, t, e, h, 0.0)
            return 1, phi + h, n_hits
        phi += h
        u, ud, t = un, udn, tn
        if cross:
            phi = line
            if u_oc <= u <= u_ic and n_hits < max_hits:
                hits[n_hits, 0] = phi
                hits[n_hits, 1] = u
                hits[n_hits, 2] = t
                n_hits += 1
            line += math.pi
    return 2, math.nan, n_hits


@numba.njit(cache=True)
def _trace_many(u0, ud0, alpha, u_ic, u_oc, step, max_phi, status, escape, hits, counts):
    for k in range(u0.shape[0]):
        s, d, c = _trace(u0[k], ud0[k], alpha[k], u_ic, u_oc, step, max_phi, hits[k])
        status[k] = s
        escape[k] = d
        counts[k] = c


@dataclass(frozen=True)
class ReferenceTrace:
    result: TraceResult
    terminal: Terminal
    # Every disc crossing along the ray, in order; TraceResult keeps them all.
    hit_phi: tuple[float, ...] = ()


def _split(delta):
    return delta <= 0.0, delta >= math.pi


def reference_trace(p_r: float, delta: float, alpha: float, u_ic: float, u_oc: float,
                    step: float = DEFAULT_STEP, max_phi: float = 8.0 * math.pi) -> ReferenceTrace:
    """Ground-truth counterpart of :func:`bhshader.tracer.trace_ray`.

    Intersections are reported in the same form as the tracer
    (``t_ret <= 0``, ``phi_hit`` = disc line angle modulo 2 pi), but all of them
    are kept, not just the first two.
    """
    batch = reference_trace_many(np.array([p_r]), np.array([delta]), np.array([alpha]),
                                 u_ic, u_oc, step=step, max_phi=max_phi)
    return batch[0]


def reference_trace_many(p_r, delta, alpha, u_ic, u_oc, step=DEFAULT_STEP,
                         max_phi=8.0 * math.pi, max_hits: int = 8) -> list[ReferenceTrace]:
    p_r, delta, alpha = (np.ascontiguousarray(np.ravel(x), dtype=float)
                         for x in np.broadcast_arrays(p_r, delta, alpha))
    u0 = 1.0 / p_r
    out_rad, in_rad = _split(delta)
    safe = np.where(out_rad | in_rad, 0.5 * math.pi, delta)
    ud0 = -u0 / np.tan(safe)
    n = p_r.size
    status = np.zeros(n, dtype=np.int64)
    escape = np.zeros(n)
    hits = np.zeros((n, max_hits, 3))
    counts = np.zeros(n, dtype=np.int64)
    _trace_many(u0, ud0, alpha, float(u_ic), float(u_oc), float(step), float(max_phi),
                status, escape, hits, counts)
    results = []
    for k in range(n):
        if out_rad[k]:
            results.append(ReferenceTrace(TraceResult(0.0), Terminal.ESCAPED_TO_INFINITY))
            continue
        if in_rad[k]:
            results.append(ReferenceTrace(TraceResult(CAPTURED), Terminal.PLUNGED_AT_HORIZON))
            continue
        terminal = _TERMINALS[status[k]]
        hs = tuple(
            DiscIntersection(-hits[k, i, 2], hits[k, i, 1], math.fmod(hits[k, i, 0], 2 * math.pi))
            for i in range(counts[k]))
        esc = escape[k] if terminal is Terminal.ESCAPED_TO_INFINITY else CAPTURED
        results.append(ReferenceTrace(TraceResult(esc, hs), terminal,
                                      tuple(hits[k, i, 0] for i in range(counts[k]))))
    return results


@numba.njit(cache=True)
def _from_infinity(e, targets_u, targets_phi, step, out_d, out_u):
    """Integrates a ray from infinity once and samples deflection/time at the
    requested inverse radii (incoming branch) and azimuths."""
    u, ud, t, phi = 0.0, e, 0.0, 0.0
    nu = targets_u.shape[0]
    nphi = targets_phi.shape[0]
    iu = 0
    ip = 0
    # The first step from u = 0 has an infinite time integrand; time is measured
    # from the first sample instead.
    started = False
    while iu < nu or ip < nphi:
        h = step
        if ip < nphi and phi + h >= targets_phi[ip]:
            h = targets_phi[ip] - phi
        un, udn, tn = _rk4(u, ud, t if started else 0.0, e, h)
        if not started:
            tn = 0.0
            started = True
        if un >= 1.0:
            break
        if un < 0.0:
            break
        while iu < nu and ud >= 0.0 and u < targets_u[iu] <= un:
            hh, uu, vv, tt = _root_in_step(u, ud, t, e, h, targets_u[iu])
            out_d[iu, 0] = tt
            out_d[iu, 1] = phi + hh - math.atan2(uu, vv)
            iu += 1
        if udn < 0.0 and iu < nu:
            # Past the apsis: remaining targets are unreachable.
            while iu < nu:
                out_d[iu, 0] = math.nan
                out_d[iu, 1] = math.nan
                iu += 1
        phi += h
        u, ud, t = un, udn, tn
        if ip < nphi and phi >= targets_phi[ip]:
            out_u[ip, 0] = t
            out_u[ip, 1] = u
            ip += 1


def ray_from_infinity(e: float, u_targets=(), phi_targets=(), step: float = DEFAULT_STEP):
    """Reference values for a ray arriving from infinity with constant ``e``.

    Returns ``(d, w)``: ``d[k] = (t, deflection)`` at ``u_targets[k]`` on the
    incoming branch and ``w[k] = (t, u)`` at ``phi_targets[k]``. Both target
    lists must be sorted. Times are coordinate times measured from the first
    integration step (only differences are meaningful).
    """
    ut = np.ascontiguousarray(u_targets, dtype=float)
    pt = np.ascontiguousarray(phi_targets, dtype=float)
    d = np.full((ut.size, 2), np.nan)
    w = np.full((pt.size, 2), np.nan)
    _from_infinity(float(e), ut, pt, float(step), d, w)
    return d, w


def deflection(e: float, u: float, step: float = DEFAULT_STEP) -> float:
    """Reference deflection of a ray from infinity when it reaches ``u``."""
    d, _ = ray_from_infinity(e, [u], [], step)
    return float(d[0, 1])


def inverse_radius(e: float, phi: float, step: float = DEFAULT_STEP) -> float:
    _, w = ray_from_infinity(e, [], [phi], step)
    return float(w[0, 1])


def total_deflection(e: float, step: float = DEFAULT_STEP) -> float:
    """Total bending ``2 * deflection(apsis)`` of a scattering ray."""
    path = integrate(0.0, e, step, max_phi=4.0 * math.pi)
    if path.terminal is not Terminal.ESCAPED_TO_INFINITY:
        raise ValueError("ray does not escape")
    return float(path.phi[-1] - math.pi)
