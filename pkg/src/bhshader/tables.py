"""Precomputed deflection and inverse-radius tables for rays coming from infinity.

``D(e, u)`` stores ``(t, deflection)`` and ``U(e, phi)`` stores ``(t, u)``. Both
are indexed by non-linear texel coordinates in [0, 1]^2 which concentrate
samples near the photon-sphere separatrix ``e^2 = mu``.

Stored times are regularized: ``T = t + 1/u - ln(u)`` removes the divergence
of the coordinate time of a ray arriving from infinity. Use
:func:`coordinate_time` to convert two stored times back into a difference of
coordinate times.
"""
from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .geodesic import MU, DomainError, apsis_array

SQRT_2_3 = math.sqrt(2.0 / 3.0)
SQRT_1_3 = math.sqrt(1.0 / 3.0)
LOG_SCALE = 50.0

SENTINEL = -np.finfo(np.float32).max

MAGIC = b"BHT1"
VERSION = 1
HEADER = struct.Struct("<4sHHIIdII")
TABLE_D, TABLE_U, TABLE_COLOR = 1, 2, 3


class TableFormatError(ValueError):
    pass


class DimensionMismatchError(TableFormatError):
    pass


# -- texel mappings ---------------------------------------------------------

def _as_float(x):
    return np.asarray(x, dtype=float)


def map_d(e, u):
    """(e, u) -> texel coordinates of the deflection table."""
    e, u = np.broadcast_arrays(_as_float(e), _as_float(u))
    e2 = e * e
    scatter = e2 < MU
    if np.any(u < 0) or np.any(u >= 1):
        raise DomainError("u outside [0, 1)")
    ua = apsis_array(np.where(scatter, e2, 0.0))
    if np.any(scatter & (u > ua * (1 + 1e-12))):
        raise DomainError("u beyond the apsis of a scattering ray")
    with np.errstate(divide="ignore", invalid="ignore"):
        s_in = 0.5 - np.sqrt(-np.log1p(-e2 / MU) / LOG_SCALE)
        s_out = 0.5 + np.sqrt(-np.log1p(-MU / e2) / LOG_SCALE)
        ratio = np.where(ua > 0, u / np.where(ua > 0, ua, 1.0), 0.0)
        t_in = 1.0 - np.sqrt(np.clip(1.0 - ratio, 0.0, None))
    du = u - 2.0 / 3.0
    t_out = (SQRT_2_3 + np.sign(du) * np.sqrt(np.abs(du))) / (SQRT_2_3 + SQRT_1_3)
    s = np.where(scatter, s_in, s_out)
    t = np.where(scatter, t_in, t_out)
    return s, t


def unmap_d(s, t):
    """Inverse of :func:`map_d`. ``s = 1/2`` is ambiguous (e = 0 or e = inf);
    it is read as e = 0."""
    s, t = np.broadcast_arrays(_as_float(s), _as_float(t))
    left = s <= 0.5
    x = LOG_SCALE * (s - 0.5) ** 2
    with np.errstate(divide="ignore", over="ignore"):
        e2 = np.where(left, -MU * np.expm1(-x), MU / -np.expm1(-x))
    e = np.sqrt(e2)
    ua = apsis_array(np.where(left, e2, 0.0))
    u_in = ua * (1.0 - (1.0 - t) ** 2)
    w = t * (SQRT_2_3 + SQRT_1_3) - SQRT_2_3
    u_out = 2.0 / 3.0 + np.sign(w) * w * w
    return e, np.where(left, u_in, u_out)


def map_u(e, phi):
    e, phi = np.broadcast_arrays(_as_float(e), _as_float(phi))
    s = 1.0 / (1.0 + 6.0 * e * e)
    t = phi / 3.0 * (1.0 + 6.0 * e * e * e) / (1.0 + e * e)
    return s, t


def unmap_u(s, t):
    s, t = np.broadcast_arrays(_as_float(s), _as_float(t))
    e = np.sqrt((1.0 / s - 1.0) / 6.0)
    phi = 3.0 * t * (1.0 + e * e) / (1.0 + 6.0 * e ** 3)
    return e, phi


def texel_centers(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def regularizer(u):
    """The part of the coordinate time that diverges for rays from infinity."""
    u = _as_float(u)
    return 1.0 / u - np.log(u)


def coordinate_time(t_stored, u):
    """Coordinate time (up to a per-ray constant) from a stored time at ``u``."""
    return _as_float(t_stored) - regularizer(u)


# -- precomputation kernels -------------------------------------------------

@numba.njit(cache=True)
def _reg(u):
    return 1.0 / u - math.log(u)


@numba.njit(cache=True)
def _time_step(e, eps, u, u_next):
    # Geometric-mean quadrature of e/(u^2(1-u)); the 1/u term then telescopes
    # exactly against the regularizer, keeping stored times O(1).
    if u <= 0.0 or u_next <= 0.0 or u_next >= 1.0:
        return 0.0
    dt = e * eps / (u * u_next * (1.0 - 0.5 * (u + u_next)))
    return dt + (_reg(u_next) - _reg(u))


@numba.njit(cache=True)
def _apsis(e2):
    x = 2.0 * e2 / MU - 1.0
    if x > 1.0:
        x = 1.0
    return 1.0 / 3.0 + 2.0 / 3.0 * math.sin(math.asin(x) / 3.0)


@numba.njit(cache=True)
def _fill_d_column(e2, eps, u_rows, out):
    """Euler integration of one ray from infinity; writes (T, deflection) at the
    requested u rows while the ray moves inward."""
    e = math.sqrt(e2)
    scatter = e2 < MU
    n = u_rows.shape[0]
    j = 0
    u, ud, phi, t = 0.0, e, 0.0, 0.0
    while j < n and u < 1.0 and ud >= 0.0:
        ud_n = ud + (1.5 * u * u - u) * eps
        u_n = u + ud_n * eps
        phi_n = phi + eps
        t_n = t + _time_step(e, eps, u, u_n)
        defl = phi - math.atan2(u, ud)
        if ud_n < 0.0 and scatter:
            # Turning point between the two samples: close the column at the apsis.
            f = ud / (ud - ud_n)
            ua = max(_apsis(e2), u)
            phi_a = phi + f * eps
            t_a = t + f * (t_n - t)
            defl_a = phi_a - 0.5 * math.pi
            while j < n:
                uj = u_rows[j]
                if uj <= u:
                    g = 0.0
                elif ua > u:
                    g = min((uj - u) / (ua - u), 1.0)
                else:
                    g = 1.0
                out[j, 0] = t + g * (t_a - t)
                out[j, 1] = defl + g * (defl_a - defl)
                j += 1
            break
        defl_n = phi_n - math.atan2(u_n, ud_n)
        while j < n and u_rows[j] <= u_n:
            g = (u_rows[j] - u) / (u_n - u) if u_n > u else 1.0
            if u_n >= 1.0:
                out[j, 0] = t
            else:
                out[j, 0] = t + g * (t_n - t)
            out[j, 1] = defl + g * (defl_n - defl)
            j += 1
        u, ud, phi, t = u_n, ud_n, phi_n, t_n


@numba.njit(cache=True)
def _fill_u_column(e2, eps, phi_rows, out):
    """Euler integration of one ray from infinity; writes (T, u) at the requested
    phi rows for phi < pi."""
    e = math.sqrt(e2)
    n = phi_rows.shape[0]
    j = 0
    u, ud, phi, t = 0.0, e, 0.0, 0.0
    while j < n and phi_rows[j] <= 0.0:
        out[j, 0] = 0.0
        out[j, 1] = 0.0
        j += 1
    while j < n and u < 1.0 and phi < math.pi:
        ud_n = ud + (1.5 * u * u - u) * eps
        u_n = u + ud_n * eps
        phi_n = phi + eps
        t_n = t + _time_step(e, eps, u, u_n)
        while j < n and phi_rows[j] <= phi_n and phi_rows[j] < math.pi:
            if u_n >= 1.0:
                break
            g = (phi_rows[j] - phi) / eps
            out[j, 0] = t + g * (t_n - t)
            out[j, 1] = u + g * (u_n - u)
            j += 1
        u, ud, phi, t = u_n, ud_n, phi_n, t_n


@numba.njit(cache=True)
def _precompute_d(e2_cols, eps, u_grid, out):
    for i in range(e2_cols.shape[0]):
        _fill_d_column(e2_cols[i], eps, u_grid[:, i], out[:, i, :])


@numba.njit(cache=True)
def _precompute_u(e2_cols, eps, phi_grid, out):
    for i in range(e2_cols.shape[0]):
        _fill_u_column(e2_cols[i], eps, phi_grid[:, i], out[:, i, :])


# -- tables -----------------------------------------------------------------

def fill_columns(data: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Replace invalid texels (in place) by the nearest valid texel of the same
    column; each column holds a single ray."""
    rows = np.arange(data.shape[0])
    for i in range(data.shape[1]):
        ok = np.flatnonzero(valid[:, i])
        if ok.size == 0 or ok.size == data.shape[0]:
            continue
        pos = np.searchsorted(ok, rows).clip(1, max(ok.size - 1, 1))
        lo, hi = ok[pos - 1], ok[np.minimum(pos, ok.size - 1)]
        nearest = np.where(np.abs(rows - lo) <= np.abs(hi - rows), lo, hi)
        data[:, i] = data[nearest, i]
    return data


@dataclass(frozen=True, eq=False)
class Table:
    """A width x height grid of float32 pairs; ``data[j, i]`` is the texel at
    column ``i`` (first texel coordinate) and row ``j`` (second)."""

    table_id: int
    data: np.ndarray
    epsilon: float = 0.0
    _filled: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def valid(self) -> np.ndarray:
        return self.data[..., 0] != SENTINEL

    def filled(self) -> np.ndarray:
        """Data with each sentinel texel replaced by the nearest valid texel of
        its column (as float64)."""
        if "data" not in self._filled:
            self._filled["data"] = fill_columns(self.data.astype(np.float64), self.valid())
        return self._filled["data"]

    def texel(self, i: int, j: int) -> tuple[float, float]:
        return tuple(float(x) for x in self.data[j, i])


@dataclass(frozen=True, eq=False)
class GeodesicTables:
    deflection: Table
    inverse_radius: Table

    @property
    def epsilon(self) -> float:
        return self.deflection.epsilon


def precompute_deflection(epsilon: float = 1e-5, size=(512, 512)) -> Table:
    width, height = size
    s = texel_centers(width)
    t = texel_centers(height)
    e_cols, _ = unmap_d(s, 0.0)
    # unmap_d reads s = 1/2 as e = 0; right-half columns never sit exactly there.
    e2 = e_cols ** 2
    ss, tt = np.meshgrid(s, t)
    _, u_grid = unmap_d(ss, tt)
    out = np.full((height, width, 2), SENTINEL, dtype=np.float64)
    _precompute_d(e2, epsilon, np.ascontiguousarray(u_grid), out)
    return Table(TABLE_D, _to_f32(out), epsilon)


def precompute_inverse_radius(epsilon: float = 1e-5, size=(64, 32)) -> Table:
    width, height = size
    s = texel_centers(width)
    t = texel_centers(height)
    e_cols, _ = unmap_u(s, 0.0)
    ss, tt = np.meshgrid(s, t)
    _, phi_grid = unmap_u(ss, tt)
    out = np.full((height, width, 2), SENTINEL, dtype=np.float64)
    _precompute_u(e_cols ** 2, epsilon, np.ascontiguousarray(phi_grid), out)
    return Table(TABLE_U, _to_f32(out), epsilon)


def _to_f32(out: np.ndarray) -> np.ndarray:
    sentinel = out[..., 0] == SENTINEL
    data = out.astype(np.float32)
    data[sentinel] = SENTINEL
    return data


def precompute(epsilon: float = 1e-5, d_dims=(512, 512), u_dims=(64, 32)) -> GeodesicTables:
    if not 0.0 < epsilon <= 1e-3:
        raise ValueError("epsilon must be in (0, 1e-3]")
    if min(d_dims) < 2 or min(u_dims) < 2:
        raise ValueError("tables need at least 2x2 texels")
    return GeodesicTables(precompute_deflection(epsilon, d_dims),
                          precompute_inverse_radius(epsilon, u_dims))


# -- lookups ----------------------------------------------------------------

# -- lookups ------------------------------------------------------------------
#
# Scalar kernels shared by the vectorized wrappers below and by the tracer.
# Texel centers sit at integer continuous coordinates. Times are interpolated
# after multiplication by _uscale(e) (and U's inverse radius after division by
# it): for small e, e*T ~ tan(phi/2) and u/e ~ sin(phi) are smooth while T and
# u vary like 1/sqrt(1 - s) and sqrt(1 - s) across columns.

@numba.njit(cache=True)
def _uscale(e):
    if e > 1e150:
        return 1.0
    return e / math.sqrt(1.0 + e * e)


@numba.njit(cache=True)
def _map_d1(e, u):
    e2 = e * e
    return _map_d1a(e, u, _apsis(e2) if e2 < MU else 0.0)


@numba.njit(cache=True)
def _map_d_column(e):
    """Column coordinate of D; it depends on e only."""
    e2 = e * e
    if e2 < MU:
        arg = 1.0 - e2 / MU
        return 0.5 - math.sqrt(-math.log(arg) / LOG_SCALE) if arg > 0.0 else -1e30
    arg = 1.0 - MU / e2
    return 0.5 + math.sqrt(-math.log(arg) / LOG_SCALE) if arg > 0.0 else 1e30


@numba.njit(cache=True)
def _map_d1a(e, u, ua):
    """_map_d1 with the apsis ``ua`` of scattering rays supplied."""
    return _map_d_row(e, _map_d_column(e), u, ua)


@numba.njit(cache=True)
def _map_d_row(e, s, u, ua):
    """(s, t) for D given the column coordinate ``s`` of e."""
    if e * e < MU:
        ratio = u / ua if ua > 0.0 else 0.0
        if ratio > 1.0:
            ratio = 1.0
        return s, 1.0 - math.sqrt(1.0 - ratio)
    du = u - 2.0 / 3.0
    root = math.sqrt(abs(du))
    if du < 0.0:
        root = -root
    return s, (SQRT_2_3 + root) / (SQRT_2_3 + SQRT_1_3)


@numba.njit(cache=True)
def _bilin(data, x, y, col_lo, col_hi, extrapolate_top):
    """Bilinear fetch of both channels. Below the first row the result is
    blended toward the exact zero both tables hold at t = 0 (ray at infinity);
    with ``extrapolate_top`` the last row-to-row slope continues half a texel
    beyond the last row center (up to t = 1)."""
    h = data.shape[0]
    y_raw = y
    x = min(max(x, col_lo), col_hi)
    y = min(max(y, 0.0), h - 1.0)
    i0 = int(math.floor(x))
    j0 = int(math.floor(y))
    i1 = min(i0 + 1, col_hi)
    j1 = min(j0 + 1, h - 1)
    fx = x - i0
    fy = y - j0
    edge = min(max((y_raw + 0.5) / 0.5, 0.0), 1.0)
    over = min(max(y_raw - (h - 1), 0.0), 0.5) if extrapolate_top else 0.0
    out0 = 0.0
    out1 = 0.0
    for c in range(2):
        a = data[j0, i0, c] * (1 - fx) + data[j0, i1, c] * fx
        b = data[j1, i0, c] * (1 - fx) + data[j1, i1, c] * fx
        v = (a * (1 - fy) + b * fy) * edge
        if over > 0.0:
            prev = data[h - 2, i0, c] * (1 - fx) + data[h - 2, i1, c] * fx
            v += over * (b - prev)
        if c == 0:
            out0 = v
        else:
            out1 = v
    return out0, out1


@numba.njit(cache=True)
def _lookup_d1(data, e, u):
    """(T, deflection) from scaled D data; u is clamped to the apsis."""
    e2 = e * e
    return _lookup_d1a(data, e, u, _apsis(e2) if e2 < MU else 0.0)


@numba.njit(cache=True)
def _lookup_d1a(data, e, u, ua):
    """_lookup_d1 with the apsis ``ua`` of scattering rays supplied."""
    return _lookup_d1s(data, e, _map_d_column(e), u, ua)


@numba.njit(cache=True)
def _lookup_d1s(data, e, s, u, ua):
    """_lookup_d1a with the column coordinate ``s`` of e supplied, so that
    several lookups along one ray share it."""
    h, w = data.shape[0], data.shape[1]
    half = w // 2
    left = e * e < MU
    if left and u > ua:
        u = ua
    s, t = _map_d_row(e, s, u, ua)
    x = s * w - 0.5
    y = t * h - 0.5
    if left:
        tt, dl = _bilin(data, x, y, 0, half - 1, True)
    else:
        tt, dl = _bilin(data, x, y, half, w - 1, True)
    k = _uscale(e)
    tt = tt / k if k > 0.0 else 0.0
    # Seam band: blend toward the exact e -> 0 / e -> inf limits.
    if left and x > half - 1:
        g = min((x - (half - 1)) / 0.5, 1.0)
        dl *= 1.0 - g
    elif not left and x < half:
        g = min((half - x) / 0.5, 1.0)
        dl *= 1.0 - g
        # Radial rays: T = -ln(1 - u) exactly.
        tt = tt * (1.0 - g) - g * math.log1p(-u)
    return tt, dl


@numba.njit(cache=True)
def _phi_reg(e, phi):
    """Divergent part of minus the coordinate time on the ray from infinity,
    as a function of (e, phi): flat-space u = e sin(phi) gives
    t ~ -cot(phi)/e + ln(2e tan(phi/2)) up to a constant."""
    half = math.tan(0.5 * phi)
    # cot(phi) from the half-angle tangent saves a second tangent.
    return (1.0 - half * half) / (2.0 * e * half) - math.log(2.0 * e * half)


@numba.njit(cache=True)
def _lookup_u1(data, e, phi):
    """(coordinate time, u) from scaled U data.

    The time channel holds (t + _phi_reg) times the column scale, so the
    divergent part is removed at the exact query (e, phi) and never evaluated
    at an interpolated u.
    """
    h, w = data.shape[0], data.shape[1]
    s = 1.0 / (1.0 + 6.0 * e * e)
    t = phi / 3.0 * (1.0 + 6.0 * e * e * e) / (1.0 + e * e)
    x = s * w - 0.5
    tt, us = _bilin(data, x, t * h - 0.5, 0, w - 1, False)
    if e <= 0.0 or phi <= 0.0:
        return 0.0, 0.0
    if x < 0.0:
        # Before the first column center, blend toward the exact e -> inf
        # limit (s = 0): a radial ray, with u = t/2.
        g = min(-x / 0.5, 1.0)
        e_first = math.sqrt((2.0 * w - 1.0) / 6.0)
        k_first = _uscale(e_first)
        phi_first = 3.0 * t * (1.0 + e_first ** 2) / (1.0 + 6.0 * e_first ** 3)
        t_first = tt / k_first - _phi_reg(e_first, phi_first)
        u_inf = min(0.5 * t, 0.5)
        t_inf = -math.log1p(-u_inf) - _reg(u_inf)
        return (1 - g) * t_first + g * t_inf, (1 - g) * us * k_first + g * u_inf
    k = _uscale(e)
    return tt / k - _phi_reg(e, phi), us * k


@numba.njit(cache=True)
def _lookup_d_many(data, e, u, out_t, out_v):
    for i in range(e.size):
        out_t[i], out_v[i] = _lookup_d1(data, e[i], u[i])


@numba.njit(cache=True)
def _lookup_u_many(data, e, phi, out_t, out_v):
    for i in range(e.size):
        out_t[i], out_v[i] = _lookup_u1(data, e[i], phi[i])


def _run_lookup(kernel, data, a, b):
    a, b = np.broadcast_arrays(a, b)
    shape = a.shape
    a = np.ascontiguousarray(a, dtype=float).ravel()
    b = np.ascontiguousarray(b, dtype=float).ravel()
    out_t = np.empty_like(a)
    out_v = np.empty_like(a)
    kernel(data, a, b, out_t, out_v)
    return out_t.reshape(shape), out_v.reshape(shape)


def lookup_d(table: Table, e, u, *, check: bool = True):
    """Bilinear ``(T, deflection)`` at (e, u). Arrays broadcast.

    The two halves of the texture (e^2 < mu and e^2 > mu) are never blended.
    Between the last column of each half and the seam at s = 1/2 the deflection
    is interpolated toward its exact limit 0 (e -> 0 or e -> infinity). With
    ``check=False`` out-of-domain u is clamped to the apsis instead of raising.
    """
    e = np.abs(_as_float(e))
    u = _as_float(u)
    if check:
        map_d(e, u)
    return _run_lookup(_lookup_d_many, _scaled_d(table), e, u)


def lookup_u(table: Table, e, phi):
    """Bilinear ``(T, u)`` at (e, phi), phi in [0, pi). ``T`` is regularized
    like the stored times, so ``coordinate_time(T, u)`` is the interpolated
    coordinate time."""
    e = np.abs(_as_float(e))
    phi = _as_float(phi)
    if np.any(phi < 0) or np.any(phi >= math.pi):
        raise DomainError("phi outside [0, pi)")
    t, u = _run_lookup(_lookup_u_many, _scaled_u(table), e, phi)
    with np.errstate(divide="ignore"):
        return np.where(u > 0, t + regularizer(np.where(u > 0, u, 1.0)), 0.0), u


def _u_scale(e):
    """~e for small e, ~1 for large e."""
    return e / np.sqrt(1.0 + e * e)


def _scaled_u(table: Table) -> np.ndarray:
    """U data as (t + _phi_reg) times, and u divided by, the column's ``_u_scale``."""
    if "scaled" not in table._filled:
        s = texel_centers(table.width)
        e_grid, phi_grid = unmap_u(*np.meshgrid(s, texel_centers(table.height)))
        valid = table.valid()
        raw = table.data.astype(np.float64)
        u = np.where(valid, raw[..., 1], 0.5)
        reg = 1.0 / (e_grid * np.tan(phi_grid)) - np.log(2.0 * e_grid * np.tan(0.5 * phi_grid))
        data = np.empty_like(raw)
        data[..., 0] = raw[..., 0] - regularizer(u) + reg
        data[..., 1] = raw[..., 1]
        data = fill_columns(data, valid)
        k = _u_scale(e_grid[0])
        data[..., 0] *= k
        data[..., 1] /= k
        table._filled["scaled"] = np.ascontiguousarray(data)
    return table._filled["scaled"]


def _scaled_d(table: Table) -> np.ndarray:
    """D data with T multiplied by the column's ``_u_scale``."""
    if "scaled" not in table._filled:
        data = table.filled().copy()
        e_cols, _ = unmap_d(texel_centers(table.width), 0.0)
        with np.errstate(invalid="ignore"):
            k = np.where(np.isinf(e_cols), 1.0, _u_scale(e_cols))
        data[..., 0] *= k
        table._filled["scaled"] = np.ascontiguousarray(data)
    return table._filled["scaled"]


# -- serialization ----------------------------------------------------------

def _block_bytes(table_id: int, data: np.ndarray, epsilon: float, depth: int = 1,
                 extra: bytes = b"") -> bytes:
    height, width = data.shape[-3], data.shape[-2]
    payload = extra + np.ascontiguousarray(data, dtype="<f4").tobytes()
    check = zlib.crc32(struct.pack("<II", width, height) + payload)
    return HEADER.pack(MAGIC, VERSION, table_id, width, height, epsilon, check, depth) + payload


def _read_block(buf: memoryview, offset: int, channels: int, extra_size: int = 0):
    if len(buf) - offset < HEADER.size:
        raise TableFormatError("truncated header")
    magic, version, table_id, width, height, eps, check, depth = HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise TableFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TableFormatError(f"unsupported version {version}")
    if width < 1 or height < 1 or depth < 1:
        raise TableFormatError("bad dimensions")
    count = width * height * depth * channels
    start = offset + HEADER.size
    end = start + extra_size + 4 * count
    if len(buf) < end:
        raise TableFormatError("truncated payload")
    payload = bytes(buf[start:end])
    if zlib.crc32(struct.pack("<II", width, height) + payload) != check:
        if zlib.crc32(struct.pack("<II", height, width) + payload) == check:
            raise DimensionMismatchError(
                f"header dims {width}x{height} do not match the stored grid")
        raise TableFormatError("checksum mismatch")
    extra = payload[:extra_size]
    arr = np.frombuffer(payload[extra_size:], dtype="<f4").astype(np.float32)
    shape = (height, width, channels) if depth == 1 else (depth, height, width, channels)
    return table_id, arr.reshape(shape), eps, extra, end


def save(tables: GeodesicTables, path) -> None:
    blob = b"".join(
        _block_bytes(t.table_id, t.data, t.epsilon)
        for t in (tables.deflection, tables.inverse_radius))
    Path(path).write_bytes(blob)


def load(path) -> GeodesicTables:
    buf = memoryview(Path(path).read_bytes())
    tid_d, data_d, eps_d, _, off = _read_block(buf, 0, 2)
    tid_u, data_u, eps_u, _, off = _read_block(buf, off, 2)
    if (tid_d, tid_u) != (TABLE_D, TABLE_U):
        raise TableFormatError(f"unexpected table ids {(tid_d, tid_u)}")
    if off != len(buf):
        raise TableFormatError("trailing bytes after tables")
    return GeodesicTables(Table(TABLE_D, data_d, eps_d), Table(TABLE_U, data_u, eps_u))
