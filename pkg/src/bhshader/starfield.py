"""Star cubemap with sum-semantics mips, footprint gather filter, and an
extended-source cubemap.

Faces are indexed +x, -x, +y, -y, +z, -z. On a face with outward normal N
and in-plane axes (R, H), a direction d maps to U = d.R / d.N and
V = d.H / d.N, both in [-1, 1]. Texel (i, j) of a level with n texels per
side covers U in [2i/n - 1, 2(i+1)/n - 1] and likewise for V with j.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .geodesic import DomainError
from .spectra import blackbody_xy

NORMALS = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
                   dtype=np.float64)
RIGHTS = np.array([[0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1], [1, 0, 0], [-1, 0, 0]],
                  dtype=np.float64)
UPS = np.array([[0, 0, 1], [0, 0, 1], [1, 0, 0], [1, 0, 0], [0, 1, 0], [0, 1, 0]],
               dtype=np.float64)

MAX_FOOTPRINT_TEXELS = 9
MAX_ANISOTROPY = 16
STARMAP_MAGIC = b"BHSM"
_SM_HEADER = struct.Struct("<4sIII")


class InvalidBeamError(DomainError):
    pass


# --- catalog ---------------------------------------------------------------

@dataclass(frozen=True)
class StarCatalog:
    directions: np.ndarray  # (n, 3) unit vectors
    intensity: np.ndarray  # (n,) > 0
    xy: np.ndarray  # (n, 2) chromaticity

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=float).reshape(-1, 3)
        i = np.asarray(self.intensity, dtype=float).reshape(-1)
        c = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        if not len(d) == len(i) == len(c):
            raise ValueError("catalog columns differ in length")
        if len(d) and np.max(np.abs(np.linalg.norm(d, axis=1) - 1.0)) > 1e-6:
            raise ValueError("star directions must be unit vectors")
        if np.any(~(i > 0)):
            raise ValueError("star intensities must be positive")
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "intensity", i)
        object.__setattr__(self, "xy", c)

    def __len__(self) -> int:
        return len(self.intensity)

    def xyz(self) -> np.ndarray:
        """Per-star XYZ with X + Y + Z equal to the intensity."""
        x, y = self.xy[:, 0], self.xy[:, 1]
        return self.intensity[:, None] * np.stack([x, y, 1.0 - x - y], axis=1)

    def total_intensity(self) -> float:
        return float(self.intensity.sum())


def generate_catalog(seed: int, count: int, slope: float = 2.5, i_min: float = 1.0,
                     t_range=(3000.0, 20000.0)) -> StarCatalog:
    """Isotropic procedural catalog with intensity density proportional to
    I^-slope above ``i_min`` and log-uniform black-body temperatures."""
    if count < 0:
        raise ValueError("count must be >= 0")
    if not slope > 1.0:
        raise ValueError("power-law slope must exceed 1")
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(count, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    # 1 - uniform lies in (0, 1], which keeps intensities finite.
    intensity = i_min * (1.0 - rng.random(count)) ** (-1.0 / (slope - 1.0))
    temp = np.exp(rng.uniform(math.log(t_range[0]), math.log(t_range[1]), count))
    return StarCatalog(d, intensity, blackbody_xy(temp).reshape(-1, 2))


def fit_power_law_slope(intensity, i_min: float) -> float:
    """Maximum likelihood slope of a continuous power law above ``i_min``."""
    i = np.asarray(intensity, dtype=float)
    i = i[i >= i_min]
    return 1.0 + len(i) / float(np.sum(np.log(i / i_min)))


def save_catalog(catalog: StarCatalog, path) -> None:
    rows = np.column_stack([catalog.directions, catalog.intensity, catalog.xy])
    np.savetxt(path, rows, fmt="%.17g", header="dir_x dir_y dir_z intensity x y")


def load_catalog(path) -> StarCatalog:
    rows = np.loadtxt(path, ndmin=2, comments="#")
    if rows.size == 0:
        return StarCatalog(np.zeros((0, 3)), np.zeros(0), np.zeros((0, 2)))
    if rows.shape[1] != 6:
        raise ValueError(f"{path}: expected 6 columns, got {rows.shape[1]}")
    return StarCatalog(rows[:, :3], rows[:, 3], rows[:, 4:])


# --- face geometry -----------------------------------------------------------

def face_of(d) -> np.ndarray:
    """Face index by dominant axis (first axis wins ties)."""
    d = np.asarray(d, dtype=float)
    ax = np.argmax(np.abs(d), axis=-1)
    comp = np.take_along_axis(d, ax[..., None], axis=-1)[..., 0]
    return 2 * ax + (comp < 0)


def project(d, face) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(d, dtype=float)
    m = np.sum(d * NORMALS[face], axis=-1)
    return np.sum(d * RIGHTS[face], axis=-1) / m, np.sum(d * UPS[face], axis=-1) / m


def face_direction(face, u, v) -> np.ndarray:
    """Unnormalized direction of face point (u, v)."""
    u = np.asarray(u, dtype=float)[..., None]
    v = np.asarray(v, dtype=float)[..., None]
    return NORMALS[face] + u * RIGHTS[face] + v * UPS[face]


@numba.njit(cache=True)
def _face1(x, y, z):
    ax, best = 0, abs(x)
    if abs(y) > best:
        ax, best = 1, abs(y)
    if abs(z) > best:
        ax = 2
    comp = x if ax == 0 else (y if ax == 1 else z)
    return 2 * ax + (1 if comp < 0 else 0)


@numba.njit(cache=True)
def _dot(m, f, x, y, z):
    return m[f, 0] * x + m[f, 1] * y + m[f, 2] * z


# --- star map ----------------------------------------------------------------

@dataclass(frozen=True)
class StarMap:
    """Six faces times a mip chain. Level l holds 6 * n_l^2 texels stored
    contiguously from ``offsets[l]``; a texel carries an XYZ sum and the
    in-texel position (w, h) of its luminosity-weighted star."""

    face_size: int
    color: np.ndarray  # (N, 3) float64
    position: np.ndarray  # (N, 2) float64
    offsets: np.ndarray  # (levels + 1,) int64

    @property
    def levels(self) -> int:
        return len(self.offsets) - 1

    def level_size(self, level: int) -> int:
        return self.face_size >> level

    def level_color(self, level: int) -> np.ndarray:
        n = self.level_size(level)
        return self.color[self.offsets[level]:self.offsets[level + 1]].reshape(6, n, n, 3)

    def level_position(self, level: int) -> np.ndarray:
        n = self.level_size(level)
        return self.position[self.offsets[level]:self.offsets[level + 1]].reshape(6, n, n, 2)


def _hash_position(xyz: np.ndarray) -> np.ndarray:
    """Pseudo-random in-texel position derived from the color alone."""
    a = np.sin(xyz @ np.array([12.9898, 78.233, 37.719])) * 43758.5453
    b = np.sin(xyz @ np.array([93.989, 67.345, 11.135])) * 24634.6345
    return np.stack([a - np.floor(a), b - np.floor(b)], axis=-1)


def build_starmap(catalog: StarCatalog, face_size: int = 512,
                  hash_positions: bool = False) -> StarMap:
    if face_size < 1 or face_size & (face_size - 1):
        raise ValueError("face_size must be a power of two")
    n = face_size
    xyz = catalog.xyz()
    weight = catalog.intensity
    face = face_of(catalog.directions)
    u, v = project(catalog.directions, face)
    fx = (u + 1.0) * 0.5 * n
    fy = (v + 1.0) * 0.5 * n
    i = np.clip(np.floor(fx), 0, n - 1).astype(np.int64)
    j = np.clip(np.floor(fy), 0, n - 1).astype(np.int64)
    pos = np.stack([fx - i, fy - j], axis=1)
    pos = np.clip(pos, 0.0, np.nextafter(1.0, 0.0))
    idx = (face * n + j) * n + i
    size = 6 * n * n

    color = np.stack([np.bincount(idx, xyz[:, c], size) for c in range(3)], axis=1)
    wsum = np.bincount(idx, weight, size)
    safe = np.where(wsum > 0, wsum, 1.0)
    position = np.stack([np.bincount(idx, weight * pos[:, c], size) / safe for c in range(2)],
                        axis=1)
    position[wsum == 0] = 0.5
    if hash_positions:
        position = np.where((wsum > 0)[:, None], _hash_position(color), 0.5)

    colors, positions, weights = [color], [position], [wsum]
    while n > 1:
        c = colors[-1].reshape(6, n // 2, 2, n // 2, 2, 3)
        p = positions[-1].reshape(6, n // 2, 2, n // 2, 2, 2)
        w = weights[-1].reshape(6, n // 2, 2, n // 2, 2)
        # Child offsets inside the parent, in child texel units.
        off = np.zeros((1, 1, 2, 1, 2, 2))
        off[:, :, :, :, 1, 0] = 1.0
        off[:, :, 1, :, :, 1] = 1.0
        wp = np.sum(w[..., None] * (p + off) * 0.5, axis=(2, 4))
        w_up = w.sum(axis=(2, 4))
        n //= 2
        p_up = np.where(w_up[..., None] > 0, wp / np.where(w_up > 0, w_up, 1.0)[..., None], 0.5)
        colors.append(c.sum(axis=(2, 4)).reshape(-1, 3))
        positions.append(p_up.reshape(-1, 2))
        weights.append(w_up.reshape(-1))
    offsets = np.concatenate([[0], np.cumsum([len(c) for c in colors])]).astype(np.int64)
    return StarMap(face_size, np.ascontiguousarray(np.concatenate(colors)),
                   np.ascontiguousarray(np.concatenate(positions)), offsets)


def save_starmap(star_map: StarMap, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_SM_HEADER.pack(STARMAP_MAGIC, star_map.face_size, star_map.levels, 1))
        fh.write(star_map.color.astype("<f8").tobytes())
        fh.write(star_map.position.astype("<f8").tobytes())


def load_starmap(path) -> StarMap:
    buf = Path(path).read_bytes()
    magic, face_size, levels, _ = _SM_HEADER.unpack_from(buf, 0)
    if magic != STARMAP_MAGIC:
        raise ValueError(f"{path}: not a star map")
    sizes = [6 * (face_size >> k) ** 2 for k in range(levels)]
    total = sum(sizes)
    start = _SM_HEADER.size
    if len(buf) != start + total * 40:
        raise ValueError(f"{path}: truncated star map")
    color = np.frombuffer(buf, "<f8", total * 3, start).reshape(-1, 3).copy()
    position = np.frombuffer(buf, "<f8", total * 2, start + total * 24).reshape(-1, 2).copy()
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    return StarMap(face_size, color, position, offsets)


# --- footprint ---------------------------------------------------------------

@dataclass(frozen=True)
class Footprint:
    face: int
    center: tuple[float, float]  # (U, V)
    dw: tuple[float, float]  # d(U, V)/dw
    dh: tuple[float, float]  # d(U, V)/dh
    level: int
    # Relative change of the beam's normal component per unit w and h. The
    # beam covers the plane d + w dw_d + h dh_d, which maps to the face by a
    # perspective division; these two numbers carry that division.
    perspective: tuple[float, float] = (0.0, 0.0)


def footprint_arrays(d, dw_d, dh_d, face_size: int, levels: int, face=None):
    """Vectorized footprints: returns
    (face, U, V, dwU, dwV, dhU, dhV, perspective_w, perspective_h, level).

    A beam's tent support covers the parallelogram center +- dw +- dh, with
    each corner scaled by the perspective division; grown by one texel on
    each side it must fit into 9 texels per axis.
    """
    d = np.asarray(d, dtype=float)
    dw_d = np.asarray(dw_d, dtype=float)
    dh_d = np.asarray(dh_d, dtype=float)
    if face is None:
        face = face_of(d)
    face = np.broadcast_to(np.asarray(face, dtype=np.int64), d.shape[:-1])
    nrm, rgt, up = NORMALS[face], RIGHTS[face], UPS[face]
    m = np.sum(d * nrm, axis=-1)
    u = np.sum(d * rgt, axis=-1) / m
    v = np.sum(d * up, axis=-1) / m

    def deriv(dd):
        dm = np.sum(dd * nrm, axis=-1)
        return ((np.sum(dd * rgt, axis=-1) - u * dm) / m,
                (np.sum(dd * up, axis=-1) - v * dm) / m)

    dwu, dwv = deriv(dw_d)
    dhu, dhv = deriv(dh_d)
    pw = np.sum(dw_d * nrm, axis=-1) / m
    ph = np.sum(dh_d * nrm, axis=-1) / m
    # Support corners after the perspective division; a corner behind the
    # eye (q <= 0) makes the span unbounded.
    corner_u = np.zeros_like(u)
    corner_v = np.zeros_like(u)
    for sw in (-1.0, 1.0):
        for sh in (-1.0, 1.0):
            q = 1.0 + sw * pw + sh * ph
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = np.where(q > 0.0, 1.0 / q, np.inf)
            corner_u = np.maximum(corner_u, np.abs(sw * dwu + sh * dhu) * inv)
            corner_v = np.maximum(corner_v, np.abs(sw * dwv + sh * dhv) * inv)
    span = face_size * np.maximum(corner_u, corner_v)
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.log2(span / (MAX_FOOTPRINT_TEXELS - 2))
    level = np.where(span > MAX_FOOTPRINT_TEXELS - 2, np.ceil(need), 0.0)
    level = np.clip(np.nan_to_num(level, nan=levels - 1), 0, levels - 1).astype(np.int64)
    # Guard against ceil landing one short through rounding.
    short = span / 2.0 ** level > MAX_FOOTPRINT_TEXELS - 2
    level = np.where(short & (level < levels - 1), level + 1, level)
    return face, u, v, dwu, dwv, dhu, dhv, pw, ph, level


def footprint(d, dw_d, dh_d, star_map: StarMap, face: int | None = None) -> Footprint:
    d = np.asarray(d, dtype=float)
    if not np.all(np.isfinite(d)) or not np.linalg.norm(d) > 0:
        raise InvalidBeamError("beam direction is zero or not finite")
    if not (np.all(np.isfinite(dw_d)) and np.all(np.isfinite(dh_d))):
        raise InvalidBeamError("beam derivatives are not finite")
    f, u, v, dwu, dwv, dhu, dhv, pw, ph, level = footprint_arrays(
        d, dw_d, dh_d, star_map.face_size, star_map.levels, face)
    if float(np.sum(d * NORMALS[int(f)])) <= 0.0:
        raise InvalidBeamError("direction does not point into the requested face")
    return Footprint(int(f), (float(u), float(v)), (float(dwu), float(dwv)),
                     (float(dhu), float(dhv)), int(level), (float(pw), float(ph)))


def extended_texels(fp: Footprint, face_size: int) -> tuple[float, float]:
    """Extended footprint size in level-l texels along U and V."""
    n = face_size >> fp.level
    return (n * (abs(fp.dw[0]) + abs(fp.dh[0])) + 2.0,
            n * (abs(fp.dw[1]) + abs(fp.dh[1])) + 2.0)


def tent(x):
    return np.maximum(1.0 - np.abs(x), 0.0)


# --- gather --------------------------------------------------------------------

@numba.njit(cache=True)
def _accumulate(color, pos, idx, nl, i, j, face, sface, u0, v0, jac, out):
    """Add texel ``idx`` (cell (i, j) of face ``sface``) to ``out`` using the
    footprint centered at (u0, v0) on ``face``.

    ``jac`` holds (dwU, dwV, dhU, dhV, pw, ph). The star's screen offset
    (w, h) solves U(w, h) = U_star on the beam plane, which is face
    independent, so a footprint gives the same sum on either side of an edge.
    """
    c0 = color[idx, 0]
    c1 = color[idx, 1]
    c2 = color[idx, 2]
    if c0 == 0.0 and c1 == 0.0 and c2 == 0.0:
        return
    su = 2.0 * (i + pos[idx, 0]) / nl - 1.0
    sv = 2.0 * (j + pos[idx, 1]) / nl - 1.0
    if sface != face:
        x = NORMALS[sface, 0] + su * RIGHTS[sface, 0] + sv * UPS[sface, 0]
        y = NORMALS[sface, 1] + su * RIGHTS[sface, 1] + sv * UPS[sface, 1]
        z = NORMALS[sface, 2] + su * RIGHTS[sface, 2] + sv * UPS[sface, 2]
        m = _dot(NORMALS, face, x, y, z)
        if m <= 0.0:
            return
        su = _dot(RIGHTS, face, x, y, z) / m
        sv = _dot(UPS, face, x, y, z) / m
    du = su - u0
    dv = sv - v0
    m00 = jac[0] - du * jac[4]
    m01 = jac[2] - du * jac[5]
    m10 = jac[1] - dv * jac[4]
    m11 = jac[3] - dv * jac[5]
    det = m00 * m11 - m01 * m10
    if det == 0.0:
        return
    w = (m11 * du - m01 * dv) / det
    h = (m00 * dv - m10 * du) / det
    if 1.0 + w * jac[4] + h * jac[5] <= 0.0:
        return
    fw = 1.0 - abs(w)
    fh = 1.0 - abs(h)
    if fw <= 0.0 or fh <= 0.0:
        return
    g = fw * fh
    out[0] += g * c0
    out[1] += g * c1
    out[2] += g * c2


@numba.njit(cache=True)
def _gather1(color, pos, offsets, n0, face, u0, v0, a, b, c, d, pw, ph, level, out):
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    det = a * d - b * c
    if not (det != 0.0 and math.isfinite(det) and math.isfinite(u0) and math.isfinite(v0)
            and math.isfinite(pw) and math.isfinite(ph)):
        return
    jac = np.empty(6)
    jac[0] = a
    jac[1] = b
    jac[2] = c
    jac[3] = d
    jac[4] = pw
    jac[5] = ph
    nl = n0 >> level
    half = 0.5 * nl
    base = offsets[level]
    cx = (u0 + 1.0) * half
    cy = (v0 + 1.0) * half
    # Bounding box of the support corners after the perspective division.
    ex = 0.0
    ey = 0.0
    for sw in (-1.0, 1.0):
        for sh in (-1.0, 1.0):
            q = 1.0 + sw * pw + sh * ph
            if q <= 0.0:
                return
            ex = max(ex, abs(sw * a + sh * c) / q)
            ey = max(ey, abs(sw * b + sh * d) / q)
    # Beams straddling a discontinuity of the direction field can exceed the
    # coarsest level; the window never needs more than a face and a margin.
    ex = min(half * ex + 1.0, nl + 2.0)
    ey = min(half * ey + 1.0, nl + 2.0)
    i_lo = int(math.floor(cx - ex))
    i_hi = int(math.floor(cx + ex))
    j_lo = int(math.floor(cy - ey))
    j_hi = int(math.floor(cy + ey))
    for j in range(j_lo, j_hi + 1):
        for i in range(i_lo, i_hi + 1):
            if 0 <= i < nl and 0 <= j < nl:
                idx = base + (face * nl + j) * nl + i
                _accumulate(color, pos, idx, nl, i, j, face, face, u0, v0, jac, out)
                continue
            # Off-face cell: visit the neighbor-face texels whose centers fall in it.
            uc = (i + 0.5) / half - 1.0
            vc = (j + 0.5) / half - 1.0
            x = NORMALS[face, 0] + uc * RIGHTS[face, 0] + vc * UPS[face, 0]
            y = NORMALS[face, 1] + uc * RIGHTS[face, 1] + vc * UPS[face, 1]
            z = NORMALS[face, 2] + uc * RIGHTS[face, 2] + vc * UPS[face, 2]
            f2 = _face1(x, y, z)
            m2 = _dot(NORMALS, f2, x, y, z)
            i2 = int(math.floor((_dot(RIGHTS, f2, x, y, z) / m2 + 1.0) * half))
            j2 = int(math.floor((_dot(UPS, f2, x, y, z) / m2 + 1.0) * half))
            for dj in range(-2, 3):
                jj = j2 + dj
                if jj < 0 or jj >= nl:
                    continue
                for di in range(-2, 3):
                    ii = i2 + di
                    if ii < 0 or ii >= nl:
                        continue
                    cu = (ii + 0.5) / half - 1.0
                    cv = (jj + 0.5) / half - 1.0
                    x2 = NORMALS[f2, 0] + cu * RIGHTS[f2, 0] + cv * UPS[f2, 0]
                    y2 = NORMALS[f2, 1] + cu * RIGHTS[f2, 1] + cv * UPS[f2, 1]
                    z2 = NORMALS[f2, 2] + cu * RIGHTS[f2, 2] + cv * UPS[f2, 2]
                    m = _dot(NORMALS, face, x2, y2, z2)
                    if m <= 0.0:
                        continue
                    bi = int(math.floor((_dot(RIGHTS, face, x2, y2, z2) / m + 1.0) * half))
                    bj = int(math.floor((_dot(UPS, face, x2, y2, z2) / m + 1.0) * half))
                    if bi != i or bj != j:
                        continue
                    idx = base + (f2 * nl + jj) * nl + ii
                    _accumulate(color, pos, idx, nl, ii, jj, face, f2, u0, v0, jac, out)


@numba.njit(cache=True)
def _gather_many(color, pos, offsets, n0, face, u, v, a, b, c, d, pw, ph, level, out):
    for k in range(face.shape[0]):
        _gather1(color, pos, offsets, n0, face[k], u[k], v[k], a[k], b[k], c[k], d[k],
                 pw[k], ph[k], level[k], out[k])


def gather_stars(star_map: StarMap, fp: Footprint) -> np.ndarray:
    """Tent-weighted sum of the level-l stars under the footprint."""
    out = np.zeros(3)
    _gather1(star_map.color, star_map.position, star_map.offsets, star_map.face_size,
             fp.face, fp.center[0], fp.center[1], fp.dw[0], fp.dw[1], fp.dh[0], fp.dh[1],
             fp.perspective[0], fp.perspective[1], fp.level, out)
    return out


def gather_stars_many(star_map: StarMap, d, dw_d, dh_d) -> np.ndarray:
    """Gather for arrays of directions and screen derivatives (shape (..., 3)).

    Rows with non-finite input give zero.
    """
    d = np.asarray(d, dtype=float)
    shape = d.shape[:-1]
    d = d.reshape(-1, 3)
    dw_d = np.asarray(dw_d, dtype=float).reshape(-1, 3)
    dh_d = np.asarray(dh_d, dtype=float).reshape(-1, 3)
    ok = np.all(np.isfinite(d) & np.isfinite(dw_d) & np.isfinite(dh_d), axis=1)
    ok &= np.linalg.norm(d, axis=1) > 0
    safe = np.where(ok[:, None], d, [0.0, 0.0, 1.0])
    zero = np.zeros_like(safe)
    arrays = footprint_arrays(safe, np.where(ok[:, None], dw_d, zero),
                              np.where(ok[:, None], dh_d, zero),
                              star_map.face_size, star_map.levels)
    arrays = [np.ascontiguousarray(x) for x in arrays]
    out = np.zeros((len(safe), 3))
    _gather_many(star_map.color, star_map.position, star_map.offsets, star_map.face_size,
                 *arrays, out)
    out[~ok] = 0.0
    return out.reshape(shape + (3,))


# --- extended sources ---------------------------------------------------------

@dataclass(frozen=True)
class ExtendedMap:
    """Average-semantics cubemap of extended emission (radiance, XYZ)."""

    face_size: int
    data: np.ndarray  # (N, 3) all levels, same layout as StarMap
    offsets: np.ndarray
    cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def levels(self) -> int:
        return len(self.offsets) - 1

    def level_data(self, level: int) -> np.ndarray:
        n = self.face_size >> level
        return self.data[self.offsets[level]:self.offsets[level + 1]].reshape(6, n, n, 3)


def texel_directions(face_size: int) -> np.ndarray:
    """Unit directions of the texel centers, shape (6, n, n, 3)."""
    c = (np.arange(face_size) + 0.5) / face_size * 2.0 - 1.0
    v, u = np.meshgrid(c, c, indexing="ij")
    d = np.stack([face_direction(f, u, v) for f in range(6)])
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def build_extended(level0: np.ndarray) -> ExtendedMap:
    """Mip chain of 2x2 averages from a (6, n, n, 3) level-0 array."""
    level0 = np.asarray(level0, dtype=float)
    n = level0.shape[1]
    if level0.shape != (6, n, n, 3) or n & (n - 1):
        raise ValueError("extended map needs shape (6, n, n, 3) with n a power of two")
    levels = [level0]
    while n > 1:
        levels.append(levels[-1].reshape(6, n // 2, 2, n // 2, 2, 3).mean(axis=(2, 4)))
        n //= 2
    flat = [x.reshape(-1, 3) for x in levels]
    offsets = np.concatenate([[0], np.cumsum([len(x) for x in flat])]).astype(np.int64)
    return ExtendedMap(level0.shape[1], np.ascontiguousarray(np.concatenate(flat)), offsets)


def extended_from_function(func, face_size: int = 128) -> ExtendedMap:
    """Sample ``func(directions) -> XYZ`` at the texel centers."""
    return build_extended(func(texel_directions(face_size)))


def galaxy_map(face_size: int = 128, seed: int = 0, brightness: float = 0.02) -> ExtendedMap:
    """Procedural diffuse band (a stand-in for the Milky Way)."""
    rng = np.random.default_rng(seed)
    pole = rng.normal(size=3)
    pole /= np.linalg.norm(pole)
    waves = rng.normal(size=(6, 3)) * 3.0
    phases = rng.uniform(0.0, 2.0 * math.pi, 6)
    tint = np.array([0.95, 1.0, 0.9])

    def func(d):
        lat = d @ pole
        modulation = 1.0 + 0.35 * np.mean(np.cos(d @ waves.T + phases), axis=-1)
        value = brightness * np.exp(-(lat / 0.12) ** 2) * modulation
        return value[..., None] * tint

    return extended_from_function(func, face_size)


@numba.njit(cache=True)
def _texel(data, offsets, n0, face, i, j, level):
    """Texel (i, j) of ``face``; cells beyond the edge read the nearest
    texel of the face their center projects to."""
    nl = n0 >> level
    if not (0 <= i < nl and 0 <= j < nl):
        half = 0.5 * nl
        uc = (i + 0.5) / half - 1.0
        vc = (j + 0.5) / half - 1.0
        x = NORMALS[face, 0] + uc * RIGHTS[face, 0] + vc * UPS[face, 0]
        y = NORMALS[face, 1] + uc * RIGHTS[face, 1] + vc * UPS[face, 1]
        z = NORMALS[face, 2] + uc * RIGHTS[face, 2] + vc * UPS[face, 2]
        f2 = _face1(x, y, z)
        m = _dot(NORMALS, f2, x, y, z)
        i = min(max(int(math.floor((_dot(RIGHTS, f2, x, y, z) / m + 1.0) * half)), 0), nl - 1)
        j = min(max(int(math.floor((_dot(UPS, f2, x, y, z) / m + 1.0) * half)), 0), nl - 1)
        face = f2
    return offsets[level] + (face * nl + j) * nl + i


@numba.njit(cache=True)
def _bilinear(data, offsets, n0, face, u, v, level, out):
    nl = n0 >> level
    x = (u + 1.0) * 0.5 * nl - 0.5
    y = (v + 1.0) * 0.5 * nl - 0.5
    i0 = int(math.floor(x))
    j0 = int(math.floor(y))
    fx = x - i0
    fy = y - j0
    for dj in range(2):
        gy = fy if dj else 1.0 - fy
        for di in range(2):
            g = gy * (fx if di else 1.0 - fx)
            if g == 0.0:
                continue
            idx = _texel(data, offsets, n0, face, i0 + di, j0 + dj, level)
            for k in range(3):
                out[k] += g * data[idx, k]


@numba.njit(cache=True)
def _sample1(data, offsets, n0, levels, face, u, v, a, b, c, d, out):
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    if not (math.isfinite(u) and math.isfinite(v)):
        return
    half = 0.5 * n0
    la = half * math.hypot(a, b)
    lb = half * math.hypot(c, d)
    if la >= lb:
        major, minor, mu, mv = la, lb, a, b
    else:
        major, minor, mu, mv = lb, la, c, d
    count = 1
    if major > 0.0:
        ratio = major / max(minor, 1e-12)
        count = min(int(math.ceil(ratio - 1e-9)), MAX_ANISOTROPY)
        count = max(count, 1)
    width = major / count if major > 0.0 else 0.0
    lam = math.log2(width) if width > 1.0 else 0.0
    lam = min(lam, levels - 1.0)
    l0 = int(math.floor(lam))
    l1 = min(l0 + 1, levels - 1)
    t = lam - l0
    tmp = np.zeros(3)
    for s in range(count):
        off = (s + 0.5) / count - 0.5
        su = u + off * mu
        sv = v + off * mv
        tmp[:] = 0.0
        _bilinear(data, offsets, n0, face, su, sv, l0, tmp)
        for k in range(3):
            out[k] += (1.0 - t) * tmp[k] / count
        if t > 0.0:
            tmp[:] = 0.0
            _bilinear(data, offsets, n0, face, su, sv, l1, tmp)
            for k in range(3):
                out[k] += t * tmp[k] / count


@numba.njit(cache=True)
def _sample_many(data, offsets, n0, levels, face, u, v, a, b, c, d, out):
    for k in range(face.shape[0]):
        _sample1(data, offsets, n0, levels, face[k], u[k], v[k], a[k], b[k], c[k], d[k], out[k])


def sample_extended(ext: ExtendedMap, d, dw_d, dh_d) -> np.ndarray:
    """Trilinear sampling with up to 16 anisotropic taps along the major
    footprint axis. Works on single directions or arrays (..., 3)."""
    d = np.asarray(d, dtype=float)
    shape = d.shape[:-1]
    d2 = d.reshape(-1, 3)
    ok = np.all(np.isfinite(d2), axis=1) & (np.linalg.norm(d2, axis=1) > 0)
    dw = np.nan_to_num(np.broadcast_to(np.asarray(dw_d, float), d.shape).reshape(-1, 3))
    dh = np.nan_to_num(np.broadcast_to(np.asarray(dh_d, float), d.shape).reshape(-1, 3))
    safe = np.where(ok[:, None], d2, [0.0, 0.0, 1.0])
    face, u, v, a, b, c, e, _, _, _ = footprint_arrays(safe, dw, dh, ext.face_size, ext.levels)
    out = np.zeros((len(safe), 3))
    _sample_many(ext.data, ext.offsets, ext.face_size, ext.levels,
                 *[np.ascontiguousarray(x) for x in (face, u, v, a, b, c, e)], out)
    out[~ok] = 0.0
    return out.reshape(shape + (3,))
