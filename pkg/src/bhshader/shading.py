"""Received light: lensing amplification, Doppler factor, beaming, bloom, tone map.

Doppler and beaming for arbitrary emitted colors use a table precomputed
over chromaticity (x, y) and Doppler factor D. Each chromaticity gets the spectrum

    I(lam) = B_T(lam) (1 - a1 A1(lam) - a2 A2(lam))

where T is the correlated colour temperature of (x, y), A1 and A2 are fixed
Gaussian absorption bands and (a1, a2) solve a 2x2 linear system so that I has
exactly the chromaticity (x, y). The table holds

    D^5 * XYZ[I(D lam)] / (X + Y + Z)[I(lam)]

so that (X + Y + Z) times the table entry at (x, y, D) is the received color.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import spectra
from .geodesic import DomainError
from .tables import TABLE_COLOR, TableFormatError, _block_bytes, _read_block

ABSORPTION_CENTERS_NM = (480.0, 610.0)
ABSORPTION_SIGMA_NM = 60.0

AMPLIFICATION_CLAMP = 1e6

# IEC 61966-2-1 (sRGB, D65).
XYZ_TO_SRGB = np.array([
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
])
D65_XYZ = np.array([0.95047, 1.0, 1.08883])

_RANGES = struct.Struct("<6d")


# -- spectra ------------------------------------------------------------------

def absorption(lam_nm) -> np.ndarray:
    """(..., 2) unit-peak Gaussian absorption bands."""
    lam = np.asarray(lam_nm, dtype=float)[..., None]
    c = np.asarray(ABSORPTION_CENTERS_NM)
    return np.exp(-0.5 * ((lam - c) / ABSORPTION_SIGMA_NM) ** 2)


def solve_absorption(x: float, y: float):
    """Temperature and absorption weights whose spectrum has chromaticity (x, y).

    Returns ``(T, a, representable)``; ``representable`` is False when the
    spectrum goes negative at some wavelength in the visible range.
    """
    temp = min(max(spectra.xy_to_cct([x, y]), 1000.0), 40000.0)
    lam = spectra.wavelengths()
    base = spectra.planck(lam, temp)
    band = absorption(lam)
    xyz = spectra.integrate(np.concatenate([base[None], (base[:, None] * band).T]))

    def residual(v):
        total = v.sum(axis=-1)
        return np.stack([v[..., 0] - x * total, v[..., 1] - y * total], axis=-1)

    r = residual(xyz)
    a = np.linalg.solve(r[1:].T, r[0])
    representable = bool(np.min(1.0 - band @ a) >= 0.0)
    return temp, a, representable


def shifted_color(x: float, y: float, factors) -> np.ndarray:
    """Direct (untabulated) evaluation of C(x, y, D) for an array of D."""
    factors = np.atleast_1d(np.asarray(factors, dtype=float))
    temp, a, _ = solve_absorption(x, y)
    lam = spectra.wavelengths()

    def spectrum(wl):
        return spectra.planck(wl, temp) * (1.0 - absorption(wl) @ a)

    norm = spectra.integrate(spectrum(lam)).sum()
    shifted = spectrum(factors[:, None] * lam[None, :])
    return factors[:, None] ** 5 * spectra.integrate(shifted) / norm


# -- color table --------------------------------------------------------------

@dataclass(frozen=True)
class ColorTable:
    """C(x, y, D) on a regular x, y grid and a log-uniform D grid.

    ``data`` has shape (n_d, n_y, n_x, 3). ``representable`` flags the
    chromaticities whose spectrum is non-negative everywhere.
    """

    data: np.ndarray
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    d_range: tuple[float, float]
    representable: np.ndarray
    cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def dims(self) -> tuple[int, int, int]:
        n_d, n_y, n_x, _ = self.data.shape
        return n_x, n_y, n_d

    def axes(self):
        n_x, n_y, n_d = self.dims
        return (np.linspace(*self.x_range, n_x), np.linspace(*self.y_range, n_y),
                np.geomspace(*self.d_range, n_d))


def precompute_color_table(d_min: float = 0.1, d_max: float = 10.0,
                           dims: tuple[int, int, int] = (64, 32, 64),
                           x_range=(0.15, 0.55), y_range=(0.15, 0.45)) -> ColorTable:
    if not 0.0 < d_min < d_max:
        raise DomainError("need 0 < d_min < d_max")
    n_x, n_y, n_d = dims
    xs = np.linspace(*x_range, n_x)
    ys = np.linspace(*y_range, n_y)
    d_max = _align_unit_node(d_min, d_max, n_d)
    ds = np.geomspace(d_min, d_max, n_d)
    ds[np.argmin(np.abs(np.log(ds)))] = 1.0
    data = np.empty((n_d, n_y, n_x, 3))
    ok = np.empty((n_y, n_x), dtype=bool)
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            data[:, j, i] = shifted_color(x, y, ds)
            ok[j, i] = solve_absorption(x, y)[2]
    # Spectra of non-representable chromaticities can go negative once shifted.
    data = np.maximum(data, 0.0).astype(np.float32)
    return ColorTable(data, tuple(x_range), tuple(y_range), (d_min, d_max), ok)


def _align_unit_node(d_min: float, d_max: float, n: int) -> float:
    """Upper end of a log-uniform grid starting at d_min that has a node at
    exactly D = 1 and still reaches d_max."""
    if not d_min < 1.0 < d_max:
        return d_max
    k = math.floor((n - 1) * math.log(1.0 / d_min) / math.log(d_max / d_min))
    if k < 1:
        return d_max
    return d_min * math.exp(math.log(1.0 / d_min) / k * (n - 1))


def save_color_table(table: ColorTable, path) -> None:
    extra = _RANGES.pack(*table.x_range, *table.y_range, *table.d_range)
    extra += np.packbits(table.representable.ravel()).tobytes()
    n_x, n_y, n_d = table.dims
    blob = _block_bytes(TABLE_COLOR, table.data, 0.0, depth=n_d, extra=extra)
    Path(path).write_bytes(blob)


def load_color_table(path) -> ColorTable:
    buf = memoryview(Path(path).read_bytes())
    head = _read_block_dims(buf)
    n_x, n_y = head
    extra_size = _RANGES.size + (n_x * n_y + 7) // 8
    tid, data, _, extra, end = _read_block(buf, 0, 3, extra_size)
    if tid != TABLE_COLOR:
        raise TableFormatError(f"unexpected table id {tid}")
    if end != len(buf):
        raise TableFormatError("trailing bytes after color table")
    if data.ndim == 3:
        data = data[None]
    r = _RANGES.unpack(extra[:_RANGES.size])
    mask = np.unpackbits(np.frombuffer(extra[_RANGES.size:], dtype=np.uint8))
    mask = mask[:n_x * n_y].reshape(n_y, n_x).astype(bool)
    return ColorTable(data, r[0:2], r[2:4], r[4:6], mask)


def _read_block_dims(buf):
    from .tables import HEADER, MAGIC
    if len(buf) < HEADER.size:
        raise TableFormatError("truncated header")
    magic, _, _, width, height, *_ = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise TableFormatError(f"bad magic {magic!r}")
    return width, height


def lookup_color(table: ColorTable, xy, factor, stats: dict | None = None) -> np.ndarray:
    """Trilinear C(xy, D). Chromaticities and D outside the grid are clamped;
    clamped D values are counted in ``stats['d_clamped']``."""
    xy = np.asarray(xy, dtype=float)
    factor = np.asarray(factor, dtype=float)
    n_x, n_y, n_d = table.dims
    d_lo, d_hi = table.d_range
    out_of_range = (factor < d_lo * (1 - 1e-12)) | (factor > d_hi * (1 + 1e-12))
    if stats is not None:
        stats["d_clamped"] = stats.get("d_clamped", 0) + int(np.count_nonzero(out_of_range))
    fx = (xy[..., 0] - table.x_range[0]) / (table.x_range[1] - table.x_range[0]) * (n_x - 1)
    fy = (xy[..., 1] - table.y_range[0]) / (table.y_range[1] - table.y_range[0]) * (n_y - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        fd = np.log(factor / d_lo) / math.log(d_hi / d_lo) * (n_d - 1)
    coords = []
    for f, n in ((fd, n_d), (fy, n_y), (fx, n_x)):
        f = np.clip(np.nan_to_num(f, nan=0.0), 0.0, n - 1)
        i0 = np.minimum(np.floor(f).astype(np.intp), n - 2)
        coords.append((i0, (f - i0)[..., None]))
    (d0, wd), (y0, wy), (x0, wx) = coords
    # Geometric interpolation along D: C varies roughly like a power of D
    # times a Wien tail, so log-linear in D is far more accurate than linear.
    # Entries clamped to zero (non-representable spectra) have no logarithm;
    # there the interpolation is linear. Linear in (x, y) keeps the D = 1
    # slice exact.
    logs = _log_data(table)
    data = table.data
    out = 0.0
    for dy, gy in ((0, 1 - wy), (1, wy)):
        for dx, gx in ((0, 1 - wx), (1, wx)):
            lo = logs[d0, y0 + dy, x0 + dx]
            hi = logs[d0 + 1, y0 + dy, x0 + dx]
            raw_lo = data[d0, y0 + dy, x0 + dx]
            raw_hi = data[d0 + 1, y0 + dy, x0 + dx]
            positive = (raw_lo > 0) & (raw_hi > 0)
            value = np.where(positive, np.exp(lo + wd * (hi - lo)),
                             raw_lo + wd * (raw_hi - raw_lo))
            out = out + gy * gx * value
    return out


_LOG_FLOOR = 1e-30


def _log_data(table: ColorTable) -> np.ndarray:
    if "log" not in table.cache:
        table.cache["log"] = np.log(np.maximum(table.data.astype(float), _LOG_FLOOR))
    return table.cache["log"]


def apply_doppler_beaming(emitted_xyz, factor, table: ColorTable,
                          stats: dict | None = None) -> np.ndarray:
    """Received XYZ = (X + Y + Z) * C(xy, D)."""
    xyz = np.asarray(emitted_xyz, dtype=float)
    total = xyz.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        xy = xyz[..., :2] / total[..., None]
    xy = np.where((total > 0)[..., None], xy, 1.0 / 3.0)
    return total[..., None] * lookup_color(table, xy, factor, stats)


# -- Doppler factor -------------------------------------------------------------

class EmitterKind(enum.Enum):
    STATIC_STAR = "static"
    DISC_CIRCULAR = "disc"


@dataclass(frozen=True)
class DopplerInputs:
    """Ray and observer data for one Doppler factor.

    ``e`` is the ray's motion constant (its sign is ignored, the negative root
    is used); ``u``/``u_dot`` and ``u_em``/``u_dot_em`` are the ray state at the
    receiver and emitter. ``k`` is the receiver 4-velocity in pseudo-Cartesian
    components, ``ex``/``ey`` the beam frame axes at the receiver and
    ``ez_dot`` the product e_z . e_z' used by the disc emitter.
    """

    e: float
    u: float
    u_dot: float
    u_em: float
    u_dot_em: float = 0.0
    kind: EmitterKind = EmitterKind.STATIC_STAR
    k: np.ndarray | None = None
    ex: np.ndarray | None = None
    ey: np.ndarray | None = None
    ez_dot: float = 0.0


def _receiver_product(e, u, u_dot, k, ex, ey):
    """g(k, l) for the ray tangent l = [e/(1-u), -u_dot, 0, u^2]."""
    if k is None:
        k = np.array([1.0 / math.sqrt(1.0 - u), 0.0, 0.0, 0.0])
    k = np.asarray(k, dtype=float)
    k_r = float(k[1:] @ ex) if ex is not None else 0.0
    k_y = float(k[1:] @ ey) if ey is not None else 0.0
    return e * k[0] + k_r * u_dot / (1.0 - u) - u * k_y


def doppler_factor(inp: DopplerInputs) -> float:
    """Received over emitted frequency, g(k, l) / g(k', l')."""
    e = -abs(inp.e)
    u_em = inp.u_em
    if inp.kind is EmitterKind.DISC_CIRCULAR:
        if u_em >= 2.0 / 3.0:
            raise DomainError("no circular orbit at u >= 2/3")
        g_em = (e * math.sqrt(2.0 / (2.0 - 3.0 * u_em))
                - math.sqrt(u_em ** 3 / (2.0 - 3.0 * u_em)) * inp.ez_dot)
    else:
        if not 0.0 <= u_em < 1.0:
            raise DomainError("static emitter must be outside the horizon")
        g_em = e / math.sqrt(1.0 - u_em)
    g_rec = _receiver_product(e, inp.u, inp.u_dot, inp.k, inp.ex, inp.ey)
    return g_rec / g_em


def receiver_term(d_t, u):
    """g(k, l) / |e| for a camera beam with pseudo-Cartesian time component d_t.

    The beam direction d = -e_tau + (unit spatial) is proportional to the
    backward ray tangent, and g(e_tau, d) = -1, which gives 1 / ((1 - u) d_t).
    """
    return 1.0 / ((1.0 - np.asarray(u, dtype=float)) * np.asarray(d_t, dtype=float))


def star_doppler(d_t, u):
    """Doppler factor of light from static stars at infinity, per beam."""
    return -receiver_term(d_t, u)


def disc_doppler(d_t, u, e_abs, u_em, ez_dot):
    """Doppler factor of light from the circularly orbiting disc, per hit."""
    u_em = np.asarray(u_em, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        g_em = (-np.sqrt(2.0 / (2.0 - 3.0 * u_em))
                - np.sqrt(u_em ** 3 / (2.0 - 3.0 * u_em)) * ez_dot / e_abs)
        return receiver_term(d_t, u) / g_em


# -- lensing ---------------------------------------------------------------------

def lensing_amplification(dw_q, dh_q, dw_d, dh_d):
    """Solid-angle ratio of the beam at the camera and at the emitter.

    Arrays of shape (..., 3). Degenerate emitter footprints give the clamp
    value instead of infinity.
    """
    num = np.linalg.norm(np.cross(dw_q, dh_q), axis=-1)
    den = np.linalg.norm(np.cross(dw_d, dh_d), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
    ratio = np.where(den * AMPLIFICATION_CLAMP > num, ratio, AMPLIFICATION_CLAMP)
    return np.nan_to_num(ratio, nan=AMPLIFICATION_CLAMP)


# -- bloom and tone mapping ----------------------------------------------------

_WIDE = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
_NARROW = np.array([1.0, 2.0, 1.0]) / 4.0


def _spread(img, kernel):
    """Separable zero-padded blur. Light pushed past the border is dropped
    here and given back by a global rescale in :func:`bloom`, which keeps
    the halo monotone up to the image edge."""
    out = img
    for axis in (0, 1):
        out = ndimage.convolve1d(out, kernel, axis=axis, mode="constant")
    return out


def _pool(img):
    """2x2 sum pooling (zero padded to even size)."""
    h, w = img.shape[:2]
    img = np.pad(img, ((0, h % 2), (0, w % 2), (0, 0)))
    return img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2]


def _unpool(img, shape):
    """Split each value evenly over its four children, cropped to ``shape``."""
    h, w = shape
    up = np.repeat(np.repeat(img / 4.0, 2, axis=0), 2, axis=1)
    return up[:h, :w]


def bloom(hdr, levels: int = 6, strength: float = 0.2, falloff: float = 0.6):
    """Energy-preserving glare: a fraction ``strength`` of the light is spread
    over a pyramid of blurred mip levels with weights decaying as
    ``falloff**level``, giving a heavy-tailed point spread function.

    Each glow layer is rescaled as a whole to carry exactly the energy of the
    image, so the total is preserved without piling light up at the borders.
    """
    img = np.asarray(hdr, dtype=float)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    shapes = [img.shape[:2]]
    pyramid = [img]
    for _ in range(levels):
        if min(pyramid[-1].shape[:2]) < 2:
            break
        pyramid.append(_pool(pyramid[-1]))
        shapes.append(pyramid[-1].shape[:2])
    n = len(pyramid) - 1
    if n == 0:
        return hdr.copy()
    weights = falloff ** np.arange(n)
    weights = strength * weights / weights.sum()
    energy = img.sum(axis=(0, 1))
    out = (1.0 - strength) * img
    for k in range(1, n + 1):
        glow = _spread(pyramid[k], _WIDE)
        for j in range(k - 1, -1, -1):
            glow = _spread(_unpool(glow, shapes[j]), _NARROW)
        kept = glow.sum(axis=(0, 1))
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(kept > 0, energy / kept, 0.0)
        out = out + weights[k - 1] * glow * scale
    return out[..., 0] if squeeze else out


def srgb_encode(linear):
    c = np.clip(linear, 0.0, 1.0)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1.0 / 2.4) - 0.055)


def tone_map(hdr_xyz, exposure: float = 1.0, white: float = 4.0) -> np.ndarray:
    """Linear XYZ -> 8-bit sRGB with an extended Reinhard curve on luminance.

    Luminance ``white / exposure`` maps to full scale.
    """
    rgb = np.maximum(np.asarray(hdr_xyz, dtype=float) @ XYZ_TO_SRGB.T, 0.0) * exposure
    lum = rgb @ np.array([0.2126, 0.7152, 0.0722])
    mapped = lum * (1.0 + lum / (white * white)) / (1.0 + lum)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(lum > 0, mapped / lum, 0.0)
    out = srgb_encode(rgb * scale[..., None])
    return np.round(out * 255.0).astype(np.uint8)
