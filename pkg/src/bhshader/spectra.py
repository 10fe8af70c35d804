"""Black-body spectra and CIE 1931 colorimetry on a 1 nm grid.

The colour-matching functions come from ``colour-science``; it is imported on
first use only, since the import itself takes a few seconds.
"""
from __future__ import annotations

import functools
import math

import numpy as np

LAMBDA_MIN_NM = 360.0
LAMBDA_MAX_NM = 830.0

# Second radiation constant h*c/k in nm*K.
C2_NM_K = 1.438776877e7

# Temperature grid for the tabulated black-body chromaticities.
_T_GRID = np.geomspace(500.0, 1.0e6, 2048)


def wavelengths() -> np.ndarray:
    return np.arange(LAMBDA_MIN_NM, LAMBDA_MAX_NM + 0.5, 1.0)


@functools.lru_cache(maxsize=1)
def cmfs() -> np.ndarray:
    """(n, 3) CIE 1931 2 degree colour-matching functions on :func:`wavelengths`."""
    import colour

    table = colour.MSDS_CMFS["CIE 1931 2 Degree Standard Observer"]
    lam = wavelengths()
    out = np.stack([np.interp(lam, table.wavelengths, table.values[:, k]) for k in range(3)],
                   axis=-1)
    out.setflags(write=False)
    return out


def planck(lam_nm, temperature):
    """Relative spectral radiance of a black body, per unit wavelength.

    Normalized by ``T^5`` so values stay O(1) for any temperature; multiply by
    ``T^5`` for the physical scaling.
    """
    lam = np.asarray(lam_nm, dtype=float)
    temp = np.asarray(temperature, dtype=float)
    x = C2_NM_K / (lam * temp)
    with np.errstate(over="ignore"):
        return x ** 5 / np.expm1(x)


def integrate(spectrum: np.ndarray) -> np.ndarray:
    """XYZ of spectra sampled on :func:`wavelengths` (trapezoid rule)."""
    return np.trapezoid(spectrum[..., None] * cmfs(), dx=1.0, axis=-2)


@functools.lru_cache(maxsize=1)
def _blackbody_grid():
    spectrum = planck(wavelengths()[None, :], _T_GRID[:, None])
    xyz = integrate(spectrum)
    xy = xyz[:, :2] / xyz.sum(axis=-1, keepdims=True)
    # Luminance relative to T^4 (Stefan-Boltzmann) restores the full scale.
    lum = xyz[:, 1] * _T_GRID
    return xy, lum


def blackbody_xy(temperature) -> np.ndarray:
    """Chromaticity of a black body (interpolated in log T)."""
    xy, _ = _blackbody_grid()
    lt = np.log(np.clip(np.asarray(temperature, dtype=float), _T_GRID[0], _T_GRID[-1]))
    g = np.log(_T_GRID)
    return np.stack([np.interp(lt, g, xy[:, 0]), np.interp(lt, g, xy[:, 1])], axis=-1)


def blackbody_xyz(temperature, reference_temperature: float = 6500.0) -> np.ndarray:
    """XYZ of a black body, scaled so that Y = 1 at ``reference_temperature``.

    Zero (or negative) temperatures give zero.
    """
    temp = np.asarray(temperature, dtype=float)
    xy, lum = _blackbody_grid()
    g = np.log(_T_GRID)
    tc = np.clip(temp, _T_GRID[0], _T_GRID[-1])
    lt = np.log(tc)
    y_lum = np.interp(lt, g, lum) * tc ** 4
    y_ref = np.interp(np.log(reference_temperature), g, lum) * reference_temperature ** 4
    # Below the grid the Wien tail makes the luminance vanish quickly; fade to 0.
    y_lum = np.where(temp >= _T_GRID[0], y_lum, y_lum * np.clip(temp / _T_GRID[0], 0, 1) ** 8)
    x = np.interp(lt, g, xy[:, 0])
    y = np.interp(lt, g, xy[:, 1])
    big_y = y_lum / y_ref
    out = np.stack([x / y * big_y, big_y, (1 - x - y) / y * big_y], axis=-1)
    return np.where((temp > 0)[..., None], out, 0.0)


def xy_to_cct_mccamy(xy) -> np.ndarray:
    """Correlated colour temperature from McCamy's cubic approximation."""
    from colour.temperature import xy_to_CCT

    return np.asarray(xy_to_CCT(np.asarray(xy, dtype=float), method="McCamy 1992"))


def _uv(xy):
    x, y = xy[..., 0], xy[..., 1]
    den = -2.0 * x + 12.0 * y + 3.0
    return np.stack([4.0 * x / den, 6.0 * y / den], axis=-1)


def _locus_xy(temperature: float) -> np.ndarray:
    xyz = integrate(planck(wavelengths(), temperature))
    return xyz[:2] / xyz.sum()


def xy_to_cct(xy) -> float:
    """Correlated colour temperature of one chromaticity: the black body whose
    CIE 1960 uv is nearest, searched around McCamy's estimate."""
    from scipy.optimize import minimize_scalar

    xy = np.asarray(xy, dtype=float)
    target = _uv(xy)
    guess = float(np.clip(xy_to_cct_mccamy(xy), 1000.0, 1.0e5))

    def dist(log_t):
        return float(np.sum((_uv(_locus_xy(math.exp(log_t))) - target) ** 2))

    lo, hi = math.log(max(500.0, guess / 3.0)), math.log(min(1.0e6, guess * 3.0))
    res = minimize_scalar(dist, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-9})
    return math.exp(res.x)


def chromaticity(xyz) -> np.ndarray:
    xyz = np.asarray(xyz, dtype=float)
    total = xyz.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return xyz[..., :2] / total
