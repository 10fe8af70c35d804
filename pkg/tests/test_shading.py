"""Colour shift table, Doppler factors, lensing amplification, bloom and tone mapping."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq
from scipy.spatial.transform import Rotation

from bhshader import oracle, shading, spectra
from bhshader.geodesic import DomainError


def planck_xy(temperature):
    return spectra.chromaticity(spectra.integrate(spectra.planck(spectra.wavelengths(), temperature)))


# --- colour shift ------------------------------------------------------------------

def test_identity_slice_over_grid(color_table):
    xs, ys, ds = color_table.axes()
    k = int(np.argmin(np.abs(ds - 1.0)))
    assert ds[k] == pytest.approx(1.0, abs=1e-12)
    x, y = np.meshgrid(xs, ys)
    expected = np.stack([x, y, 1 - x - y], axis=-1)
    # Non-representable texels are clamped at zero once shifted; at D = 1 the
    # exact solve still reproduces the chromaticity wherever it is >= 0.
    ok = np.all(expected >= 0, axis=-1)
    err = np.abs(color_table.data[k] - expected)[ok]
    assert err.max() < 1e-4


def test_table_entries_non_negative(color_table):
    assert np.all(color_table.data >= 0)
    assert color_table.data.dtype == np.float32
    assert color_table.dims == (64, 32, 64)


@pytest.mark.parametrize("temperature", [3000.0, 4500.0, 6500.0, 10000.0])
@pytest.mark.parametrize("factor", [0.5, 0.8, 1.25, 2.0])
def test_blackbody_shift_is_temperature_shift(temperature, factor):
    x, y = planck_xy(temperature)
    out = shading.shifted_color(x, y, [factor])[0]
    assert np.max(np.abs(out[:2] / out.sum() - planck_xy(factor * temperature))) < 1e-3


def test_magnitude_vanishes_for_small_factor():
    x, y = planck_xy(6500.0)
    totals = shading.shifted_color(x, y, [0.05, 0.1, 0.2]).sum(axis=1)
    assert totals[0] < totals[1] < totals[2]
    # At least the D^5 prefactor; the Wien tail only suppresses further.
    assert totals[2] / totals[1] >= 2 ** 5
    assert totals[0] < 1e-6


def test_identity_through_table(color_table, rng):
    xy = np.column_stack([rng.uniform(0.25, 0.45, 500), rng.uniform(0.25, 0.42, 500)])
    xyz = np.column_stack([xy, 1 - xy.sum(axis=1)]) * rng.uniform(0.1, 10, (500, 1))
    out = shading.apply_doppler_beaming(xyz, np.ones(500), color_table)
    np.testing.assert_allclose(out, xyz, rtol=1e-3)


def test_zero_input_gives_zero(color_table):
    out = shading.apply_doppler_beaming(np.zeros((4, 3)), np.full(4, 1.7), color_table)
    assert np.all(out == 0)


def test_blackbody_6500_at_1_2_through_table(color_table):
    xyz = np.append(planck_xy(6500.0), 1 - planck_xy(6500.0).sum())
    out = shading.apply_doppler_beaming(xyz, 1.2, color_table)
    cct = spectra.xy_to_cct(out[:2] / out.sum())
    assert abs(cct / 7800.0 - 1) < 0.02


def test_table_matches_direct_evaluation(color_table, rng):
    """Trilinear table error against the direct spectral integral, on the
    Planckian locus where spectra are physical."""
    worst = 0.0
    for temperature in np.geomspace(2500, 15000, 8):
        x, y = planck_xy(temperature)
        factors = np.exp(rng.uniform(math.log(0.5), math.log(2.0), 4))
        direct = shading.shifted_color(x, y, factors)
        table = shading.lookup_color(color_table, np.tile([x, y], (4, 1)), factors)
        err = np.abs(table[:, :2] / table.sum(1, keepdims=True)
                     - direct[:, :2] / direct.sum(1, keepdims=True))
        worst = max(worst, err.max())
    print(f"max table xy error vs direct evaluation: {worst:.2e}")
    assert worst < 3e-3


def test_out_of_range_factor_is_clamped_and_counted(color_table):
    stats = {}
    xy = np.array([[0.31, 0.32]] * 3)
    out = shading.lookup_color(color_table, xy, np.array([0.01, 1.0, 50.0]), stats)
    assert stats["d_clamped"] == 2
    assert np.all(np.isfinite(out))
    edge = shading.lookup_color(color_table, xy[:1], np.array([color_table.d_range[1]]))
    np.testing.assert_allclose(out[2], edge[0], rtol=1e-12)


def test_color_table_file_round_trip(tmp_path):
    table = shading.precompute_color_table(dims=(4, 3, 5))
    path = tmp_path / "ct.bct"
    shading.save_color_table(table, path)
    back = shading.load_color_table(path)
    np.testing.assert_array_equal(back.data, table.data)
    assert back.d_range == pytest.approx(table.d_range)
    assert back.x_range == table.x_range and back.y_range == table.y_range
    np.testing.assert_array_equal(back.representable, table.representable)


def test_color_table_domain():
    with pytest.raises(DomainError):
        shading.precompute_color_table(d_min=0.0)


# --- Doppler factor -------------------------------------------------------------------

def test_static_star_static_camera_at_infinity():
    inp = shading.DopplerInputs(e=0.3, u=0.0, u_dot=0.1, u_em=0.0)
    assert shading.doppler_factor(inp) == pytest.approx(1.0, abs=1e-15)


@given(st.floats(0.0, 0.9), st.floats(0.0, 0.9), st.floats(0.01, 2.0))
def test_gravitational_redshift(u_cam, u_em, e):
    inp = shading.DopplerInputs(e=e, u=u_cam, u_dot=0.0, u_em=u_em)
    expected = math.sqrt(1 - u_em) / math.sqrt(1 - u_cam)
    assert shading.doppler_factor(inp) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("side", [1.0, -1.0])
def test_disc_face_on_emitter_term(side):
    e, u_em = 0.4, 0.2
    inp = shading.DopplerInputs(e=e, u=0.0, u_dot=0.0, u_em=u_em,
                                kind=shading.EmitterKind.DISC_CIRCULAR, ez_dot=side)
    g_em = -e * math.sqrt(2 / (2 - 3 * u_em)) - side * math.sqrt(u_em ** 3 / (2 - 3 * u_em))
    assert shading.doppler_factor(inp) == pytest.approx(-e / g_em, rel=1e-14)


def test_disc_doppler_approaching_and_receding():
    # Edge-on ray (|e| = 0.3) hitting the disc at u = 0.2, seen from far away.
    # Flipping the viewing side flips the sign of the orbital term: one side
    # is blueshifted, the other redshifted.
    side_a = shading.disc_doppler(-1.0, 0.0, 0.3, 0.2, 1.0)
    side_b = shading.disc_doppler(-1.0, 0.0, 0.3, 0.2, -1.0)
    assert side_b > 1.0 > side_a


def test_disc_doppler_domain():
    with pytest.raises(DomainError):
        shading.doppler_factor(shading.DopplerInputs(
            e=0.3, u=0.0, u_dot=0.0, u_em=0.7, kind=shading.EmitterKind.DISC_CIRCULAR))


@given(st.floats(0.0, 0.6), st.floats(0.05, 1 / 3), st.floats(0.05, 2.0), st.floats(-1, 1))
def test_vectorized_doppler_matches_scalar(u_cam, u_em, e, ez):
    """For a static camera the beam time component is -1/sqrt(1 - u)."""
    d_t = -1.0 / math.sqrt(1 - u_cam)
    star = shading.DopplerInputs(e=e, u=u_cam, u_dot=0.0, u_em=0.0)
    assert shading.star_doppler(d_t, u_cam) == pytest.approx(shading.doppler_factor(star), rel=1e-12)
    disc_inp = shading.DopplerInputs(e=e, u=u_cam, u_dot=0.0, u_em=u_em,
                                     kind=shading.EmitterKind.DISC_CIRCULAR, ez_dot=ez)
    assert shading.disc_doppler(d_t, u_cam, e, u_em, ez) == pytest.approx(
        shading.doppler_factor(disc_inp), rel=1e-12)


# --- lensing amplification ---------------------------------------------------------------

def test_amplification_identity_and_rotation(rng):
    dw = rng.normal(size=(200, 3))
    dh = rng.normal(size=(200, 3))
    np.testing.assert_allclose(shading.lensing_amplification(dw, dh, dw, dh), 1.0, rtol=1e-12)
    rot = Rotation.random(200, random_state=3)
    np.testing.assert_allclose(
        shading.lensing_amplification(dw, dh, rot.apply(dw), rot.apply(dh)), 1.0, rtol=1e-12)


def test_amplification_invariant_under_joint_rotation(rng):
    a, b, c, d = (rng.normal(size=(100, 3)) for _ in range(4))
    rot = Rotation.random(100, random_state=4)
    base = shading.lensing_amplification(a, b, c, d)
    turned = shading.lensing_amplification(rot.apply(a), rot.apply(b), rot.apply(c), rot.apply(d))
    np.testing.assert_allclose(turned, base, rtol=1e-10)


def test_amplification_clamped_for_degenerate_footprint():
    out = shading.lensing_amplification([1, 0, 0], [0, 1, 0], [1, 0, 0], [2, 0, 0])
    assert out == shading.AMPLIFICATION_CLAMP


def test_amplification_diverges_near_einstein_ring():
    """Static camera at r = 5 with a source straight behind the hole. Beams
    close to the Einstein ring are amplified by more than 1e3."""
    r = 5.0

    def escape(delta):
        out = oracle.reference_trace_many(np.array([r]), np.array([delta]), np.zeros(1),
                                          1 / 3, 0.05, step=1e-4)
        return out[0].result.escape_delta

    ring = brentq(lambda d: escape(d) - math.pi, 2.0, 2.9, xtol=1e-13)

    def direction(angle, azimuth):
        return np.array([math.cos(angle), math.sin(angle) * math.cos(azimuth),
                         math.sin(angle) * math.sin(azimuth)])

    def amplification(delta, h=1e-7, azimuth=0.3):
        q0 = direction(delta, azimuth)
        e0 = direction(escape(delta), azimuth)
        return shading.lensing_amplification(
            direction(delta + h, azimuth) - q0, direction(delta, azimuth + h) - q0,
            direction(escape(delta + h), azimuth) - e0, direction(escape(delta), azimuth + h) - e0)

    near = amplification(ring + 5e-5)
    far = amplification(ring + 5e-3)
    assert near > 1e3
    # The amplification grows like the inverse distance to the ring.
    assert near / far == pytest.approx(100.0, rel=0.05)


# --- bloom ---------------------------------------------------------------------------------

def test_bloom_black_stays_black():
    assert np.all(shading.bloom(np.zeros((40, 60, 3))) == 0)


def test_bloom_conserves_energy(rng):
    img = rng.pareto(1.5, size=(90, 130, 3))
    out = shading.bloom(img)
    assert abs(out.sum() / img.sum() - 1) < 0.01
    assert np.all(out >= 0)


def test_bloom_is_linear(rng):
    img = rng.random((64, 48, 3))
    np.testing.assert_allclose(shading.bloom(3.7 * img), 3.7 * shading.bloom(img), rtol=1e-6)


def test_bloom_halo_decreases_along_rays():
    img = np.zeros((129, 129, 3))
    img[64, 64] = 1000.0
    out = shading.bloom(img)[..., 1]
    for dy, dx in ((0, 1), (1, 0), (1, 1), (-1, 0), (0, -1), (-1, -1)):
        values = [out[64 + k * dy, 64 + k * dx] for k in range(60)]
        assert np.all(np.diff(values) <= 1e-12)
    assert out[64, 64 + 20] > 0


# --- tone mapping --------------------------------------------------------------------------

def test_tone_map_black():
    assert np.all(shading.tone_map(np.zeros((2, 2, 3))) == 0)


def test_tone_map_white_point():
    # Luminance equal to the white point maps to full scale.
    out = shading.tone_map(shading.D65_XYZ * 4.0, exposure=1.0, white=4.0)
    assert np.all(np.abs(out.astype(int) - 255) <= 1)


@given(st.floats(0.0, 100.0), st.floats(0.0, 100.0))
def test_tone_map_monotone_in_luminance(a, b):
    lo, hi = sorted((a, b))
    out_lo = shading.tone_map(shading.D65_XYZ * lo).astype(int)
    out_hi = shading.tone_map(shading.D65_XYZ * hi).astype(int)
    assert np.all(out_lo <= out_hi)
