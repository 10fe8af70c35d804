import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bhshader import geodesic, oracle, tables
from bhshader.geodesic import MU
from bhshader.tables import (DimensionMismatchError, TableFormatError, lookup_d, lookup_u,
                             map_d, map_u, unmap_d, unmap_u)


def _domain_points(rng, n):
    """Random (e, u) in the deflection-table domain, both halves, within the
    band the texel mapping covers (|1 - e^2/mu| above exp(-12.5))."""
    e2_in = MU * rng.uniform(0.0, 1.0 - 1e-5, n)
    u_in = geodesic.apsis_array(e2_in) * rng.uniform(0.0, 1.0, n)
    e2_out = MU / rng.uniform(1e-9, 1.0 - 1e-5, n)
    u_out = rng.uniform(0.0, 0.999, n)
    return np.sqrt(np.concatenate([e2_in, e2_out])), np.concatenate([u_in, u_out])


def test_map_d_examples():
    s, t = map_d(0.0, 0.0)
    assert (float(s), float(t)) == (0.5, 0.0)
    s, t = map_d(math.sqrt(2 * MU), 2.0 / 3.0)
    assert float(s) == pytest.approx(0.5 + math.sqrt(math.log(2) / 50), abs=1e-15)
    rt = math.sqrt(2 / 3)
    assert float(t) == pytest.approx(rt / (rt + math.sqrt(1 / 3)), abs=1e-15)


def test_map_d_round_trip(rng):
    e, u = _domain_points(rng, 50000)
    s, t = map_d(e, u)
    assert np.all((s >= 0) & (s <= 1) & (t >= 0) & (t <= 1))
    e2, u2 = unmap_d(s, t)
    np.testing.assert_allclose(u2, u, atol=1e-9)
    np.testing.assert_allclose(e2, e, rtol=1e-9, atol=1e-12)


@given(st.floats(0.0, 3.0), st.floats(0.0, math.pi, exclude_max=True))
def test_map_u_round_trip(e, phi):
    s, t = map_u(e, phi)
    assert 0.0 <= s <= 1.0 and t >= 0.0
    e2, phi2 = unmap_u(s, t)
    assert float(e2) == pytest.approx(e, abs=1e-9)
    assert float(phi2) == pytest.approx(phi, abs=1e-9)


def test_map_u_examples():
    assert tuple(map(float, map_u(0.0, 0.0))) == (1.0, 0.0)
    assert tuple(map(float, map_u(0.0, 3.0))) == (1.0, 1.0)


def test_map_d_domain_errors():
    with pytest.raises(geodesic.DomainError):
        map_d(0.1, 0.5)  # beyond the apsis of a scattering ray
    with pytest.raises(geodesic.DomainError):
        map_d(1.0, 1.0)


def test_precompute_argument_checks():
    with pytest.raises(ValueError):
        tables.precompute(1e-2)
    with pytest.raises(ValueError):
        tables.precompute(1e-4, (1, 4))


def test_zero_motion_constant_is_undeflected(geo_tables):
    _, defl = lookup_d(geo_tables.deflection, 0.0, 0.0)
    assert float(defl) == 0.0
    path = oracle.integrate(0.0, 0.0, max_phi=1.0)
    assert np.all(path.u == 0.0)


def test_weak_deflection_near_infinity(geo_tables):
    _, defl = lookup_d(geo_tables.deflection, 0.01, 1e-4)
    ref = oracle.deflection(0.01, 1e-4, step=1e-7)
    assert abs(float(defl) - ref) < 1e-4


def test_lookup_examples_against_oracle(geo_tables):
    # e = 0.05 turns around at u ~ 0.0526, so u = 0.2 is not on its path.
    with pytest.raises(geodesic.DomainError):
        lookup_d(geo_tables.deflection, 0.05, 0.2)
    _, defl = lookup_d(geo_tables.deflection, 0.05, 0.05)
    assert abs(float(defl) - oracle.deflection(0.05, 0.05, step=1e-7)) < 1e-3
    _, defl = lookup_d(geo_tables.deflection, 0.5, 0.2)
    assert abs(float(defl) - oracle.deflection(0.5, 0.2, step=1e-7)) < 1e-3
    _, u = lookup_u(geo_tables.inverse_radius, 0.3, 1.0)
    assert abs(float(u) - oracle.inverse_radius(0.3, 1.0, step=1e-7)) < 1e-3


def _phi_limit(e):
    """End of the stored azimuth range of U for motion constant e: the texel
    mapping's t = 1, or the apsis for scattering rays."""
    limit = min(3.0 * (1 + e * e) / (1 + 6 * e ** 3), math.pi - 1e-9)
    if e * e < MU:
        ua = geodesic.apsis(e)
        limit = min(limit, oracle.deflection(e, ua * (1 - 1e-6)) + math.pi / 2 - 1e-2)
    return limit


def test_lookup_agrees_with_oracle(geo_tables, rng):
    worst_d = worst_u = 0.0
    for _ in range(30):
        e = math.sqrt(MU * rng.uniform(0.0, 0.999)) if rng.uniform() < 0.6 else rng.uniform(0.39, 3.0)
        ua = geodesic.apsis(e) if e * e < MU else 0.99
        u_targets = np.sort(rng.uniform(0.0, ua, 8))
        phi_targets = np.sort(rng.uniform(0.0, _phi_limit(e), 8))
        d, w = oracle.ray_from_infinity(e, u_targets, phi_targets)
        _, defl = lookup_d(geo_tables.deflection, e, u_targets)
        ok = np.isfinite(d[:, 1])
        worst_d = max(worst_d, np.abs(defl[ok] - d[ok, 1]).max(initial=0.0))
        _, uu = lookup_u(geo_tables.inverse_radius, e, phi_targets)
        ok = np.isfinite(w[:, 1]) & (w[:, 1] < 1.0)
        worst_u = max(worst_u, np.abs(uu[ok] - w[ok, 1]).max(initial=0.0))
    assert worst_d < 1e-3
    assert worst_u < 1e-3


def test_deflection_monotone_along_scattering_columns(geo_tables):
    table = geo_tables.deflection
    data = np.where(table.valid(), table.data[..., 1].astype(float), np.nan)
    left = data[:, : table.width // 2]
    assert np.nanmin(np.diff(left, axis=0)) >= 0.0
    # Deflection vanishes toward u = 0.
    assert np.nanmax(np.abs(data[0])) < 1e-6


def test_time_non_decreasing_along_rays(geo_tables):
    table = geo_tables.deflection
    s = tables.texel_centers(table.width)
    t = tables.texel_centers(table.height)
    _, u = unmap_d(*np.meshgrid(s, t))
    coord = tables.coordinate_time(np.where(table.valid(), table.data[..., 0], np.nan), u)
    assert np.nanmin(np.diff(coord, axis=0)) >= 0.0


def test_inverse_radius_starts_at_infinity(geo_tables):
    table = geo_tables.inverse_radius
    _, u = lookup_u(table, np.linspace(0.0, 3.0, 20), 0.0)
    assert np.abs(u).max() < 1e-6
    # Each column rises to the apsis and then falls: at most one sign change.
    for i in range(table.width):
        col = table.data[table.valid()[:, i], i, 1]
        step = np.sign(np.diff(col)[np.abs(np.diff(col)) > 1e-7])
        assert np.count_nonzero(np.diff(step)) <= 1
        assert step.size == 0 or step[0] > 0


def test_deflection_diverges_at_separatrix(geo_tables):
    # Total bending of a ray grazing the photon sphere winds more than twice.
    e = math.sqrt(MU * (1 - 1e-6))
    path = oracle.integrate(0.0, e, max_phi=8 * math.pi)
    assert path.phi[-1] - math.pi > 4 * math.pi
    # The table keeps increasing toward the seam up to its resolution limit.
    es = np.sqrt(MU * (1 - np.geomspace(1e-1, 1e-4, 12)))
    defl = [float(lookup_d(geo_tables.deflection, x, geodesic.apsis(x))[1]) for x in es]
    assert np.all(np.diff(defl) > 0)


def test_save_load_round_trip(coarse_tables, tmp_path):
    path = tmp_path / "t.bht"
    tables.save(coarse_tables, path)
    back = tables.load(path)
    for a, b in ((coarse_tables.deflection, back.deflection),
                 (coarse_tables.inverse_radius, back.inverse_radius)):
        assert a.data.tobytes() == b.data.tobytes()
        assert a.epsilon == b.epsilon
    tables.save(back, tmp_path / "again.bht")
    assert (tmp_path / "again.bht").read_bytes() == path.read_bytes()


def test_truncated_file(coarse_tables, tmp_path):
    path = tmp_path / "t.bht"
    tables.save(coarse_tables, path)
    blob = path.read_bytes()
    for cut in (10, tables.HEADER.size + 17, len(blob) - 4):
        path.write_bytes(blob[:cut])
        with pytest.raises(TableFormatError):
            tables.load(path)


def test_bad_magic(coarse_tables, tmp_path):
    path = tmp_path / "t.bht"
    tables.save(coarse_tables, path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(TableFormatError):
        tables.load(path)


def test_swapped_dimensions(tmp_path):
    tb = tables.precompute(1e-3, (32, 16), (16, 8))
    path = tmp_path / "t.bht"
    tables.save(tb, path)
    blob = bytearray(path.read_bytes())
    blob[8:12], blob[12:16] = blob[12:16], blob[8:12]
    path.write_bytes(bytes(blob))
    with pytest.raises(DimensionMismatchError):
        tables.load(path)
