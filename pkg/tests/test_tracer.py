import math

import numpy as np
import pytest

from bhshader import geodesic, oracle, report
from bhshader.geodesic import MU
from bhshader.tracer import escape_direction, escape_directions, trace_ray, trace_rays

U_IC, U_OC = 1.0 / 3.0, 1.0 / 20.0


def test_trapped_ray_is_captured(geo_tables):
    for alpha in (0.0, 1.0, 2.5):
        res = trace_ray(1.2, math.pi / 2, alpha, U_IC, U_OC, geo_tables)
        assert res.captured and res.intersections == ()


def test_radial_outward_ray(geo_tables):
    res = trace_ray(10.0, 0.0, 0.7, U_IC, U_OC, geo_tables)
    assert res.escape_delta == 0.0 and res.intersections == ()


def test_radial_inward_ray_is_captured(geo_tables):
    assert trace_ray(10.0, math.pi, 0.7, U_IC, U_OC, geo_tables).captured


def test_example_ray_matches_oracle(geo_tables):
    res = trace_ray(10.0, 3 * math.pi / 4, math.pi / 2, U_IC, U_OC, geo_tables)
    ref = oracle.reference_trace(10.0, 3 * math.pi / 4, math.pi / 2, U_IC, U_OC, step=1e-7)
    assert abs(res.escape_delta - ref.result.escape_delta) < 1e-3
    assert len(res.intersections) == len(ref.result.intersections) > 0
    for a, b in zip(res.intersections, ref.result.intersections):
        assert abs(a.u_hit - b.u_hit) < 1e-3
        assert abs(a.t_ret - b.t_ret) < 2e-3
        assert abs(math.remainder(a.phi_hit - b.phi_hit, 2 * math.pi)) < 1e-9


def test_batch_matches_scalar(geo_tables, rng):
    p_r, delta, alpha = report.sample_rays(200, 7)
    batch = trace_rays(p_r, delta, alpha, U_IC, U_OC, geo_tables)
    for k in range(0, 200, 17):
        assert trace_ray(p_r[k], delta[k], alpha[k], U_IC, U_OC, geo_tables) == batch.result(k)


def test_domain_errors(geo_tables):
    with pytest.raises(geodesic.DomainError):
        trace_ray(0.9, 1.0, 0.0, U_IC, U_OC, geo_tables)
    with pytest.raises(geodesic.DomainError):
        trace_ray(5.0, 1.0, math.pi, U_IC, U_OC, geo_tables)
    with pytest.raises(geodesic.DomainError):
        trace_ray(5.0, 1.0, 0.0, 0.5, U_OC, geo_tables)


def test_escape_direction_examples():
    frame = geodesic.BeamFrame(np.array([1.0, 0, 0]), np.array([0, 1.0, 0]),
                               np.array([0, 0, 1.0]), 0.3, 0.0, 0.1)
    np.testing.assert_allclose(escape_direction(0.0, frame), frame.ex)
    np.testing.assert_allclose(escape_direction(math.pi / 2, frame), frame.ey, atol=1e-16)
    with pytest.raises(ValueError):
        escape_direction(math.inf, frame)
    d = escape_directions(np.array([0.4, math.inf]), frame.ex[None], frame.ey[None])
    assert abs(np.linalg.norm(d[0]) - 1.0) < 1e-12 and np.all(np.isnan(d[1]))


def test_weak_deflection_far_away(geo_tables):
    # An outgoing ray from r = 1e4 is bent by at most the full weak-field angle 2e.
    delta = np.linspace(1e-3, 0.2, 50)
    batch = trace_rays(1e4, delta, 0.0, U_IC, U_OC, geo_tables)
    bend = batch.escape_delta - delta
    assert np.all(bend >= 0.0)
    assert np.all(bend <= 2.0 * batch.e * 1.01)


def test_intersections_invariants(geo_tables, rng):
    n = 1_000_000
    p_r = np.exp(rng.uniform(math.log(1.05), math.log(200.0), n))
    batch = trace_rays(p_r, rng.uniform(0, math.pi, n), rng.uniform(0, math.pi, n),
                       U_IC, U_OC, geo_tables)
    hit = batch.hit
    assert hit.shape == (n, 2)
    assert np.all(batch.u_hit[hit] >= U_OC - 1e-12) and np.all(batch.u_hit[hit] <= U_IC + 1e-12)
    assert np.all(batch.t_ret[hit] <= 0.0)
    assert np.all(np.isfinite(batch.escape_delta) | batch.captured)


def test_capture_agrees_with_oracle(geo_tables):
    p_r, delta, alpha = report.sample_rays(1500, 11)
    batch = trace_rays(p_r, delta, alpha, U_IC, U_OC, geo_tables)
    refs = oracle.reference_trace_many(p_r, delta, alpha, U_IC, U_OC)
    ref_captured = np.array([r.result.captured for r in refs])
    u = 1.0 / p_r
    near_separatrix = np.abs(batch.e ** 2 - MU) < 1e-4
    bad = (ref_captured != batch.captured) & ~near_separatrix
    assert not np.any(bad)
    assert np.all(u > 0)


def test_reflected_rays(geo_tables, rng):
    # Rays at delta and pi - delta share e; each is checked against the oracle.
    p_r = rng.uniform(1.5, 30.0, 200)
    delta = rng.uniform(0.05, math.pi / 2 - 0.05, 200)
    alpha = rng.uniform(0, math.pi, 200)
    out = trace_rays(p_r, delta, alpha, U_IC, U_OC, geo_tables)
    back = trace_rays(p_r, math.pi - delta, np.mod(math.pi - alpha, math.pi), U_IC, U_OC,
                      geo_tables)
    np.testing.assert_allclose(out.e, back.e, rtol=1e-12)
    scatter = out.e ** 2 < MU - 1e-4
    # Scattering rays escape either way; they can't both be captured.
    assert not np.any(out.captured[scatter]) and not np.any(back.captured[scatter])
    refs = oracle.reference_trace_many(p_r, math.pi - delta, np.mod(math.pi - alpha, math.pi),
                                       U_IC, U_OC)
    ref = np.array([r.result.escape_delta for r in refs])
    ok = np.isfinite(ref) & np.isfinite(back.escape_delta)
    assert np.all(np.isinf(ref) == np.isinf(back.escape_delta))
    assert np.abs(back.escape_delta[ok] - ref[ok]).max() < 1e-3


def test_escape_angle_continuous_across_apsis_branch(geo_tables):
    # delta = pi/2 switches between the outgoing and the mirrored formula.
    delta = math.pi / 2 + np.arange(-200, 201) * 1e-5
    for r in (2.0, 10.0, 100.0):
        esc = trace_rays(r, delta, 0.3, U_IC, U_OC, geo_tables).escape_delta
        assert np.all(np.isfinite(esc))
        assert np.abs(np.diff(esc)).max() < 1e-3
