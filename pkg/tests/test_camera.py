"""Camera orbit integration and the Lorentz frame of the moving camera."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bhshader import camera
from bhshader.geodesic import DomainError, metric_product

ETA = np.diag([1.0, -1.0, -1.0, -1.0])


def eccentric_orbit():
    # Bound orbit between r of about 8.9 and 17.1, inclined by 0.4 rad.
    return camera.orbit_init(12.0, 1.3, 0.22, chi=0.4)


def run(state, dtau, steps):
    states = [state]
    for _ in range(steps):
        states.append(camera.orbit_step(states[-1], dtau))
    return states


# --- orbit ---------------------------------------------------------------------

@pytest.mark.parametrize("chi", [0.0, 0.7])
def test_circular_orbit_constants(chi):
    s = camera.orbit_init(3.0, math.pi / 2, 0.5, chi)
    assert s.e_orb ** 2 == pytest.approx(8 / 9, abs=1e-14)
    assert s.l_orb ** 2 == pytest.approx(3.0, abs=1e-12)
    assert s.dr_dtau == 0.0
    assert abs(camera.radial_acceleration(3.0, s.l_orb)) < 1e-14


def test_circular_orbit_stays_circular():
    s = camera.orbit_init(3.0, math.pi / 2, 0.5, 0.3)
    for _ in range(10_000):
        s = camera.orbit_step(s, 1e-3)
    assert abs(s.r - 3.0) < 1e-8
    assert s.psi == pytest.approx(10.0 * math.sqrt(3.0) / 9.0, rel=1e-9)


def test_radial_plunge_from_rest():
    s = camera.orbit_init(6.0, math.pi / 2, 0.0)
    assert s.l_orb == 0.0 and s.e_orb ** 2 == pytest.approx(1 - 1 / 6)
    radii = [s.r]
    with pytest.raises(camera.HorizonCrossing) as info:
        for _ in range(100_000):
            s = camera.orbit_step(s, 1e-2)
            radii.append(s.r)
    assert np.all(np.diff(radii) < 0)
    assert info.value.state.r <= 1.0


def test_init_validation():
    with pytest.raises(DomainError):
        camera.orbit_init(0.9, 1.0, 0.1)
    with pytest.raises(DomainError):
        camera.orbit_init(5.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        camera.orbit_init(5.0, 0.0, 0.1)
    with pytest.raises(DomainError):
        camera.orbit_step(camera.orbit_init(5.0, 1.0, 0.1), 0.0)


def test_initial_radial_direction_sign():
    assert camera.orbit_init(8.0, 0.5, 0.3).dr_dtau > 0
    assert camera.orbit_init(8.0, 2.5, 0.3).dr_dtau < 0


def max_residual(dtau, tau_end=300.0):
    states = run(eccentric_orbit(), dtau, int(round(tau_end / dtau)))
    return max(abs(s.energy_residual()) for s in states)


def test_second_order_convergence():
    ratio = max_residual(0.1) / max_residual(0.05)
    assert 3.0 < ratio < 5.0


def test_energy_residual_bound():
    # A full radial period (about 600 in proper time).
    states = run(eccentric_orbit(), 1e-2, 60_000)
    assert max(abs(s.energy_residual()) for s in states) < 1e-8
    radii = [s.r for s in states]
    assert max(radii) > 17 and min(radii) < 9


def test_equatorial_orbit_for_zero_inclination():
    for s in run(camera.orbit_init(9.0, 1.0, 0.35, chi=0.0), 0.05, 500):
        assert camera.schwarzschild_position(s).theta == pytest.approx(math.pi / 2, abs=1e-15)


# --- positions -------------------------------------------------------------------------

def test_schwarzschild_position_examples():
    s = camera.orbit_init(5.0, 1.0, 0.2, chi=0.0)
    p = camera.schwarzschild_position(s)
    assert p.theta == pytest.approx(math.pi / 2) and p.phi == 0.0 and p.r == 5.0
    p = camera.schwarzschild_position(
        camera.OrbitState(5.0, math.pi / 2, 0.8, 0.0, 0.0, 1.0, 1.0))
    assert p.theta == pytest.approx(math.pi / 2) and p.phi == pytest.approx(math.pi / 2)


@given(st.floats(-10, 10), st.floats(0, math.pi), st.floats(1.5, 100))
def test_position_cartesian_identity(psi, chi, r):
    s = camera.OrbitState(r, psi, chi, 0.0, 0.0, 1.0, 1.0)
    p = camera.schwarzschild_position(s)
    spherical = r * np.array([math.sin(p.theta) * math.cos(p.phi),
                              math.sin(p.theta) * math.sin(p.phi), math.cos(p.theta)])
    assert np.max(np.abs(spherical - camera.orbital_cartesian(s))) < 1e-12 * r


# --- Lorentz chain -----------------------------------------------------------------------

def test_static_camera_has_identity_boost():
    s = camera.orbit_init(7.0, math.pi / 2, 0.0, chi=0.5)
    chain = camera.lorentz_chain(s)
    np.testing.assert_array_equal(chain.boost, np.eye(4))
    np.testing.assert_allclose(chain.matrix, chain.orientation @ chain.rotation, atol=0)


def test_circular_orbit_speed_at_isco():
    chain = camera.lorentz_chain(camera.orbit_init(3.0, math.pi / 2, 0.5, 0.2))
    assert np.linalg.norm(chain.velocity) == pytest.approx(0.5, abs=1e-14)
    assert chain.boost[0, 0] == pytest.approx(2 / math.sqrt(3), abs=1e-14)


def test_boost_rejects_superluminal():
    with pytest.raises(DomainError):
        camera.boost_matrix([0.6, 0.0, 0.8])


def test_chain_along_orbit():
    """Along an inclined eccentric orbit: Lorentz matrices preserve the
    Minkowski product, the camera time axis is the orbit 4-velocity and the
    Lorentz factor equals e / sqrt(1 - u)."""
    for s in run(eccentric_orbit(), 1e-2, 3000)[::100]:
        chain = camera.lorentz_chain(s)
        lam = chain.matrix
        np.testing.assert_allclose(lam @ ETA @ lam.T, ETA, atol=1e-10)
        pos, basis = camera.camera_basis(s)
        np.testing.assert_allclose(basis.e_tau, camera.four_velocity(s), atol=1e-10)
        gamma = 1.0 / math.sqrt(1.0 - chain.velocity @ chain.velocity)
        assert abs(s.lorentz_factor() - gamma) < 1e-8
        vectors = [basis.e_tau, basis.e_w, basis.e_h, basis.e_d]
        gram = np.array([[metric_product(pos, a, b) for b in vectors] for a in vectors])
        np.testing.assert_allclose(gram, ETA, atol=1e-10)


def test_default_orientation_looks_at_hole():
    s = camera.orbit_init(10.0, math.pi / 2, 0.0, chi=0.3, psi0=0.7)
    _, basis = camera.camera_basis(s)
    outward = camera.orbital_cartesian(s) / s.r
    # e_d is the outward radial direction; the view axis is -e_d.
    d = basis.e_d[1:] / np.linalg.norm(basis.e_d[1:])
    np.testing.assert_allclose(d, outward, atol=1e-12)


def test_orientation_matrix_is_rotation():
    o = camera.orientation_matrix(0.3, -0.2, 1.1)
    np.testing.assert_allclose(o @ o.T, np.eye(4), atol=1e-14)
    assert np.linalg.det(o[1:, 1:]) == pytest.approx(np.linalg.det(camera.default_orientation()))
