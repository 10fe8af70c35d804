import math

import numpy as np
import pytest

from bhshader import oracle
from bhshader.geodesic import MU
from bhshader.oracle import Terminal


def test_straight_line():
    path = oracle.integrate(0.0, 0.0, max_phi=1.0)
    assert np.all(path.u == 0.0)
    assert path.terminal is Terminal.MAX_STEPS_REACHED


def test_photon_orbit():
    path = oracle.integrate(2.0 / 3.0, 0.0, max_phi=2 * math.pi)
    assert np.abs(path.u - 2.0 / 3.0).max() < 1e-8
    assert path.phi[-1] >= 2 * math.pi - 1e-9


def test_weak_field_deflection():
    total = oracle.total_deflection(0.01)
    assert total == pytest.approx(0.02, rel=0.05)


def test_energy_residual():
    e, u0 = 0.3, 0.2
    ud0 = math.sqrt(e * e - u0 * u0 * (1 - u0))
    path = oracle.integrate(u0, ud0, max_phi=3.0)
    assert path.energy_residual().max() < 1e-10
    assert np.all(np.diff(path.phi) > 0)


def test_fourth_order_convergence():
    big = _residual_at(0.3, -0.2, 2e-2)
    small = _residual_at(0.3, -0.2, 1e-2)
    assert 10.0 < big / small < 24.0


def _residual_at(u0, ud0, step):
    # The public integrator caps the step at 1e-5; drive the RK4 stepper directly.
    e = math.sqrt(ud0 * ud0 + u0 * u0 * (1 - u0))
    u, ud, t = u0, ud0, 0.0
    worst = 0.0
    for _ in range(int(round(2.0 / step))):
        u, ud, t = oracle._rk4(u, ud, t, e, step)
        worst = max(worst, abs(ud * ud - (e * e - u * u * (1 - u))))
    return worst


def test_step_limit():
    with pytest.raises(ValueError):
        oracle.integrate(0.1, 0.0, step=1e-4)


def test_radial_rays():
    assert oracle.reference_trace(10.0, math.pi, 0.4, 1 / 3, 0.05).terminal \
        is Terminal.PLUNGED_AT_HORIZON
    out = oracle.reference_trace(10.0, 0.0, 0.4, 1 / 3, 0.05)
    assert out.terminal is Terminal.ESCAPED_TO_INFINITY and out.result.escape_delta == 0.0


def test_separatrix_ray_never_terminates():
    # e^2 = mu from u < 2/3 winds onto the photon sphere.
    u0 = 0.3
    ud0 = math.sqrt(MU - u0 * u0 * (1 - u0))
    path = oracle.integrate(u0, ud0, max_phi=6 * math.pi)
    assert path.terminal is Terminal.MAX_STEPS_REACHED
    assert abs(path.u[-1] - 2.0 / 3.0) < 1e-3


def test_frozen_reference_values():
    # Reference numbers for regression; computed once at step 1e-7.
    ref = oracle.reference_trace(10.0, 3 * math.pi / 4, math.pi / 2, 1 / 3, 1 / 20, step=1e-7)
    assert ref.terminal is Terminal.ESCAPED_TO_INFINITY
    assert ref.result.escape_delta == pytest.approx(FROZEN_ESCAPE, abs=1e-9)
    assert [h.u_hit for h in ref.result.intersections] == pytest.approx(FROZEN_U, abs=1e-9)
    assert oracle.deflection(0.3, 0.2, step=1e-7) == pytest.approx(FROZEN_DEFLECTION, abs=1e-9)


FROZEN_ESCAPE = 2.6902323088007973
FROZEN_U = [0.12709632349832445]
FROZEN_DEFLECTION = 0.024431229771466834
