"""Physical model checks: frame transforms, discretization, torque.

Frozen numbers were computed independently (closed-form where available,
scipy.linalg.expm for the discretization) and pinned here so regressions in
the hand-rolled series exponential or the matrix assembly show up directly.
"""

import numpy as np
import pytest
import scipy.linalg as sla

from drivempc.motor import (
    CLARKE,
    CLARKE_PINV,
    build_plant,
    clarke,
    continuous_matrices,
    discretize,
    expm_taylor,
    inverse_clarke,
    steady_state,
    switch_voltage,
    torque,
)
from drivempc.params import DriveParams, rated_slip_speed

PARAMS = DriveParams()


def test_clarke_basis_vectors():
    np.testing.assert_allclose(clarke([1.0, 0.0, 0.0]), [2.0 / 3.0, 0.0])
    np.testing.assert_allclose(
        clarke([0.0, 1.0, 0.0]), [-1.0 / 3.0, 1.0 / np.sqrt(3.0)]
    )
    # balanced sinusoidal set maps to a unit circle point
    th = 0.7
    abc = np.cos([th, th - 2 * np.pi / 3, th + 2 * np.pi / 3])
    np.testing.assert_allclose(clarke(abc), [np.cos(th), np.sin(th)], atol=1e-12)


def test_clarke_pseudo_inverse_round_trip():
    np.testing.assert_allclose(CLARKE @ CLARKE_PINV, np.eye(2), atol=1e-15)
    rng = np.random.default_rng(3)
    ab = rng.standard_normal((2, 5))
    np.testing.assert_allclose(clarke(inverse_clarke(ab)), ab, atol=1e-14)


def test_common_mode_is_rejected():
    np.testing.assert_allclose(clarke([1.0, 1.0, 1.0]), [0.0, 0.0], atol=1e-15)


def test_switch_voltage_scaling():
    v = switch_voltage(np.array([1, -1, 0]), PARAMS.vdc)
    np.testing.assert_allclose(v, PARAMS.vdc / 2 * np.array([1.0, -1 / np.sqrt(3)]))


def test_derived_parameters():
    assert PARAMS.xs == pytest.approx(2.4982)
    assert PARAMS.xr == pytest.approx(2.4593)
    assert PARAMS.det_x == pytest.approx(0.62649205)
    assert PARAMS.tau_s == pytest.approx(13.336459655991911)
    assert PARAMS.tau_r == pytest.approx(270.2527472527472)
    assert PARAMS.ts_pu == pytest.approx(0.007853981633974483)


def test_continuous_matrix_entries():
    dm, e, f = continuous_matrices(PARAMS)
    k = PARAMS.xm / PARAMS.det_x
    np.testing.assert_allclose(
        dm[0], [-1 / PARAMS.tau_s, 0.0, k / PARAMS.tau_r, PARAMS.omega_r * k]
    )
    np.testing.assert_allclose(
        dm[2], [PARAMS.xm / PARAMS.tau_r, 0.0, -1 / PARAMS.tau_r, -PARAMS.omega_r]
    )
    # frozen spot values
    assert dm[0, 0] == pytest.approx(-0.074982418557440172, rel=1e-12)
    assert dm[0, 3] == pytest.approx(3.7160815239119884, rel=1e-12)
    assert e[0, 0] == pytest.approx(2.5254106044389069, rel=1e-12)
    assert e[2, 0] == 0.0 and e[3, 1] == 0.0
    np.testing.assert_allclose(f, np.hstack([np.eye(2), np.zeros((2, 2))]))


def test_expm_taylor_matches_scipy():
    rng = np.random.default_rng(11)
    for _ in range(10):
        m = rng.standard_normal((5, 5))
        np.testing.assert_allclose(expm_taylor(m), sla.expm(m), rtol=1e-11, atol=1e-11)
    np.testing.assert_allclose(expm_taylor(np.zeros((3, 3))), np.eye(3))


def test_discretization_frozen_values():
    plant = build_plant(PARAMS)
    assert plant.a[0, 0] == pytest.approx(0.99941126913688494, rel=1e-12)
    assert plant.a[0, 3] == pytest.approx(0.029176301126991537, rel=1e-12)
    assert plant.a[2, 0] == pytest.approx(6.8241053188380525e-05, rel=1e-10)
    assert plant.a[3, 2] == pytest.approx(0.0077831172941355206, rel=1e-10)
    assert plant.b[0, 0] == pytest.approx(0.01982868930779139, rel=1e-12)
    assert plant.b[1, 1] == pytest.approx(0.017172151956331937, rel=1e-12)
    assert plant.b[0, 1] == pytest.approx(-0.0099143389519225755, rel=1e-12)


def test_discretization_against_scipy_block_exponential():
    dm, e, _ = continuous_matrices(PARAMS)
    a, b = discretize(dm, e, PARAMS.ts_pu)
    blk = np.zeros((7, 7))
    blk[:4, :4] = dm * PARAMS.ts_pu
    blk[:4, 4:] = e * PARAMS.ts_pu
    phi = sla.expm(blk)
    np.testing.assert_allclose(a, phi[:4, :4], atol=1e-13)
    np.testing.assert_allclose(b, phi[:4, 4:], atol=1e-13)


def test_discretization_semigroup_property():
    dm, e, _ = continuous_matrices(PARAMS)
    a1, b1 = discretize(dm, e, PARAMS.ts_pu)
    a2, b2 = discretize(dm, e, 2 * PARAMS.ts_pu)
    np.testing.assert_allclose(a2, a1 @ a1, atol=1e-13)
    np.testing.assert_allclose(b2, a1 @ b1 + b1, atol=1e-13)


def test_discretization_zero_dynamics_limit():
    e = np.arange(12.0).reshape(4, 3)
    a, b = discretize(np.zeros((4, 4)), e, 0.25)
    np.testing.assert_allclose(a, np.eye(4))
    np.testing.assert_allclose(b, 0.25 * e)


def test_discrete_model_is_stable():
    plant = build_plant(PARAMS)
    assert np.max(np.abs(np.linalg.eigvals(plant.a))) < 1.0


def test_rated_slip_speed_matches_rated_voltage():
    w = rated_slip_speed(PARAMS)
    assert w == pytest.approx(0.991142888961957, rel=1e-12)
    # defining property: on the unit-current orbit at that speed the voltage
    # needed to stay on the orbit has exactly base magnitude.  Derivative of
    # the orbit is j*x, so v = (det/xr) * (j*i - current rows of dm @ x).
    p = PARAMS.with_speed(w)
    dm, _, _ = continuous_matrices(p)
    x0 = steady_state(p, 1.0)
    drift = dm[:2] @ x0
    didt = np.array([-x0[1], x0[0]])  # j * i for the rotating phasor
    v = (p.det_x / p.xr) * (didt - drift)
    assert np.hypot(*v) == pytest.approx(1.0, abs=1e-12)
    # default parameter set carries the rated speed
    assert PARAMS.omega_r == pytest.approx(w, rel=1e-12)
    # the orbit leaves modulation headroom: linear range is vdc/sqrt(3)
    assert np.hypot(*v) < PARAMS.vdc / np.sqrt(3.0)


def test_steady_state_frozen_orbit():
    x0 = steady_state(PARAMS, 1.0)
    np.testing.assert_allclose(
        x0,
        [0.0, -1.0, -0.83548256257915821, -0.34903998665744124],
        atol=1e-14,
    )
    assert torque(x0, PARAMS) == pytest.approx(0.7979770630838795, rel=1e-12)
    assert np.hypot(x0[2], x0[3]) == pytest.approx(0.90546122206291291, rel=1e-12)


def test_zero_slip_produces_zero_torque():
    p = PARAMS.with_speed(1.0)
    assert torque(steady_state(p, 1.0), p) == pytest.approx(0.0, abs=1e-12)


def test_steady_state_scales_with_torque_command():
    x1 = steady_state(PARAMS, 1.0)
    x03 = steady_state(PARAMS, 0.3)
    np.testing.assert_allclose(x03, 0.3 * x1, atol=1e-14)
    assert torque(x03, PARAMS) == pytest.approx(0.09 * torque(x1, PARAMS), rel=1e-9)


def test_steady_state_phase_advance_is_a_rotation():
    th = 0.37
    x0 = steady_state(PARAMS, 1.0)
    xth = steady_state(PARAMS, 1.0, phase=th)
    r = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    np.testing.assert_allclose(xth[:2], r @ x0[:2], atol=1e-12)
    np.testing.assert_allclose(xth[2:], r @ x0[2:], atol=1e-12)


def test_plant_step_tracks_steady_orbit_with_matched_voltage():
    # On the rated orbit the free response decays only slowly; one sampling
    # step with zero input must stay within the one-step voltage authority.
    plant = build_plant(PARAMS)
    x0 = steady_state(PARAMS, 1.0)
    x1_free = plant.step(x0, np.zeros(3))
    x1_orbit = steady_state(PARAMS, 1.0, phase=PARAMS.ts_pu)
    # flux is input-decoupled over one step up to O(ts^2) terms
    np.testing.assert_allclose(x1_free[2:], x1_orbit[2:], atol=2e-4)


def test_torque_trajectory_shape():
    xs = np.stack([steady_state(PARAMS, 1.0, phase=t) for t in np.linspace(0, 1, 7)], axis=1)
    tq = torque(xs, PARAMS)
    assert tq.shape == (7,)
    np.testing.assert_allclose(tq, tq[0], rtol=1e-9)
