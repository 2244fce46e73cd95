"""Closed-loop harness: scenario timing, trace recording, CSV output."""

import numpy as np
import pytest

from drivempc.augment import ControlConfig, assemble_augmented
from drivempc.controller import TrackingController
from drivempc.metrics import max_level_jump
from drivempc.motor import steady_state, torque
from drivempc.params import DriveParams
from drivempc.simloop import (
    RunTrace,
    Scenario,
    TorqueStep,
    run_closed_loop,
    write_trace_csv,
)

PARAMS = DriveParams()
CONFIG = ControlConfig()
MODEL = assemble_augmented(PARAMS, CONFIG)
PERIOD = 2.0 * np.pi / PARAMS.omega_b  # 20 ms fundamental


def short_run(duration=0.002, scenario=None):
    ctl = TrackingController(MODEL)
    sc = scenario or Scenario(duration_s=duration)
    return run_closed_loop(ctl, sc, params=PARAMS)


# -- scenario ---------------------------------------------------------------


def test_torque_profile_steps_apply_in_order():
    sc = Scenario(
        duration_s=1.0,
        torque_initial=1.0,
        steps=(TorqueStep(0.1, 0.0), TorqueStep(0.2, 0.5)),
    )
    assert sc.torque_at(0.0) == 1.0
    assert sc.torque_at(0.09999) == 1.0
    assert sc.torque_at(0.1) == 0.0
    assert sc.torque_at(0.15) == 0.0
    assert sc.torque_at(0.2) == 0.5
    assert sc.torque_at(0.9) == 0.5


# -- closed loop ------------------------------------------------------------


def test_trace_shapes_and_legality():
    n = 80
    tr = short_run(duration=n * PARAMS.ts)
    assert tr.t.shape == (n,)
    np.testing.assert_allclose(np.diff(tr.t), PARAMS.ts)
    assert tr.x_ph.shape == (n, 4)
    assert tr.u.shape == (n, 3) and tr.u.dtype.kind == "i"
    assert set(np.unique(tr.u)) <= {-1, 0, 1}
    assert max_level_jump(tr) <= 1
    # change flags match applied transitions (initial positions are zero)
    u_ext = np.vstack([np.zeros(3, dtype=int), tr.u])
    np.testing.assert_array_equal(tr.p, np.abs(np.diff(u_ext, axis=0)))


def test_recorded_torque_is_recomputable():
    tr = short_run()
    np.testing.assert_allclose(tr.torque, torque(tr.x_ph.T, PARAMS), atol=1e-14)
    np.testing.assert_allclose(tr.torque_ref, 1.0)


def test_run_starts_on_steady_orbit():
    tr = short_run()
    np.testing.assert_allclose(tr.x_ph[0], steady_state(PARAMS, 1.0), atol=1e-12)
    cold = run_closed_loop(
        TrackingController(MODEL),
        Scenario(duration_s=0.001, start_at_steady=False),
        params=PARAMS,
    )
    np.testing.assert_allclose(cold.x_ph[0], np.zeros(4))


def test_command_steps_register_in_trace():
    sc = Scenario(duration_s=0.002, steps=(TorqueStep(0.001, 0.0),))
    tr = short_run(scenario=sc)
    k = int(round(0.001 / PARAMS.ts))
    np.testing.assert_allclose(tr.torque_ref[:k], 1.0)
    np.testing.assert_allclose(tr.torque_ref[k:], 0.0)


def test_loop_tracks_reference_orbit():
    tr = short_run(duration=2 * PERIOD)
    err = np.abs(tr.x_ph[:, :2] - tr.i_ref_ab)
    assert err.max() < 0.3  # ripple-level deviation only
    half = len(tr.t) // 2
    rated = torque(steady_state(PARAMS, 1.0), PARAMS)
    assert np.mean(tr.torque[half:]) == pytest.approx(rated, abs=0.05)


def test_estimator_output_follows_filter():
    tr = short_run(duration=0.001)
    from drivempc.augment import filter_matrices

    a_flt, b_flt = filter_matrices(CONFIG, PARAMS.ts)
    flt = np.array([1.0, 1.0])
    p_prev = np.zeros(3)
    for k in range(len(tr.t)):
        flt = a_flt @ flt + (b_flt / CONFIG.fsw_target) @ p_prev
        assert tr.f_hat[k] == pytest.approx(flt[1] * CONFIG.fsw_target, rel=1e-12)
        p_prev = tr.p[k]


def test_window_respects_warmup_and_bounds():
    n = 100
    tr = short_run(
        duration=n * PARAMS.ts,
        scenario=Scenario(duration_s=n * PARAMS.ts, warmup_s=20 * PARAMS.ts),
    )
    sl = tr.window()
    assert sl.start == 20 and sl.stop == n
    sl2 = tr.window(start_s=10 * PARAMS.ts, end_s=50 * PARAMS.ts)
    assert sl2.start == 10 and sl2.stop == 50


# -- delimited output -------------------------------------------------------


def test_trace_csv_roundtrip(tmp_path):
    tr = short_run(duration=0.001)
    path = tmp_path / "trace.csv"
    write_trace_csv(tr, path, comment="config deadbeef")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config deadbeef"
    assert lines[1].startswith("t_s,i_a,i_b,i_c,")
    assert len(lines) == 2 + len(tr.t)
    data = np.loadtxt(path, delimiter=",", skiprows=2)
    np.testing.assert_allclose(data[:, 0], tr.t, atol=1e-12)
    np.testing.assert_allclose(data[:, 1:4], tr.i_abc, rtol=1e-9)
    np.testing.assert_allclose(data[:, 7:10], tr.u)
    np.testing.assert_allclose(data[:, 10], tr.f_hat, rtol=1e-9)


def test_trace_csv_without_comment(tmp_path):
    tr = short_run(duration=0.0005)
    path = tmp_path / "t.csv"
    write_trace_csv(tr, path)
    assert path.read_text().splitlines()[0].startswith("t_s,")
