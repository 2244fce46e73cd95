"""Condensed-objective checks against step-by-step rollouts.

The condensed quadratic drops the state-only constant, so every test
compares candidate cost *differences* (which decide the control) or full
trajectories, never absolute objective values.
"""

import numpy as np
import pytest

from drivempc.augment import (
    ALL_SWITCH,
    CONST,
    NU,
    NX,
    UPREV,
    ControlConfig,
    assemble_augmented,
    feasible_inputs,
)
from drivempc.qp import (
    CondensedObjective,
    build_candidate_table,
    build_condensed,
    build_tracking_condensed,
    exhaustive_solve,
    feasible_by_matrices,
    last_argmin,
    prediction_matrices,
)
from drivempc.params import DriveParams
from drivempc.tailcost import QuadraticValue

PARAMS = DriveParams()
MODEL = assemble_augmented(PARAMS, ControlConfig())


def random_state(rng, u_prev):
    x = rng.normal(0.0, 0.6, NX)
    x[CONST] = 1.0
    x[UPREV] = u_prev
    x[6:8] = rng.normal(1.0, 0.25, 2)
    return x


def random_tail(rng):
    m = rng.standard_normal((NX, NX))
    return QuadraticValue(p=m + m.T, q=rng.standard_normal(NX), r=float(rng.standard_normal()))


def rollout_cost(x0, seq, u_prev, tail=None, gamma=None):
    """Discounted stage costs plus optional tail, by stepping the model."""
    if gamma is None:
        gamma = MODEL.config.gamma
    x = np.array(x0, dtype=float)
    prev = np.array(u_prev)
    total = 0.0
    for k, u_sw in enumerate(seq):
        total += gamma**k * MODEL.stage_cost(x)
        p = np.abs(u_sw - prev)
        x = MODEL.step(x, np.concatenate([u_sw, p]).astype(float))
        prev = u_sw
    if tail is not None:
        total += gamma ** len(seq) * tail(x)
    return total


def rollout_tracking_cost(x0, seq, u_prev):
    """Undiscounted predicted current error at stages 1..N."""
    x = np.array(x0, dtype=float)
    prev = np.array(u_prev)
    total = 0.0
    for u_sw in seq:
        p = np.abs(u_sw - prev)
        x = MODEL.step(x, np.concatenate([u_sw, p]).astype(float))
        e = MODEL.c[:2] @ x
        total += float(e @ e)
        prev = u_sw
    return total


# -- building blocks -------------------------------------------------------


def test_last_argmin_breaks_ties_late():
    assert last_argmin(np.array([3.0, 1.0, 1.0, 2.0])) == 2
    assert last_argmin(np.array([5.0, 5.0, 5.0])) == 2
    assert last_argmin(np.array([2.0, 9.0])) == 0


def test_prediction_matrices_match_iteration():
    rng = np.random.default_rng(21)
    cal_a, cal_b = prediction_matrices(MODEL, 3)
    x0 = random_state(rng, np.array([0, 1, -1]))
    u = rng.uniform(-1.0, 1.0, 3 * NU)
    stacked = cal_a @ x0 + cal_b @ u
    x = x0.copy()
    np.testing.assert_allclose(stacked[:NX], x)
    for k in range(3):
        x = MODEL.step(x, u[k * NU : (k + 1) * NU])
        np.testing.assert_allclose(stacked[(k + 1) * NX : (k + 2) * NX], x, atol=1e-12)


def test_candidate_table_feasibility_counts():
    for u_prev, expected in [((0, 0, 0), 27), ((1, 0, 0), 18), ((1, 1, -1), 8)]:
        obj = build_condensed(MODEL, 1)
        table = build_candidate_table(obj, np.array(u_prev))
        assert len(table.sequences) == 27
        assert table.feasible.sum() == expected
        feas_ref = feasible_inputs(np.array(u_prev))
        np.testing.assert_array_equal(
            table.sequences[table.feasible, 0, :], feas_ref
        )


def test_candidate_table_chains_flags_over_horizon():
    obj = build_condensed(MODEL, 2)
    table = build_candidate_table(obj, np.array([1, 0, 0]))
    assert len(table.sequences) == 729
    k = table.sequences
    flags0 = np.abs(k[:, 0, :] - np.array([1, 0, 0]))
    flags1 = np.abs(k[:, 1, :] - k[:, 0, :])
    np.testing.assert_array_equal(
        table.feasible, np.all(flags0 <= 1, axis=1) & np.all(flags1 <= 1, axis=1)
    )
    np.testing.assert_allclose(
        table.switch_count, flags0.sum(axis=1) + flags1.sum(axis=1)
    )


# -- condensed costs vs rollouts -------------------------------------------


@pytest.mark.parametrize("horizon", [1, 2])
def test_condensed_differences_match_rollout(horizon):
    rng = np.random.default_rng(31 + horizon)
    tail = random_tail(rng)
    obj = build_condensed(MODEL, horizon, tail=tail)
    for _ in range(5):
        u_prev = ALL_SWITCH[rng.integers(0, 27)]
        table = build_candidate_table(obj, u_prev)
        x0 = random_state(rng, u_prev)
        costs = table.quad + table.u_full @ (2.0 * obj.linear_term(x0))
        feas = np.flatnonzero(table.feasible)
        ref = np.array(
            [rollout_cost(x0, table.sequences[i], u_prev, tail=tail) for i in feas]
        )
        got = costs[feas]
        # constant offset J(x0) cancels in differences
        np.testing.assert_allclose(
            got - got[0], ref - ref[0], atol=1e-8
        )


@pytest.mark.parametrize("horizon", [1, 2])
def test_tracking_condensed_matches_rollout(horizon):
    rng = np.random.default_rng(41 + horizon)
    obj = build_tracking_condensed(MODEL, horizon)
    for _ in range(5):
        u_prev = ALL_SWITCH[rng.integers(0, 27)]
        table = build_candidate_table(obj, u_prev)
        x0 = random_state(rng, u_prev)
        costs = table.quad + table.u_full @ (2.0 * obj.linear_term(x0))
        feas = np.flatnonzero(table.feasible)
        ref = np.array(
            [rollout_tracking_cost(x0, table.sequences[i], u_prev) for i in feas]
        )
        got = costs[feas]
        np.testing.assert_allclose(got - got[0], ref - ref[0], atol=1e-9)


def test_no_tail_condensed_is_pure_stage_cost():
    rng = np.random.default_rng(55)
    obj = build_condensed(MODEL, 2, tail=None)
    u_prev = np.array([0, 0, 0])
    table = build_candidate_table(obj, u_prev)
    x0 = random_state(rng, u_prev)
    costs = table.quad + table.u_full @ (2.0 * obj.linear_term(x0))
    idx = [0, 100, 200]
    ref = np.array([rollout_cost(x0, table.sequences[i], u_prev) for i in idx])
    got = costs[idx]
    np.testing.assert_allclose(got - got[0], ref - ref[0], atol=1e-9)


# -- exhaustive search ------------------------------------------------------


def test_exhaustive_solve_agrees_with_brute_force():
    rng = np.random.default_rng(61)
    tail = random_tail(rng)
    obj = build_condensed(MODEL, 1, tail=tail)
    for _ in range(20):
        u_prev = ALL_SWITCH[rng.integers(0, 27)]
        table = build_candidate_table(obj, u_prev)
        x0 = random_state(rng, u_prev)
        decision = exhaustive_solve(obj, table, x0)
        feas = np.flatnonzero(table.feasible)
        ref_costs = np.array(
            [rollout_cost(x0, table.sequences[i], u_prev, tail=tail) for i in feas]
        )
        best = feas[np.argmin(ref_costs)]
        np.testing.assert_array_equal(decision.u_sw, table.sequences[best, 0])
        np.testing.assert_array_equal(
            decision.p, np.abs(table.sequences[best, 0] - u_prev)
        )
        assert decision.n_feasible == len(feas)


def test_exhaustive_tie_resolution_is_last():
    zero = CondensedObjective(
        q=np.zeros((NU, NU)), f=np.zeros((NU, NX)), g=np.zeros(NU), horizon=1
    )
    u_prev = np.array([0, 0, 0])
    table = build_candidate_table(zero, u_prev)
    decision = exhaustive_solve(zero, table, np.zeros(NX))
    # all 27 candidates cost zero: the scan keeps the last one
    np.testing.assert_array_equal(decision.u_sw, [1, 1, 1])
    assert decision.index == 26


def test_large_switch_weight_freezes_position():
    rng = np.random.default_rng(71)
    obj = build_tracking_condensed(MODEL, 1)
    u_prev = np.array([1, 0, -1])
    table = build_candidate_table(obj, u_prev)
    x0 = random_state(rng, u_prev)
    decision = exhaustive_solve(obj, table, x0, switch_weight=1e6)
    np.testing.assert_array_equal(decision.u_sw, u_prev)


# -- explicit constraint form ----------------------------------------------


@pytest.mark.parametrize("horizon", [1, 2])
def test_matrix_feasibility_matches_combinatorial(horizon):
    rng = np.random.default_rng(81 + horizon)
    obj = build_condensed(MODEL, horizon)
    for _ in range(6):
        u_prev = ALL_SWITCH[rng.integers(0, 27)]
        table = build_candidate_table(obj, u_prev)
        x0 = random_state(rng, u_prev)
        by_matrices = feasible_by_matrices(MODEL, horizon, x0, table.u_full)
        np.testing.assert_array_equal(by_matrices, table.feasible)


def test_horizon_validation():
    with pytest.raises(ValueError):
        build_condensed(MODEL, 0)
    with pytest.raises(ValueError):
        build_tracking_condensed(MODEL, 0)
