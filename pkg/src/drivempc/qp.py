"""Condensed finite-horizon problem and exhaustive candidate search.

Over a horizon of ``N`` sampling intervals the predicted states are an
affine function of the stacked input sequence ``U`` (switch positions and
change flags interleaved per stage), so the discounted objective

    sum_{k=0}^{N-1} gamma^k ||C x(k)||^2  +  gamma^N V0(x(N))

collapses to ``U'QU + 2 f(x0)'U + const(x0)``.  The constant is dropped:
it cannot change which candidate wins.  With three levels per phase there
are ``27**N`` switch sequences; feasibility (one level step per phase per
interval, chained through the sequence) and the change flags depend only on
the previous applied position, so everything that does not depend on the
measured state is precomputed per previous-position value and reused.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import NU, NX, AugmentedModel, input_sequences
from .tailcost import QuadraticValue

J_UB_FLOAT = float(np.finfo(float).max)


def last_argmin(values: np.ndarray) -> int:
    """Index of the minimum; ties resolve to the last occurrence."""
    values = np.asarray(values)
    return len(values) - 1 - int(np.argmin(values[::-1]))


def prediction_matrices(
    model: AugmentedModel, horizon: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stacked prediction ``X = calA x0 + calB U`` over ``x(0..N)``.

    Returns ``calA`` of shape ((N+1)*12, 12) and ``calB`` of shape
    ((N+1)*12, 6N); stage ``k`` occupies rows ``12k:12(k+1)``.
    """
    a, b = model.a, model.b
    n = horizon
    cal_a = np.zeros(((n + 1) * NX, NX))
    cal_b = np.zeros(((n + 1) * NX, n * NU))
    power = np.eye(NX)
    cal_a[:NX] = power
    for k in range(1, n + 1):
        power = a @ power  # A^k
        cal_a[k * NX : (k + 1) * NX] = power
    for k in range(1, n + 1):
        for j in range(k):
            # effect of u(j) on x(k): A^(k-1-j) B
            cal_b[k * NX : (k + 1) * NX, j * NU : (j + 1) * NU] = (
                np.linalg.matrix_power(a, k - 1 - j) @ b
            )
    return cal_a, cal_b


@dataclass(frozen=True)
class CondensedObjective:
    """Quadratic candidate cost ``U'QU + 2(F x0 + g)'U`` for one horizon."""

    q: np.ndarray  # (6N, 6N)
    f: np.ndarray  # (6N, 12)
    g: np.ndarray  # (6N,)
    horizon: int

    def linear_term(self, x0: np.ndarray) -> np.ndarray:
        return self.f @ x0 + self.g


def build_condensed(
    model: AugmentedModel,
    horizon: int,
    tail: QuadraticValue | None = None,
    gamma: float | None = None,
) -> CondensedObjective:
    """Condense the discounted tracking objective onto the input sequence.

    ``tail=None`` drops the terminal value function (pure finite-horizon
    cost).  ``gamma`` defaults to the model's configured discount.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if gamma is None:
        gamma = model.config.gamma
    cal_a, cal_b = prediction_matrices(model, horizon)
    ctc = model.c.T @ model.c
    nu = horizon * NU

    q = np.zeros((nu, nu))
    f = np.zeros((nu, NX))
    g = np.zeros(nu)
    for k in range(horizon):  # stage costs at x(0..N-1); x(0) rows of calB are 0
        bk = cal_b[k * NX : (k + 1) * NX]
        ak = cal_a[k * NX : (k + 1) * NX]
        w = gamma**k
        q += w * bk.T @ ctc @ bk
        f += w * bk.T @ ctc @ ak
    if tail is not None:
        b_end = cal_b[horizon * NX :]
        a_end = cal_a[horizon * NX :]
        w = gamma**horizon
        q += w * b_end.T @ tail.p @ b_end
        f += w * b_end.T @ tail.p @ a_end
        g += w * b_end.T @ tail.q
    return CondensedObjective(q=0.5 * (q + q.T), f=f, g=g, horizon=horizon)


def build_tracking_condensed(model: AugmentedModel, horizon: int) -> CondensedObjective:
    """Undiscounted predicted current-error cost at stages ``1..N``.

    This is the reference-design objective (no tail, no discount, current
    error only); the switching effort enters separately as a count of
    level changes, see :class:`CandidateTable.switch_count`.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    cal_a, cal_b = prediction_matrices(model, horizon)
    ci = model.c[:2]  # current-error rows only
    ctc = ci.T @ ci
    nu = horizon * NU
    q = np.zeros((nu, nu))
    f = np.zeros((nu, NX))
    for k in range(1, horizon + 1):
        bk = cal_b[k * NX : (k + 1) * NX]
        ak = cal_a[k * NX : (k + 1) * NX]
        q += bk.T @ ctc @ bk
        f += bk.T @ ctc @ ak
    return CondensedObjective(q=0.5 * (q + q.T), f=f, g=np.zeros(nu), horizon=horizon)


# -- candidate tables ------------------------------------------------------


@dataclass(frozen=True)
class CandidateTable:
    """Per previous-position constants of the exhaustive search.

    ``u_full`` stacks ``[u_sw(k), p(k)]`` per stage with the change flags
    chained through the sequence from the table's previous position;
    infeasible sequences (any flag of 2) keep their rows but are masked.
    """

    u_prev: np.ndarray  # (3,) int
    sequences: np.ndarray  # (K, N, 3) int, lexicographic
    u_full: np.ndarray  # (K, 6N) float
    feasible: np.ndarray  # (K,) bool
    quad: np.ndarray  # (K,) U'QU for the active objective
    switch_count: np.ndarray  # (K,) total level changes over the horizon

    @property
    def first_inputs(self) -> np.ndarray:
        return self.sequences[:, 0, :]


def build_candidate_table(
    objective: CondensedObjective, u_prev: np.ndarray
) -> CandidateTable:
    """Precompute every state-independent quantity for one previous position."""
    n = objective.horizon
    seq = input_sequences(n)
    prev = np.concatenate(
        [np.broadcast_to(u_prev, (len(seq), 1, 3)), seq[:, :-1, :]], axis=1
    )
    flags = np.abs(seq - prev)
    feasible = np.all(flags <= 1, axis=(1, 2))
    u_full = np.concatenate([seq, flags], axis=2).astype(float).reshape(len(seq), n * NU)
    quad = np.einsum("ki,ij,kj->k", u_full, objective.q, u_full)
    return CandidateTable(
        u_prev=np.array(u_prev, dtype=int),
        sequences=seq,
        u_full=u_full,
        feasible=feasible,
        quad=quad,
        switch_count=flags.sum(axis=(1, 2)).astype(float),
    )


@dataclass(frozen=True)
class Decision:
    """Outcome of one exhaustive search."""

    u_sw: np.ndarray  # (3,) int, first-stage switch positions
    p: np.ndarray  # (3,) int, first-stage change flags
    cost: float
    index: int
    n_feasible: int


def exhaustive_solve(
    objective: CondensedObjective,
    table: CandidateTable,
    x0: np.ndarray,
    j_ub: float = J_UB_FLOAT,
    switch_weight: float = 0.0,
) -> Decision:
    """Scan every candidate sequence and return the winning first stage.

    ``switch_weight`` adds ``weight * (total level changes)`` to each
    candidate (used by the reference design); the trained controller
    leaves it at zero.  Ties keep the last-scanned candidate so behavior
    matches a hardware scan that accepts on less-than-or-equal.
    """
    costs = table.quad + table.u_full @ (2.0 * objective.linear_term(x0))
    if switch_weight:
        costs = costs + switch_weight * table.switch_count
    costs = np.where(table.feasible, costs, j_ub)
    idx = last_argmin(costs)
    u_sw = table.sequences[idx, 0].copy()
    return Decision(
        u_sw=u_sw,
        p=np.abs(u_sw - table.u_prev),
        cost=float(costs[idx]),
        index=idx,
        n_feasible=int(table.feasible.sum()),
    )


# -- explicit constraint matrices (reference form) -------------------------


def constraint_matrices(
    model: AugmentedModel, horizon: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stacked inequality description ``A_ineq U <= S calA x0`` plus flag caps.

    Returns ``(a_ineq, s_cal_a, cap)`` with the first ``12N`` rows encoding
    ``|u(k) - u(k-1)| <= p(k)`` per phase (the previous position entering
    through the state for ``k = 0``) and the last ``6N`` rows capping the
    change flags at one level (``T u(k) <= 1`` and ``-T u(k) <= 1``).
    The exhaustive path checks the same set combinatorially; this explicit
    form exists for verification.
    """
    n = horizon
    g_sel = np.hstack([np.eye(3), np.zeros((3, 3))])
    t_sel = np.hstack([np.zeros((3, 3)), np.eye(3)])
    w_sel = np.zeros((3, NX))
    w_sel[:, NX - 3 :] = np.eye(3)

    cal_a, cal_b = prediction_matrices(model, n)
    rows_r = []
    rows_s = []
    for k in range(n):
        r_blk = np.zeros((6, n * NU))
        r_blk[:3, k * NU : (k + 1) * NU] = g_sel - t_sel
        r_blk[3:, k * NU : (k + 1) * NU] = -g_sel - t_sel
        s_blk = np.zeros((6, (n + 1) * NX))
        s_blk[:3, k * NX : (k + 1) * NX] = w_sel
        s_blk[3:, k * NX : (k + 1) * NX] = -w_sel
        rows_r.append(r_blk)
        rows_s.append(s_blk)
    r_mat = np.vstack(rows_r)
    s_mat = np.vstack(rows_s)

    caps = []
    for k in range(n):
        cap_blk = np.zeros((6, n * NU))
        cap_blk[:3, k * NU : (k + 1) * NU] = t_sel
        cap_blk[3:, k * NU : (k + 1) * NU] = -t_sel
        caps.append(cap_blk)
    cap_mat = np.vstack(caps)

    a_ineq = np.vstack([r_mat - s_mat @ cal_b, cap_mat])
    s_cal_a = s_mat @ cal_a
    cap = np.ones(6 * n)
    return a_ineq, s_cal_a, cap


def feasible_by_matrices(
    model: AugmentedModel,
    horizon: int,
    x0: np.ndarray,
    u_full: np.ndarray,
    tol: float = 1e-9,
) -> np.ndarray:
    """Feasibility of stacked candidates via the explicit inequalities."""
    a_ineq, s_cal_a, cap = constraint_matrices(model, horizon)
    rhs = np.concatenate([s_cal_a @ x0, cap])
    return np.all(u_full @ a_ineq.T <= rhs + tol, axis=-1)
