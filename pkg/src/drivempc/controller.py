"""Receding-horizon controllers over the exhaustive candidate search.

Both controllers keep the bookkeeping state the plant cannot measure: the
reference oscillator, the switching-frequency estimator (trained controller
only) and the previously applied switch positions.  Call :meth:`reset`
before a run, then :meth:`step` once per sampling interval with the measured
physical state and the torque command; the returned switch positions are
applied to the plant for the next interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .augment import (
    ALL_SWITCH,
    CONST,
    FLT,
    NX,
    OSC,
    PHYS,
    UPREV,
    AugmentedModel,
    filter_matrices,
    oscillator_reset,
    oscillator_step,
)
from .qp import (
    J_UB_FLOAT,
    CandidateTable,
    CondensedObjective,
    Decision,
    build_candidate_table,
    build_condensed,
    build_tracking_condensed,
    exhaustive_solve,
)
from .tailcost import TailArtifact


def _u_prev_index(u_prev: np.ndarray) -> int:
    """Position of a switch combination in the lexicographic table."""
    return int((u_prev[0] + 1) * 9 + (u_prev[1] + 1) * 3 + (u_prev[2] + 1))


@dataclass
class _ControllerState:
    osc: np.ndarray
    flt: np.ndarray  # normalized estimator states (target units)
    u_prev: np.ndarray  # (3,) int
    p_prev: np.ndarray  # (3,) int
    torque_ref: float


class _ExhaustiveController:
    """Shared machinery: internal state, candidate-table cache, stepping."""

    def __init__(self, model: AugmentedModel, objective: CondensedObjective,
                 switch_weight: float = 0.0, j_ub: float = J_UB_FLOAT):
        self.model = model
        self.objective = objective
        self.switch_weight = switch_weight
        self.j_ub = j_ub
        a_flt, b_flt = filter_matrices(model.config, model.params.ts)
        self._a_flt = a_flt
        self._b_flt_norm = b_flt / model.config.fsw_target
        self._tables: dict[int, CandidateTable] = {}
        self._state: _ControllerState | None = None
        self.last_decision: Decision | None = None

    @property
    def horizon(self) -> int:
        return self.objective.horizon

    # -- state management --------------------------------------------------

    def reset(
        self,
        torque_ref: float,
        u_prev: np.ndarray | None = None,
        f_hat_ratio: float = 1.0,
    ) -> None:
        """Initialize bookkeeping for a fresh run.

        The oscillator starts at phase zero with the commanded amplitude;
        the frequency estimator starts settled at ``f_hat_ratio`` times
        the target (1.0: assume on-target switching history).
        """
        up = np.zeros(3, dtype=int) if u_prev is None else np.array(u_prev, dtype=int)
        self._state = _ControllerState(
            osc=torque_ref * np.array([0.0, -1.0]),
            flt=np.array([f_hat_ratio, f_hat_ratio], dtype=float),
            u_prev=up,
            p_prev=np.zeros(3, dtype=int),
            torque_ref=torque_ref,
        )

    def table_for(self, u_prev: np.ndarray) -> CandidateTable:
        key = _u_prev_index(u_prev)
        table = self._tables.get(key)
        if table is None:
            table = build_candidate_table(self.objective, ALL_SWITCH[key])
            self._tables[key] = table
        return table

    def bookkeeping_state(self, x_ph: np.ndarray) -> np.ndarray:
        """Assemble the full model state from a measurement (post-update)."""
        st = self._state
        x0 = np.empty(NX)
        x0[PHYS] = x_ph
        x0[OSC] = st.osc
        x0[FLT] = st.flt
        x0[CONST] = 1.0
        x0[UPREV] = st.u_prev
        return x0

    def step(self, x_ph: np.ndarray, torque_ref: float) -> np.ndarray:
        """One control interval; returns switch positions to apply."""
        st = self._state
        if st is None:
            raise RuntimeError("controller.reset() must be called before step()")
        # reference oscillator: advance every interval, rescale on command change
        st.osc = oscillator_step(st.osc, self.model.params.ts_pu)
        if torque_ref != st.torque_ref:
            st.osc = oscillator_reset(st.osc, torque_ref)
            st.torque_ref = torque_ref
        # frequency estimator catches up on the change flags of the last interval
        self._advance_filter(st)
        x0 = self.bookkeeping_state(x_ph)
        decision = exhaustive_solve(
            self.objective,
            self.table_for(st.u_prev),
            x0,
            j_ub=self.j_ub,
            switch_weight=self.switch_weight,
        )
        self.last_decision = decision
        st.p_prev = decision.p
        st.u_prev = decision.u_sw
        return decision.u_sw

    def _advance_filter(self, st: _ControllerState) -> None:
        st.flt = self._a_flt @ st.flt + self._b_flt_norm @ st.p_prev


class TailCostController(_ExhaustiveController):
    """Trained controller: discounted tracking cost plus quadratic tail.

    The tail artifact must match the model's drive parameters and control
    configuration (fingerprint check); a mismatch raises rather than
    silently running with a foreign value function.
    """

    def __init__(
        self,
        model: AugmentedModel,
        artifact: TailArtifact,
        horizon: int = 1,
        j_ub: float = J_UB_FLOAT,
    ):
        artifact.check_fingerprint(model.params, model.config)
        objective = build_condensed(model, horizon, tail=artifact.tail)
        super().__init__(model, objective, switch_weight=0.0, j_ub=j_ub)
        self.artifact = artifact


class TrackingController(_ExhaustiveController):
    """Reference design: predicted current error plus weighted switch count.

    ``switch_weight`` trades tracking quality against switching effort and
    thereby sets the realized switching frequency.
    """

    def __init__(
        self,
        model: AugmentedModel,
        switch_weight: float = 0.00235,
        horizon: int = 1,
        j_ub: float = J_UB_FLOAT,
    ):
        objective = build_tracking_condensed(model, horizon)
        super().__init__(model, objective, switch_weight=switch_weight, j_ub=j_ub)
