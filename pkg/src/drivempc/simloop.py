"""Closed-loop simulation of controller and plant.

The plant integrates the exact discrete physical model; the controller sees
only the measured physical state and the torque command, mirroring the
real-time loop (compute interval k's switch positions from interval k's
measurement, apply over interval k).  Output is a plain trace of arrays; a
delimited-text writer is provided.  No plotting happens here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .motor import PlantModel, build_plant, inverse_clarke, steady_state, torque
from .params import DriveParams


@dataclass(frozen=True)
class TorqueStep:
    """Torque command change at a given simulation time."""

    time_s: float
    torque: float


@dataclass(frozen=True)
class Scenario:
    """Torque-command profile and timing of one closed-loop run.

    ``warmup_s`` marks the part of the run excluded from steady-state
    metrics (filter settling, initial transients); metric helpers receive
    it through :class:`RunTrace`.
    """

    duration_s: float
    torque_initial: float = 1.0
    steps: tuple[TorqueStep, ...] = ()
    warmup_s: float = 0.0
    start_at_steady: bool = True

    def torque_at(self, t: float) -> float:
        out = self.torque_initial
        for step in self.steps:
            if t >= step.time_s:
                out = step.torque
        return out


@dataclass
class RunTrace:
    """Arrays recorded over one closed-loop run (one row per interval)."""

    t: np.ndarray  # (n,) seconds
    x_ph: np.ndarray  # (n, 4)
    u: np.ndarray  # (n, 3) applied switch positions
    p: np.ndarray  # (n, 3) change flags
    torque: np.ndarray  # (n,)
    torque_ref: np.ndarray  # (n,)
    i_ref_ab: np.ndarray  # (n, 2) reference current, two-axis
    f_hat: np.ndarray  # (n,) estimator output in Hz
    cost: np.ndarray  # (n,) winning candidate cost
    warmup_s: float
    params: DriveParams

    @property
    def ts(self) -> float:
        return self.params.ts

    @property
    def i_abc(self) -> np.ndarray:
        """Three-phase stator currents, shape (n, 3)."""
        return inverse_clarke(self.x_ph[:, :2].T).T

    @property
    def i_ref_abc(self) -> np.ndarray:
        """Three-phase reference currents, shape (n, 3)."""
        return inverse_clarke(self.i_ref_ab.T).T

    def window(self, start_s: float | None = None, end_s: float | None = None) -> slice:
        """Index slice covering ``[start_s, end_s)`` (defaults: post-warmup)."""
        t0 = self.warmup_s if start_s is None else start_s
        i0 = int(np.searchsorted(self.t, t0 - 1e-12))
        i1 = len(self.t) if end_s is None else int(np.searchsorted(self.t, end_s - 1e-12))
        return slice(i0, i1)


def run_closed_loop(
    controller,
    scenario: Scenario,
    params: DriveParams | None = None,
    plant: PlantModel | None = None,
) -> RunTrace:
    """Simulate the loop over the scenario and record every interval.

    The controller is reset to the initial torque command; the plant
    starts on the matching steady-state orbit unless the scenario says
    otherwise.
    """
    if params is None:
        params = controller.model.params
    if plant is None:
        plant = build_plant(params)
    n = int(round(scenario.duration_s / params.ts))
    t = np.arange(n) * params.ts

    x = (
        steady_state(params, scenario.torque_initial)
        if scenario.start_at_steady
        else np.zeros(4)
    )
    controller.reset(scenario.torque_initial)

    x_ph = np.empty((n, 4))
    u_hist = np.empty((n, 3), dtype=int)
    p_hist = np.empty((n, 3), dtype=int)
    tref_hist = np.empty(n)
    iref_hist = np.empty((n, 2))
    fhat_hist = np.empty(n)
    cost_hist = np.empty(n)

    for k in range(n):
        tref = scenario.torque_at(t[k])
        u_sw = controller.step(x, tref)
        st = controller._state
        x_ph[k] = x
        u_hist[k] = u_sw
        p_hist[k] = controller.last_decision.p
        tref_hist[k] = tref
        iref_hist[k] = st.osc
        fhat_hist[k] = st.flt[1] * controller.model.config.fsw_target
        cost_hist[k] = controller.last_decision.cost
        x = plant.step(x, u_sw)

    return RunTrace(
        t=t,
        x_ph=x_ph,
        u=u_hist,
        p=p_hist,
        torque=np.asarray(torque(x_ph.T, params)),
        torque_ref=tref_hist,
        i_ref_ab=iref_hist,
        f_hat=fhat_hist,
        cost=cost_hist,
        warmup_s=scenario.warmup_s,
        params=params,
    )


def write_trace_csv(trace: RunTrace, path: str, comment: str | None = None) -> None:
    """Write the run trace as comma-separated text, one row per interval.

    ``comment`` adds one ``#``-prefixed line above the column header,
    typically the configuration fingerprint.
    """
    i_abc = trace.i_abc
    i_ref = trace.i_ref_abc
    header = (
        "t_s,i_a,i_b,i_c,i_ref_a,i_ref_b,i_ref_c,"
        "u_a,u_b,u_c,f_hat_hz,torque,torque_ref"
    )
    if comment:
        header = f"# {comment}\n{header}"
    data = np.column_stack(
        [
            trace.t,
            i_abc,
            i_ref,
            trace.u,
            trace.f_hat,
            trace.torque,
            trace.torque_ref,
        ]
    )
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.10g")
