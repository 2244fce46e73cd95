"""Augmented prediction model for current tracking at a target switching rate.

The controller's internal state stacks four blocks on top of the physical
model:

======  =====  ========================================================
slice   size   contents
======  =====  ========================================================
0:4     4      physical state (stator current, rotor flux, two axes)
4:6     2      reference-current oscillator (amplitude = torque command)
6:8     2      switching-frequency estimator states, normalized by the
               target frequency (so index 7 is ``f_hat / f_target``)
8       1      constant 1 (regression target for the frequency error)
9:12    3      previous switch positions
======  =====  ========================================================

The input stacks the switch positions with the per-phase change flags
``p_s = |u_s(k) - u_s(k-1)|``: ``u = [u_a, u_b, u_c, p_a, p_b, p_c]``.
The stage cost is ``||C x||^2`` with rows for the two current-error axes
(unit weight) and the normalized frequency error (weight ``sqrt(delta)``).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .motor import PlantModel, build_plant
from .params import DriveParams

NX = 12
NU = 6
PHYS = slice(0, 4)
OSC = slice(4, 6)
FLT = slice(6, 8)
CONST = 8
UPREV = slice(9, 12)

SWITCH_LEVELS = (-1, 0, 1)

# All 27 single-interval switch combinations in lexicographic order
# (phase a most significant, levels ordered -1 < 0 < 1).
ALL_SWITCH = np.array(list(itertools.product(SWITCH_LEVELS, repeat=3)), dtype=int)


@dataclass(frozen=True)
class ControlConfig:
    """Cost and estimator settings shared by training and on-line control.

    Attributes
    ----------
    gamma : float
        Discount factor of the infinite-horizon cost.
    delta : float
        Weight of the squared normalized switching-frequency error relative
        to the squared current error.
    fsw_target : float
        Target device switching frequency in Hz.
    r1, r2 : float
        Pole time constants (in samples) of the two-stage frequency
        estimator; poles sit at ``1 - 1/r``.
    """

    gamma: float = 0.95
    delta: float = 4.0
    fsw_target: float = 300.0
    r1: float = 800.0
    r2: float = 800.0


# -- reference oscillator --------------------------------------------------


def rotation(angle: float) -> np.ndarray:
    """2x2 rotation advancing the reference frame by ``angle`` radians."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def oscillator_step(osc: np.ndarray, angle: float) -> np.ndarray:
    """Rotate the reference-current vector by one step of ``angle``."""
    return rotation(angle) @ osc


def oscillator_reset(osc: np.ndarray, torque_ref: float) -> np.ndarray:
    """Rescale the oscillator to a new torque command, keeping its phase.

    A zero oscillator carries no phase information; by convention it
    restarts at ``torque_ref * [0, -1]`` (the phase-zero direction).
    """
    amp = float(np.hypot(osc[0], osc[1]))
    if amp == 0.0:
        return torque_ref * np.array([0.0, -1.0])
    return (torque_ref / amp) * np.asarray(osc, dtype=float)


# -- switching-frequency estimator ----------------------------------------


def filter_matrices(config: ControlConfig, ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Second-order estimator of the per-device switching frequency.

    State 0 low-passes the instantaneous commutation rate
    ``sum(p)/(12*ts)`` (twelve devices switch per unit ``p`` count across
    the three phases); state 1 low-passes state 0 and is the estimate in
    Hz.  Poles at ``1 - 1/r1`` and ``1 - 1/r2``.
    """
    a1 = 1.0 - 1.0 / config.r1
    a2 = 1.0 - 1.0 / config.r2
    a = np.array([[a1, 0.0], [1.0 - a1, a2]])
    b = (1.0 - a2) / (12.0 * ts) * np.array([[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]])
    return a, b


def filter_step(flt: np.ndarray, p: np.ndarray, config: ControlConfig, ts: float) -> np.ndarray:
    """Advance the frequency estimator by one sample (states in Hz)."""
    a, b = filter_matrices(config, ts)
    return a @ flt + b @ p


# -- switch-position combinatorics ----------------------------------------


def p_from_inputs(u_sw: np.ndarray, u_prev: np.ndarray) -> np.ndarray:
    """Per-phase change flags ``|u_s - u_prev_s|`` (2 marks a forbidden jump)."""
    return np.abs(np.asarray(u_sw, dtype=int) - np.asarray(u_prev, dtype=int))


def feasible_inputs(u_prev: np.ndarray) -> np.ndarray:
    """All switch combinations reachable in one step from ``u_prev``.

    A phase may move by at most one level per interval (direct transitions
    between -1 and +1 would shoot through the dc link), so each phase at
    ``+-1`` has two successors and each phase at ``0`` has three.  Rows
    come back in the lexicographic order of :data:`ALL_SWITCH`.
    """
    u_prev = np.asarray(u_prev, dtype=int)
    mask = np.all(np.abs(ALL_SWITCH - u_prev) <= 1, axis=1)
    return ALL_SWITCH[mask]


def input_sequences(horizon: int) -> np.ndarray:
    """All ``27**horizon`` switch sequences, shape (27**horizon, horizon, 3).

    Ordered lexicographically over the flattened sequence (stage 0 phase a
    most significant).  Feasibility against a given starting position is
    *not* applied here.
    """
    seq = np.array(
        list(itertools.product(SWITCH_LEVELS, repeat=3 * horizon)), dtype=int
    )
    return seq.reshape(-1, horizon, 3)


# -- augmented model -------------------------------------------------------


@dataclass(frozen=True)
class AugmentedModel:
    """Discrete-time controller model ``x+ = A x + B u``, stage cost ``||C x||^2``."""

    a: np.ndarray  # (12, 12)
    b: np.ndarray  # (12, 6)
    c: np.ndarray  # (3, 12)
    plant: PlantModel
    config: ControlConfig

    @property
    def params(self) -> DriveParams:
        return self.plant.params

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """One prediction step with a stacked input ``[u_sw, p]``."""
        return self.a @ x + self.b @ u

    def stage_cost(self, x: np.ndarray) -> float:
        """Squared tracking error ``||C x||^2`` at one state."""
        e = self.c @ x
        return float(e @ e)


def assemble_augmented(
    params: DriveParams, config: ControlConfig, plant: PlantModel | None = None
) -> AugmentedModel:
    """Build the augmented model from drive parameters and control settings.

    The estimator states are normalized by ``fsw_target`` so every state
    is order one at the operating point; the constant state allows the
    frequency error ``f_hat/f_target - 1`` to be a linear function of the
    state.  Previous switch positions enter the state purely as a delayed
    copy of the applied positions (zero rows in ``A``, identity block in
    ``B``).
    """
    if plant is None:
        plant = build_plant(params)
    a_flt, b_flt = filter_matrices(config, params.ts)

    a = np.zeros((NX, NX))
    a[PHYS, PHYS] = plant.a
    a[OSC, OSC] = rotation(params.ts_pu)
    a[FLT, FLT] = a_flt
    a[CONST, CONST] = 1.0

    b = np.zeros((NX, NU))
    b[PHYS, 0:3] = plant.b
    b[FLT, 3:6] = b_flt / config.fsw_target
    b[UPREV, 0:3] = np.eye(3)

    c = np.zeros((3, NX))
    c[0, 0] = 1.0
    c[1, 1] = 1.0
    c[0:2, OSC] = -np.eye(2)
    sd = np.sqrt(config.delta)
    c[2, 7] = sd
    c[2, CONST] = -sd

    return AugmentedModel(a=a, b=b, c=c, plant=plant, config=config)
