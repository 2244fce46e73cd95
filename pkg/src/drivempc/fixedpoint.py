"""Bit-accurate integer replica of the on-line controller arithmetic.

The embedded target evaluates the candidate search in fixed point: switch
positions and change flags are small signed integers (Q4.0) while states,
model coefficients and candidate costs live in a signed two's-complement
format with 2 integer and 22 fractional bits (Q2.22, range ``[-2, 2)``,
resolution ``2**-22``).  This module mirrors that pipeline exactly using
integer mantissas, so results are deterministic across platforms: every
multiply rounds to nearest (ties to even) and every writeback saturates
at the format bounds instead of wrapping.

The candidate costs themselves can exceed the state range, so the
objective is pre-scaled by a power of two chosen from worst-case bounds;
scaling every candidate by the same positive constant cannot change which
one wins.  Because the switch inputs are integers, the per-candidate
accumulation ``U'QU + 2 f'U`` is exact once ``Q u`` columns and ``f`` are
formed; the only roundings per decision are the linear-term MACs and the
initial coefficient quantization, so the cost error carries a fixed bound
independent of how long the loop has been running.  The two recursive
blocks (reference oscillator and frequency estimator) do accumulate
rounding; the oscillator's amplitude is renormalized once per fundamental
period (integer square root and division) and the audit report tracks how
much correction that applies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .augment import ALL_SWITCH, CONST, FLT, NU, NX, OSC, PHYS, UPREV, rotation
from .qp import CandidateTable, Decision, last_argmin


@dataclass(frozen=True)
class FixedFormat:
    """Signed fixed-point format: ``int_bits`` integer (including sign) and
    ``frac_bits`` fractional bits; values are ``mantissa * 2**-frac_bits``."""

    int_bits: int
    frac_bits: int
    signed: bool = True

    def __post_init__(self):
        if self.int_bits < 1 or self.frac_bits < 0:
            raise ValueError("need at least the sign bit and no negative widths")
        if self.total_bits > 64:
            raise ValueError("formats wider than 64 bits are not supported")

    @property
    def total_bits(self) -> int:
        return self.int_bits + self.frac_bits

    @property
    def resolution(self) -> float:
        return 2.0 ** (-self.frac_bits)

    @property
    def max_mantissa(self) -> int:
        return (1 << (self.total_bits - 1)) - 1 if self.signed else (1 << self.total_bits) - 1

    @property
    def min_mantissa(self) -> int:
        return -(1 << (self.total_bits - 1)) if self.signed else 0

    @property
    def max_value(self) -> float:
        return self.max_mantissa * self.resolution

    @property
    def min_value(self) -> float:
        return self.min_mantissa * self.resolution


#: Switch positions, change flags and their small integer sums.
Q_INPUT = FixedFormat(4, 0)
#: States, model coefficients and (scaled) candidate costs.
Q_STATE = FixedFormat(2, 22)


@dataclass(frozen=True)
class FixedScalar:
    """One fixed-point number: raw mantissa plus its format."""

    mantissa: int
    fmt: FixedFormat
    saturated: bool = False

    @property
    def value(self) -> float:
        return self.mantissa * self.fmt.resolution


def quantize(x: float, fmt: FixedFormat) -> FixedScalar:
    """Round a real to the format grid (ties to even), saturating at the ends."""
    mant = round(float(x) / fmt.resolution)  # Python round is half-to-even
    clipped = min(max(mant, fmt.min_mantissa), fmt.max_mantissa)
    return FixedScalar(mantissa=clipped, fmt=fmt, saturated=clipped != mant)


def _quantize_array(x: np.ndarray, fmt: FixedFormat) -> tuple[np.ndarray, int]:
    """Vector quantization; returns int64 mantissas and a saturation count."""
    scaled = np.asarray(x, dtype=float) / fmt.resolution
    mant = np.rint(scaled)
    # np.rint rounds halves to even already
    mant = mant.astype(np.int64)
    clipped = np.clip(mant, fmt.min_mantissa, fmt.max_mantissa)
    return clipped, int(np.count_nonzero(clipped != mant))


def _round_shift(prod: np.ndarray | int, shift: int):
    """Divide by ``2**shift`` rounding to nearest, ties to even.

    Works elementwise on int64 arrays and on Python ints; relies on
    arithmetic (floor) shifts so the remainder is always non-negative.
    """
    if shift == 0:
        return prod
    q = prod >> shift
    r = prod - (q << shift)
    half = 1 << (shift - 1)
    if isinstance(q, np.ndarray):
        up = (r > half) | ((r == half) & ((q & 1) == 1))
        return q + up.astype(np.int64)
    return q + int(r > half or (r == half and (q & 1) == 1))


def _div_mantissa(num: int, den: int, frac_bits: int) -> int:
    """Fixed-point division ``num/den`` to ``frac_bits``, ties to even."""
    if den == 0:
        raise ZeroDivisionError("fixed-point division by zero")
    sign = -1 if (num < 0) != (den < 0) else 1
    num, den = abs(num) << frac_bits, abs(den)
    q, r = divmod(num, den)
    if 2 * r > den or (2 * r == den and q & 1):
        q += 1
    return sign * q


class _Saturator:
    """Clip mantissas to a format range, counting the events."""

    def __init__(self, fmt: FixedFormat):
        self.fmt = fmt
        self.count = 0

    def __call__(self, mant: np.ndarray | int):
        lo, hi = self.fmt.min_mantissa, self.fmt.max_mantissa
        if isinstance(mant, np.ndarray):
            clipped = np.clip(mant, lo, hi)
            self.count += int(np.count_nonzero(clipped != mant))
            return clipped
        clipped = min(max(mant, lo), hi)
        self.count += clipped != mant
        return clipped


@dataclass
class _FixedState:
    """Mirror of the float controller bookkeeping, mantissa-valued."""

    osc: np.ndarray  # (2,) int64 mantissas, Q2.22
    flt: np.ndarray  # (2,) int64 mantissas, Q2.22
    u_prev: np.ndarray  # (3,) int
    p_prev: np.ndarray  # (3,) int
    torque_ref: float
    steps_since_renorm: int = 0

    @property
    def osc_value(self) -> np.ndarray:
        return self.osc * Q_STATE.resolution

    @property
    def flt_value(self) -> np.ndarray:
        return self.flt * Q_STATE.resolution


class _StateView:
    """Float view over the mantissa state, shaped like the float controller's."""

    def __init__(self, fx: _FixedState):
        self._fx = fx

    @property
    def osc(self) -> np.ndarray:
        return self._fx.osc_value

    @property
    def flt(self) -> np.ndarray:
        return self._fx.flt_value

    @property
    def u_prev(self) -> np.ndarray:
        return self._fx.u_prev

    @property
    def p_prev(self) -> np.ndarray:
        return self._fx.p_prev

    @property
    def torque_ref(self) -> float:
        return self._fx.torque_ref


class FixedController:
    """Integer-arithmetic replica of an exhaustive-search controller.

    Wraps a float controller (trained or reference design), quantizes its
    condensed objective once, and then steps through the identical
    pipeline using only integer operations.  The interface mirrors the
    float controller so the same closed-loop driver runs either one.

    Parameters
    ----------
    controller
        The float controller to replicate.
    scale_log2
        The objective is divided by ``2**scale_log2`` before quantization
        so worst-case candidate costs fit the state format.  Default: the
        smallest power of two that fits the analytic worst case.
    """

    FRAC = Q_STATE.frac_bits

    def __init__(self, controller, scale_log2: int | None = None):
        self.float_controller = controller
        self.model = controller.model
        self.objective = controller.objective
        self.switch_weight = controller.switch_weight
        obj = self.objective
        n_seq = obj.horizon * NU

        if scale_log2 is None:
            # worst-case |cost|: |U'QU| + 2|f'U| + weight*count with |U|<=2,
            # |x0| <= 2 entrywise
            bound_f = 2.0 * (np.abs(obj.f).sum(axis=1) * 2.0 + np.abs(obj.g))
            bound = (
                4.0 * np.abs(obj.q).sum()
                + 2.0 * bound_f.sum()
                + abs(self.switch_weight) * 2 * n_seq
            )
            scale_log2 = max(0, math.ceil(math.log2(max(bound, 1e-12) / Q_STATE.max_value)))
        self.scale_log2 = scale_log2
        self.scale = 2.0**scale_log2

        self._sat_coeff = _Saturator(Q_STATE)
        self._sat_state = _Saturator(Q_STATE)
        self._sat_input = _Saturator(Q_STATE)
        self._sat_cost = _Saturator(Q_STATE)

        def coeff(x):
            mant, n = _quantize_array(x / self.scale, Q_STATE)
            self._sat_coeff.count += n
            return mant

        # doubled linear term: costs = U'QU + U . (2 F x0 + 2 g), all scaled
        self._f2 = coeff(2.0 * obj.f)  # (6N, 12)
        self._g2 = coeff(2.0 * obj.g)  # (6N,)
        self._weight_mant = int(coeff(np.asarray(self.switch_weight)))
        rot = rotation(self.model.params.ts_pu)
        self._rot_mant, _ = _quantize_array(rot, Q_STATE)
        a_flt = controller._a_flt
        b_norm = controller._b_flt_norm
        self._a_flt_mant, _ = _quantize_array(a_flt, Q_STATE)
        self._b_flt_mant, _ = _quantize_array(b_norm, Q_STATE)
        self._period_steps = int(round(2.0 * np.pi / self.model.params.ts_pu))

        self._tables: dict[int, tuple[CandidateTable, np.ndarray, np.ndarray]] = {}
        self._fx: _FixedState | None = None
        self.last_decision: Decision | None = None
        self.renorm_count = 0
        self.max_renorm_correction = 0.0
        self.steps = 0

    # -- bookkeeping -------------------------------------------------------

    @property
    def horizon(self) -> int:
        return self.objective.horizon

    @property
    def saturation_count(self) -> int:
        """Total saturation events since the last reset (all stages)."""
        return (
            self._sat_coeff.count
            + self._sat_state.count
            + self._sat_input.count
            + self._sat_cost.count
        )

    def reset(self, torque_ref: float, u_prev: np.ndarray | None = None,
              f_hat_ratio: float = 1.0) -> None:
        up = np.zeros(3, dtype=int) if u_prev is None else np.array(u_prev, dtype=int)
        osc, n1 = _quantize_array(torque_ref * np.array([0.0, -1.0]), Q_STATE)
        flt, n2 = _quantize_array(np.array([f_hat_ratio, f_hat_ratio]), Q_STATE)
        for s in (self._sat_state, self._sat_input, self._sat_cost):
            s.count = 0
        self._sat_state.count += n1 + n2
        self._fx = _FixedState(
            osc=osc, flt=flt, u_prev=up, p_prev=np.zeros(3, dtype=int),
            torque_ref=torque_ref,
        )
        self.renorm_count = 0
        self.max_renorm_correction = 0.0
        self.steps = 0

    def pin_previous(self, u_sw: np.ndarray, p_flags: np.ndarray) -> None:
        """Overwrite the previous-decision context with a recorded one.

        Replay harnesses compare this replica's decisions against a recorded
        run step by step.  After a disagreement the two decision histories
        would diverge and every later comparison would be judged under a
        different context; pinning the recorded previous input (and its
        change flags, which feed the next switching-rate filter update)
        keeps the comparison aligned.  Quantized internal states are left
        untouched -- their drift is exactly what a replay measures.
        """
        if self._fx is None:
            raise RuntimeError("controller.reset() must be called before pinning")
        self._fx.u_prev = np.array(u_sw, dtype=int)
        self._fx.p_prev = np.array(p_flags, dtype=int)

    def _fixed_table(self, u_prev: np.ndarray):
        key = int((u_prev[0] + 1) * 9 + (u_prev[1] + 1) * 3 + (u_prev[2] + 1))
        entry = self._tables.get(key)
        if entry is None:
            table = self.float_controller.table_for(ALL_SWITCH[key])
            quad_mant, n = _quantize_array(table.quad / self.scale, Q_STATE)
            self._sat_coeff.count += n
            u_int = np.rint(table.u_full).astype(np.int64)
            entry = (table, quad_mant, u_int)
            self._tables[key] = entry
        return entry

    # -- fixed-point primitives -------------------------------------------

    def _matvec(self, coeff_mant: np.ndarray, x_mant: np.ndarray) -> np.ndarray:
        """Row-wise MAC with per-product rounding, as the datapath computes."""
        prods = _round_shift(coeff_mant * x_mant[np.newaxis, :], self.FRAC)
        return prods.sum(axis=1)

    def _renormalize(self, st: _FixedState) -> None:
        target = quantize(abs(st.torque_ref), Q_STATE).mantissa
        amp = math.isqrt(int(st.osc[0]) ** 2 + int(st.osc[1]) ** 2)
        if amp == 0 or target == 0:
            return
        factor = _div_mantissa(target, amp, self.FRAC)
        one = 1 << self.FRAC
        self.max_renorm_correction = max(
            self.max_renorm_correction, abs(factor - one) * Q_STATE.resolution
        )
        osc = _round_shift(st.osc * factor, self.FRAC)
        st.osc = self._sat_state(osc)
        self.renorm_count += 1

    # -- control step ------------------------------------------------------

    def step(self, x_ph: np.ndarray, torque_ref: float) -> np.ndarray:
        st = self._fx
        if st is None:
            raise RuntimeError("controller.reset() must be called before step()")
        self.steps += 1

        # oscillator: rotate, rescale on command change, renormalize per period
        st.osc = self._sat_state(self._matvec(self._rot_mant, st.osc))
        if torque_ref != st.torque_ref:
            amp = math.isqrt(int(st.osc[0]) ** 2 + int(st.osc[1]) ** 2)
            if amp == 0:
                osc, n = _quantize_array(
                    torque_ref * np.array([0.0, -1.0]), Q_STATE
                )
                self._sat_state.count += n
                st.osc = osc
            else:
                tref_mant = quantize(torque_ref, Q_STATE).mantissa
                factor = _div_mantissa(tref_mant, amp, self.FRAC)
                st.osc = self._sat_state(_round_shift(st.osc * factor, self.FRAC))
            st.torque_ref = torque_ref
            st.steps_since_renorm = 0
        st.steps_since_renorm += 1
        if st.steps_since_renorm >= self._period_steps:
            self._renormalize(st)
            st.steps_since_renorm = 0

        # frequency estimator: pole recursion plus exact integer drive
        drive = (self._b_flt_mant * st.p_prev[np.newaxis, :]).sum(axis=1)
        flt = self._matvec(self._a_flt_mant, st.flt) + drive
        st.flt = self._sat_state(flt)

        # assemble the state vector in mantissas
        x0 = np.empty(NX, dtype=np.int64)
        phys_mant, n_sat = _quantize_array(x_ph, Q_STATE)
        self._sat_input.count += n_sat
        x0[PHYS] = phys_mant
        x0[OSC] = st.osc
        x0[FLT] = st.flt
        x0[CONST] = 1 << self.FRAC
        x0[UPREV] = st.u_prev << self.FRAC

        # linear term and exact integer candidate accumulation
        lin2 = self._matvec(self._f2, x0) + self._g2
        table, quad_mant, u_int = self._fixed_table(st.u_prev)
        costs = quad_mant + u_int @ lin2
        if self._weight_mant:
            costs = costs + self._weight_mant * np.rint(table.switch_count).astype(np.int64)
        costs = self._sat_cost(costs)
        costs = np.where(table.feasible, costs, Q_STATE.max_mantissa)
        idx = last_argmin(costs)

        u_sw = table.sequences[idx, 0].copy()
        self.last_decision = Decision(
            u_sw=u_sw,
            p=np.abs(u_sw - st.u_prev),
            cost=float(costs[idx]) * Q_STATE.resolution * self.scale,
            index=idx,
            n_feasible=int(table.feasible.sum()),
        )
        st.p_prev = self.last_decision.p
        st.u_prev = u_sw
        return u_sw

    # expose a float view compatible with the closed-loop driver
    @property
    def _state(self):
        return None if self._fx is None else _StateView(self._fx)

    # -- error model and audit --------------------------------------------

    def candidate_costs_fixed(self, x_ph: np.ndarray) -> np.ndarray:
        """Scaled fixed-point candidate costs at the current bookkeeping.

        Returns the full candidate vector (value units, scale removed) the
        way :meth:`step` would rank it, without advancing any state.
        """
        st = self._fx
        x0 = np.empty(NX, dtype=np.int64)
        phys_mant, _ = _quantize_array(x_ph, Q_STATE)
        x0[PHYS] = phys_mant
        x0[OSC] = st.osc
        x0[FLT] = st.flt
        x0[CONST] = 1 << self.FRAC
        x0[UPREV] = st.u_prev << self.FRAC
        lin2 = self._matvec(self._f2, x0) + self._g2
        table, quad_mant, u_int = self._fixed_table(st.u_prev)
        costs = quad_mant + u_int @ lin2
        if self._weight_mant:
            costs = costs + self._weight_mant * np.rint(table.switch_count).astype(np.int64)
        return costs * (Q_STATE.resolution * self.scale)

    @property
    def cost_tolerance(self) -> float:
        """Per-candidate bound on |fixed − float| cost (value units).

        Counts one half-resolution rounding per linear-term MAC, the
        coefficient/state grid error propagated through the doubled linear
        term, and the single quantization of the precomputed quadratic
        term; the integer candidate accumulation itself is exact.
        """
        res = Q_STATE.resolution
        half = 0.5 * res
        # error in each lin2 entry: NX rounded MACs + coefficient grid on F2 row
        # and g2 + state grid through |F2| row sums
        f2 = np.abs(self._f2) * res
        err_lin = half * NX + half + f2.sum(axis=1) * half + half
        u_abs_max = 2.0
        per_candidate = u_abs_max * err_lin.sum() + half
        return float(per_candidate * self.scale)

    def audit_report(self) -> str:
        """Plain-text summary of quantization behavior since the last reset."""
        lines = [
            "fixed-point audit",
            f"  formats: inputs Q{Q_INPUT.int_bits}.{Q_INPUT.frac_bits}, "
            f"states/costs Q{Q_STATE.int_bits}.{Q_STATE.frac_bits}",
            f"  cost scale: 2^-{self.scale_log2}",
            f"  steps: {self.steps}",
            f"  saturations: coefficients {self._sat_coeff.count}, "
            f"state writebacks {self._sat_state.count}, "
            f"measurement quantize {self._sat_input.count}, "
            f"cost writebacks {self._sat_cost.count}",
            f"  oscillator renormalizations: {self.renorm_count} "
            f"(max amplitude correction {self.max_renorm_correction:.3e})",
            f"  per-candidate cost tolerance: {self.cost_tolerance:.3e}",
        ]
        return "\n".join(lines)
