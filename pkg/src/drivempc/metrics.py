"""Waveform metrics: distortion, switching frequency, settling behavior.

Definitions operate on exact integer-period windows so rectangular FFTs
leak nothing: distortion is the RMS of every non-fundamental, non-dc
component relative to the fundamental amplitude (harmonics and
interharmonics alike -- by Parseval exactly the ripple energy ratio),
averaged over the three phases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simloop import RunTrace


def harmonic_distortion(signal: np.ndarray, periods: int) -> float:
    """Total distortion of one waveform spanning exactly ``periods`` cycles.

    Ratio of non-fundamental, non-dc RMS to fundamental RMS.
    """
    x = np.asarray(signal, dtype=float)
    n = len(x)
    if n % periods:
        raise ValueError("window must hold an integer number of samples per period")
    spec = np.abs(np.fft.fft(x)) ** 2
    k = periods  # fundamental bin
    fundamental = spec[k] + spec[n - k]
    if fundamental == 0.0:
        raise ValueError("no fundamental component in window")
    distortion = spec[1:].sum() - fundamental
    return float(np.sqrt(max(distortion, 0.0) / fundamental))


def current_thd(trace: RunTrace, periods: int = 20, end_s: float | None = None) -> float:
    """Phase-averaged current distortion over the last ``periods`` fundamentals.

    The window ends at ``end_s`` (default: end of trace) and extends
    backwards exactly ``periods`` fundamental periods; it must lie beyond
    the trace's warmup.
    """
    per = period_samples(trace)
    sl = trace.window(end_s=end_s)
    stop = sl.stop
    start = stop - periods * per
    if start < 0:
        raise ValueError("trace too short for requested distortion window")
    i_abc = trace.i_abc[start:stop]
    return float(np.mean([harmonic_distortion(i_abc[:, s], periods) for s in range(3)]))


def period_samples(trace: RunTrace) -> int:
    """Samples per fundamental period (exact for the default timing)."""
    per = 2.0 * np.pi / (trace.params.omega_b * trace.params.ts)
    rounded = int(round(per))
    if abs(per - rounded) > 1e-6:
        raise ValueError("sampling interval does not divide the fundamental period")
    return rounded


def switching_frequency(
    trace: RunTrace, start_s: float | None = None, end_s: float | None = None
) -> float:
    """Average per-device switching frequency over a window, in Hz.

    Total level transitions across the three phases divided by the twelve
    switch pairs of a three-level bridge and by the window duration.  The
    transition into the window's first interval is counted, so estimates
    over adjacent windows tile correctly.
    """
    sl = trace.window(start_s, end_s)
    if sl.stop - sl.start < 2:
        raise ValueError("window too short for a switching-frequency estimate")
    u = trace.u
    first = max(sl.start, 1)
    changes = np.abs(np.diff(u[first - 1 : sl.stop], axis=0)).sum()
    duration = (sl.stop - first) * trace.ts
    return float(changes / (12.0 * duration))


def settling_time(
    trace: RunTrace,
    step_time_s: float,
    target: float,
    band: float = 0.05,
    until_s: float | None = None,
) -> float:
    """Time from a command step until torque stays inside ``target +- band``.

    The band is absolute (a fraction of rated torque), so it is meaningful
    for steps down to zero.  ``until_s`` bounds the dwell interval that the
    torque must remain settled over -- pass the next command time when the
    trace contains several steps, otherwise the response to a later step
    would count against this one.  Returns the delay in seconds; raises if
    the torque never settles within the interval.
    """
    k0 = int(np.searchsorted(trace.t, step_time_s - 1e-12))
    k1 = len(trace.t) if until_s is None else int(np.searchsorted(trace.t, until_s - 1e-12))
    if k1 <= k0:
        raise ValueError("empty settling interval")
    err = np.abs(trace.torque[k0:k1] - target)
    outside = err > band
    if outside[-1]:
        raise ValueError("torque does not settle inside the band in this trace")
    last_out = np.flatnonzero(outside)
    settle_idx = 0 if len(last_out) == 0 else int(last_out[-1]) + 1
    return float(settle_idx * trace.ts)


def band_entry_time(
    trace: RunTrace,
    step_time_s: float,
    target: float,
    band: float = 0.05,
    until_s: float | None = None,
) -> float:
    """Time from a command step until torque first reaches ``target +- band``.

    Under finite-set switching the instantaneous torque carries a persistent
    ripple that can exceed a tight band indefinitely, so the dwell-based
    :func:`settling_time` may be dominated by ripple excursions long after
    the transient is over.  The band-entry time is the scope-reading
    equivalent: the moment the response first touches its final band.  It is
    insensitive to later ripple and is the figure quoted for step-response
    speed.
    """
    k0 = int(np.searchsorted(trace.t, step_time_s - 1e-12))
    k1 = len(trace.t) if until_s is None else int(np.searchsorted(trace.t, until_s - 1e-12))
    if k1 <= k0:
        raise ValueError("empty settling interval")
    inside = np.abs(trace.torque[k0:k1] - target) <= band
    hits = np.flatnonzero(inside)
    if len(hits) == 0:
        raise ValueError("torque never reaches the band in this interval")
    return float(int(hits[0]) * trace.ts)


def find_level_inversion(
    trace: RunTrace, start_s: float, end_s: float
) -> list[tuple[int, float]]:
    """Phases whose voltage flips sign through the zero level in a window.

    Returns ``(phase, time_of_completion)`` entries where a phase's switch
    position went from ``+-1`` to ``-+1`` visiting ``0`` in between (the
    only legal path -- direct flips are forbidden).  Used to confirm that
    large transients exercise full voltage inversion.
    """
    sl = trace.window(start_s, end_s)
    u = trace.u[sl]
    t = trace.t[sl]
    out = []
    for phase in range(3):
        seq = u[:, phase]
        keep = np.flatnonzero(np.diff(seq, prepend=seq[0] + 99) != 0)
        levels = seq[keep]
        for j in range(len(levels) - 2):
            if levels[j] != 0 and levels[j + 1] == 0 and levels[j + 2] == -levels[j]:
                out.append((phase, float(t[keep[j + 2]])))
                break
    return out


def max_level_jump(trace: RunTrace) -> int:
    """Largest single-interval level change over the whole trace."""
    jumps = np.abs(np.diff(trace.u, axis=0))
    return int(jumps.max()) if len(jumps) else 0


@dataclass(frozen=True)
class SteadyStateMetrics:
    """Headline numbers of one steady-state run."""

    thd: float
    f_sw: float
    f_hat_final: float
    periods: int

    def as_text(self) -> str:
        return (
            f"thd {100*self.thd:.3f} %\n"
            f"f_sw {self.f_sw:.1f} Hz\n"
            f"f_hat {self.f_hat_final:.1f} Hz\n"
            f"periods {self.periods}\n"
        )


def steady_state_metrics(trace: RunTrace, periods: int = 20) -> SteadyStateMetrics:
    """Distortion and switching metrics over the trace's final periods."""
    per = period_samples(trace)
    start_s = trace.t[len(trace.t) - periods * per]
    return SteadyStateMetrics(
        thd=current_thd(trace, periods),
        f_sw=switching_frequency(trace, start_s=start_s),
        f_hat_final=float(trace.f_hat[-1]),
        periods=periods,
    )
