"""Rendering of run traces to figure files.

All graphics live here so the simulation loop and the metric helpers stay
import-clean for headless use.  Every function writes one PNG next to the
delimited trace output and returns the path; nothing is shown
interactively.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import period_samples
from .simloop import RunTrace

_PHASES = ("a", "b", "c")
_DPI = 130


def _tail_window(trace: RunTrace, periods: float) -> slice:
    """Slice covering the final ``periods`` fundamental periods."""
    n = len(trace.t)
    span = min(n, int(round(periods * period_samples(trace))))
    return slice(n - span, n)


def _stamp(fig: "plt.Figure", fingerprint: str | None) -> None:
    if fingerprint:
        fig.text(
            0.995,
            0.005,
            f"config {fingerprint}",
            ha="right",
            va="bottom",
            fontsize=6,
            color="0.5",
            family="monospace",
        )


def plot_currents(
    trace: RunTrace,
    path: str,
    periods: float = 2.0,
    fingerprint: str | None = None,
) -> str:
    """Three-phase stator currents against their references."""
    sl = _tail_window(trace, periods)
    t_ms = 1e3 * trace.t[sl]
    i_abc = trace.i_abc[sl]
    i_ref = trace.i_ref_abc[sl]
    fig, ax = plt.subplots(figsize=(7.2, 3.2), constrained_layout=True)
    for s, label in enumerate(_PHASES):
        (line,) = ax.plot(t_ms, i_abc[:, s], lw=0.9, label=f"$i_{label}$")
        ax.plot(t_ms, i_ref[:, s], lw=0.9, ls="--", color=line.get_color(), alpha=0.6)
    ax.set_xlabel("time [ms]")
    ax.set_ylabel("stator current [pu]")
    ax.set_title("stator currents (dashed: reference)")
    ax.legend(loc="upper right", ncols=3, fontsize=8)
    ax.grid(alpha=0.3)
    _stamp(fig, fingerprint)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_spectrum(
    trace: RunTrace,
    path: str,
    periods: int = 20,
    max_order: float = 60.0,
    fingerprint: str | None = None,
) -> str:
    """Amplitude spectrum of one phase current over an integer-period window.

    Amplitudes are normalized by the fundamental; the horizontal axis is
    the harmonic order, so interharmonics from the discrete switching show
    up between the integer ticks.
    """
    per = period_samples(trace)
    n = len(trace.t)
    periods = min(periods, n // per)
    if periods < 1:
        raise ValueError("trace shorter than one fundamental period")
    x = trace.i_abc[n - periods * per :, 0]
    spec = np.abs(np.fft.rfft(x)) / len(x) * 2.0
    fund = spec[periods]
    if fund == 0.0:
        raise ValueError("no fundamental component in window")
    order = np.arange(len(spec)) / periods
    keep = order <= max_order
    fig, ax = plt.subplots(figsize=(7.2, 3.2), constrained_layout=True)
    markerline, stemlines, _ = ax.stem(order[keep], spec[keep] / fund)
    plt.setp(markerline, markersize=1.5)
    plt.setp(stemlines, linewidth=0.7)
    ax.set_yscale("log")
    ax.set_ylim(1e-5, 2.0)
    ax.set_xlabel("harmonic order")
    ax.set_ylabel("amplitude / fundamental")
    ax.set_title(f"phase-a current spectrum, {periods} periods")
    ax.grid(alpha=0.3, which="both")
    _stamp(fig, fingerprint)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_switch_positions(
    trace: RunTrace,
    path: str,
    periods: float = 2.0,
    fingerprint: str | None = None,
) -> str:
    """Three-level switch positions per phase, stacked step plots."""
    sl = _tail_window(trace, periods)
    t_ms = 1e3 * trace.t[sl]
    fig, axes = plt.subplots(
        3, 1, figsize=(7.2, 4.2), sharex=True, constrained_layout=True
    )
    for s, (ax, label) in enumerate(zip(axes, _PHASES)):
        ax.step(t_ms, trace.u[sl, s], where="post", lw=0.9)
        ax.set_ylim(-1.4, 1.4)
        ax.set_yticks([-1, 0, 1])
        ax.set_ylabel(f"$u_{label}$")
        ax.grid(alpha=0.3)
    axes[-1].set_xlabel("time [ms]")
    axes[0].set_title("switch positions")
    _stamp(fig, fingerprint)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_torque(
    trace: RunTrace,
    path: str,
    fingerprint: str | None = None,
) -> str:
    """Torque with its command, and the switching-frequency estimate."""
    t_ms = 1e3 * trace.t
    fig, (ax_t, ax_f) = plt.subplots(
        2, 1, figsize=(7.2, 4.2), sharex=True, constrained_layout=True
    )
    ax_t.plot(t_ms, trace.torque, lw=0.8, label="torque")
    ax_t.plot(t_ms, trace.torque_ref, lw=0.9, ls="--", label="command")
    ax_t.set_ylabel("torque [pu]")
    ax_t.legend(loc="best", fontsize=8)
    ax_t.grid(alpha=0.3)
    ax_f.plot(t_ms, trace.f_hat, lw=0.9)
    ax_f.set_ylabel(r"$\hat{f}_{sw}$ [Hz]")
    ax_f.set_xlabel("time [ms]")
    ax_f.grid(alpha=0.3)
    ax_t.set_title("torque and switching-frequency estimate")
    _stamp(fig, fingerprint)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_report(
    trace: RunTrace,
    out_dir: str,
    prefix: str = "run",
    spectrum_periods: int = 20,
    fingerprint: str | None = None,
) -> list[str]:
    """Write the standard set of figures for one run, returning the paths."""
    os.makedirs(out_dir, exist_ok=True)

    def at(name: str) -> str:
        return os.path.join(out_dir, f"{prefix}_{name}.png")

    return [
        plot_currents(trace, at("currents"), fingerprint=fingerprint),
        plot_spectrum(
            trace, at("spectrum"), periods=spectrum_periods, fingerprint=fingerprint
        ),
        plot_switch_positions(trace, at("switching"), fingerprint=fingerprint),
        plot_torque(trace, at("torque"), fingerprint=fingerprint),
    ]
