"""Command-line entry points: train tail costs, simulate, compare runs.

Configuration is one flat plain-text file of ``key = value`` lines; every
key has an explicit default and the shipped presets spell out all of them,
so a run is fully described by its file.  Outputs (delimited trace,
metrics summary, figures) all embed the configuration fingerprint so
artifacts can be traced back to the exact parameter set that produced
them.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .adp import sampled_bellman_slack, train_tail
from .augment import ControlConfig, assemble_augmented
from .conic import SolverError
from .controller import TailCostController, TrackingController
from .fixedpoint import FixedController
from .metrics import (
    band_entry_time,
    find_level_inversion,
    max_level_jump,
    settling_time,
    steady_state_metrics,
)
from .motor import steady_state, torque
from .params import DriveParams
from .report import render_report
from .simloop import Scenario, TorqueStep, run_closed_loop, write_trace_csv
from .tailcost import (
    TailArtifact,
    fingerprint_hash,
    fingerprint_values,
    load_artifact,
    save_artifact,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_CHECK = 3

_PRESET_PACKAGE = "drivempc"


class ConfigError(ValueError):
    """Malformed configuration file or override."""


@dataclass
class RunConfig:
    """Every knob of one run, flat so it maps 1:1 onto the config file."""

    # drive
    rs: float = 0.0108
    rr: float = 0.0091
    xls: float = 0.1493
    xlr: float = 0.1104
    xm: float = 2.3489
    vdc: float = 1.930
    omega_r: float = 0.991142888961957
    ts: float = 25e-6
    omega_b: float = 2.0 * np.pi * 50.0
    # cost and estimator
    gamma: float = 0.95
    delta: float = 4.0
    fsw_target: float = 300.0
    r1: float = 800.0
    r2: float = 800.0
    # controller
    controller: str = "tail"  # tail | tracking
    horizon: int = 1
    switch_weight: float = 0.00235  # tracking controller only
    tail: str = "preset:horizon1"  # artifact path, preset:NAME, or empty
    profile: str = "float"  # float | fixed
    # training
    m_iters: int = 50
    psd_margin: float = 1e-5
    seed: int = 0
    # scenario
    duration_periods: float = 24.0
    warmup_periods: float = 4.0
    torque_initial: float = 1.0
    torque_steps: str = ""  # "time_s:torque;time_s:torque" or empty
    metric_periods: int = 20
    # optional thresholds for --check (empty string disables each)
    check_thd_max: str = ""
    check_thd_min: str = ""
    check_fsw_min: str = ""
    check_fsw_max: str = ""

    def to_text(self) -> str:
        """Render as a config file listing every key explicitly."""
        lines = ["# drivempc run configuration; all keys explicit"]
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float):
                lines.append(f"{f.name} = {value!r}")  # shortest exact form
            else:
                lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(name: str, raw: str):
    kind = _FIELDS[name].type
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
    except ValueError as exc:
        raise ConfigError(f"key {name!r}: cannot parse {raw!r}") from exc
    return raw


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` lines over the defaults (or a given base)."""
    cfg = dataclasses.replace(base) if base is not None else RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _convert(key, raw.strip()))
    return cfg


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


def load_preset_config(name: str) -> RunConfig:
    ref = resources.files(_PRESET_PACKAGE) / "presets" / f"{name}.cfg"
    try:
        text = ref.read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"no packaged preset named {name!r}") from exc
    return parse_config_text(text)


def apply_overrides(cfg: RunConfig, pairs: list[str]) -> RunConfig:
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r}: expected KEY=VALUE")
        key, _, raw = pair.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"override: unknown key {key!r}")
        setattr(cfg, key, _convert(key, raw.strip()))
    return cfg


# -- construction ----------------------------------------------------------


def build_params(cfg: RunConfig) -> DriveParams:
    return DriveParams(
        rs=cfg.rs,
        rr=cfg.rr,
        xls=cfg.xls,
        xlr=cfg.xlr,
        xm=cfg.xm,
        vdc=cfg.vdc,
        omega_r=cfg.omega_r,
        ts=cfg.ts,
        omega_b=cfg.omega_b,
    )


def build_control(cfg: RunConfig) -> ControlConfig:
    return ControlConfig(
        gamma=cfg.gamma,
        delta=cfg.delta,
        fsw_target=cfg.fsw_target,
        r1=cfg.r1,
        r2=cfg.r2,
    )


def parse_torque_steps(spec: str) -> tuple[TorqueStep, ...]:
    if not spec.strip():
        return ()
    steps = []
    for chunk in spec.replace(",", ";").split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            t_str, _, v_str = chunk.partition(":")
            steps.append(TorqueStep(time_s=float(t_str), torque=float(v_str)))
        except ValueError as exc:
            raise ConfigError(
                f"torque_steps entry {chunk!r}: expected 'time_s:torque'"
            ) from exc
    return tuple(sorted(steps, key=lambda s: s.time_s))


def build_scenario(cfg: RunConfig) -> Scenario:
    period = 2.0 * np.pi / cfg.omega_b
    return Scenario(
        duration_s=cfg.duration_periods * period,
        torque_initial=cfg.torque_initial,
        steps=parse_torque_steps(cfg.torque_steps),
        warmup_s=cfg.warmup_periods * period,
    )


def resolve_tail(spec: str) -> TailArtifact:
    if not spec:
        raise ConfigError("tail-cost controller needs a 'tail' artifact setting")
    if spec.startswith("preset:"):
        name = spec.partition(":")[2]
        ref = resources.files(_PRESET_PACKAGE) / "presets" / f"{name}.tail"
        with resources.as_file(ref) as path:
            if not os.path.exists(path):
                raise ConfigError(f"no packaged tail preset named {name!r}")
            return load_artifact(path)
    if not os.path.exists(spec):
        raise ConfigError(f"tail artifact {spec!r} does not exist")
    return load_artifact(spec)


def build_controller(cfg: RunConfig):
    model = assemble_augmented(build_params(cfg), build_control(cfg))
    if cfg.controller == "tail":
        base = TailCostController(model, resolve_tail(cfg.tail), horizon=cfg.horizon)
    elif cfg.controller == "tracking":
        base = TrackingController(
            model, switch_weight=cfg.switch_weight, horizon=cfg.horizon
        )
    else:
        raise ConfigError(f"unknown controller kind {cfg.controller!r}")
    if cfg.profile == "fixed":
        return FixedController(base)
    if cfg.profile != "float":
        raise ConfigError(f"unknown numeric profile {cfg.profile!r}")
    return base


def config_fingerprint(cfg: RunConfig) -> str:
    return fingerprint_hash(fingerprint_values(build_params(cfg), build_control(cfg)))


# -- commands --------------------------------------------------------------


def cmd_train(cfg: RunConfig, out_dir: str, args) -> int:
    params, control = build_params(cfg), build_control(cfg)
    m_iters = min(cfg.m_iters, 5) if args.ci else cfg.m_iters
    print(f"training tail cost: M={m_iters} delta={control.delta:g}")
    try:
        artifact = train_tail(params, control, m_iters=m_iters, psd_margin=cfg.psd_margin)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    model = assemble_augmented(params, control)
    rng = np.random.default_rng(cfg.seed)
    slack = sampled_bellman_slack(model, artifact, 2000, rng)
    print(f"solver status: {artifact.solver_status}")
    print(f"objective:     {artifact.objective:.6f}")
    print(f"bellman slack: min {slack.min():.3e} over {len(slack)} sampled states")
    if slack.min() < -1e-6:
        print("trained value function violates the Bellman inequality", file=sys.stderr)
        return EXIT_SOLVER
    os.makedirs(out_dir, exist_ok=True)
    path = args.tail or os.path.join(out_dir, "tail.tail")
    save_artifact(path, artifact)
    print(f"wrote {path}")
    return EXIT_OK


def _steady_torque(params: DriveParams, torque_ref: float) -> float:
    if torque_ref == 0.0:
        return 0.0
    return float(torque(steady_state(params, torque_ref), params))


def _transient_report(cfg: RunConfig, trace) -> str:
    params = build_params(cfg)
    lines = []
    steps = parse_torque_steps(cfg.torque_steps)
    for i, step in enumerate(steps):
        target = _steady_torque(params, step.torque)
        until = steps[i + 1].time_s if i + 1 < len(steps) else None
        head = f"step t={step.time_s:.6g}s to torque {step.torque:g} (steady {target:.4f})"
        try:
            dt = band_entry_time(trace, step.time_s, target, until_s=until)
            lines.append(f"{head}: settles into the +-0.05 band in {1e3*dt:.3f} ms")
        except ValueError as exc:
            lines.append(f"{head}: {exc}")
            continue
        try:
            settling_time(trace, step.time_s, target, until_s=until)
        except ValueError:
            lines.append(
                "  (switching ripple re-exceeds the band later in the dwell;"
                " the entry time above is the step-response figure)"
            )
    inversions = find_level_inversion(trace, 0.0, float(trace.t[-1]) + trace.ts)
    for phase, t_done in inversions:
        lines.append(f"voltage inversion through zero: phase {phase} at t={t_done:.6g}s")
    lines.append(f"max level jump per interval: {max_level_jump(trace)}")
    return "\n".join(lines) + "\n"


def _run_one(cfg: RunConfig, label: str):
    controller = build_controller(cfg)
    trace = run_closed_loop(controller, build_scenario(cfg))
    return controller, trace


def cmd_simulate(cfg: RunConfig, out_dir: str, args) -> int:
    label = args.label or "run"
    fingerprint = config_fingerprint(cfg)
    controller, trace = _run_one(cfg, label)
    os.makedirs(out_dir, exist_ok=True)

    trace_path = os.path.join(out_dir, f"{label}_trace.csv")
    write_trace_csv(trace, trace_path, comment=f"fingerprint {fingerprint}")
    written = [trace_path]

    lines = [
        f"fingerprint {fingerprint}",
        f"controller {cfg.controller}",
        f"horizon {cfg.horizon}",
        f"profile {cfg.profile}",
    ]
    transient = bool(parse_torque_steps(cfg.torque_steps))
    metrics = None
    if transient:
        lines.append(_transient_report(cfg, trace).rstrip())
    else:
        metrics = steady_state_metrics(trace, periods=cfg.metric_periods)
        lines.append(metrics.as_text().rstrip())
    metrics_path = os.path.join(out_dir, f"{label}_metrics.txt")
    with open(metrics_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    written.append(metrics_path)

    if cfg.profile == "fixed":
        audit_path = os.path.join(out_dir, f"{label}_audit.txt")
        with open(audit_path, "w") as fh:
            fh.write(f"fingerprint {fingerprint}\n" + controller.audit_report())
        written.append(audit_path)

    if not args.no_figures:
        written += render_report(
            trace,
            out_dir,
            prefix=label,
            spectrum_periods=cfg.metric_periods,
            fingerprint=fingerprint,
        )
    for path in written:
        print(f"wrote {path}")

    if args.check:
        return _check_metrics(cfg, metrics)
    return EXIT_OK


def _check_metrics(cfg: RunConfig, metrics) -> int:
    bounds = (
        ("check_thd_max", cfg.check_thd_max, lambda m, v: 100.0 * m.thd <= v),
        ("check_thd_min", cfg.check_thd_min, lambda m, v: 100.0 * m.thd >= v),
        ("check_fsw_min", cfg.check_fsw_min, lambda m, v: m.f_sw >= v),
        ("check_fsw_max", cfg.check_fsw_max, lambda m, v: m.f_sw <= v),
    )
    configured = [(n, float(raw), ok) for n, raw, ok in bounds if raw.strip()]
    if not configured:
        print("check: no thresholds configured")
        return EXIT_OK
    if metrics is None:
        print("check: thresholds apply to steady-state runs only", file=sys.stderr)
        return EXIT_CONFIG
    failed = [(n, v) for n, v, ok in configured if not ok(metrics, v)]
    for name, value in failed:
        print(
            f"check failed: {name} {value:g} "
            f"(thd {100*metrics.thd:.3f} %, f_sw {metrics.f_sw:.1f} Hz)",
            file=sys.stderr,
        )
    if failed:
        return EXIT_CHECK
    print("check passed")
    return EXIT_OK


def cmd_compare(cfgs: list[tuple[str, RunConfig]], out_dir: str, args) -> int:
    rows = []
    for label, cfg in cfgs:
        _, trace = _run_one(cfg, label)
        metrics = steady_state_metrics(trace, periods=cfg.metric_periods)
        weight = cfg.delta if cfg.controller == "tail" else cfg.switch_weight
        rows.append(
            {
                "label": label,
                "controller": cfg.controller,
                "horizon": cfg.horizon,
                "weight": weight,
                "thd": 100.0 * metrics.thd,
                "f_sw": metrics.f_sw,
                "fingerprint": config_fingerprint(cfg),
            }
        )
    header = f"{'label':<16} {'controller':<10} {'N':>2} {'weight':>10} {'THD %':>7} {'f_sw Hz':>8}"
    body = [header, "-" * len(header)]
    for r in rows:
        body.append(
            f"{r['label']:<16} {r['controller']:<10} {r['horizon']:>2} "
            f"{r['weight']:>10.5g} {r['thd']:>7.2f} {r['f_sw']:>8.1f}"
        )
    body.append("")
    for r in rows:
        body.append(f"fingerprint {r['label']} {r['fingerprint']}")
    text = "\n".join(body) + "\n"
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "comparison.txt")
    with open(path, "w") as fh:
        fh.write(text)
    print(text)
    print(f"wrote {path}")

    if args.check:
        if len(rows) % 2:
            print("check: compare expects pairs (candidate, reference)", file=sys.stderr)
            return EXIT_CONFIG
        worst = []
        for a, b in zip(rows[::2], rows[1::2]):
            if a["thd"] >= b["thd"]:
                worst.append((a["label"], b["label"]))
        for cand, ref in worst:
            print(f"check failed: {cand} not below {ref}", file=sys.stderr)
        if worst:
            return EXIT_CHECK
        print("check passed")
    return EXIT_OK


# -- argument wiring -------------------------------------------------------


class _SpecAction(argparse.Action):
    """Collect --config/--preset occurrences preserving their order."""

    def __call__(self, parser, namespace, values, option_string=None):
        specs = getattr(namespace, "specs", None) or []
        kind = "preset" if option_string == "--preset" else "config"
        specs.append((kind, values))
        namespace.specs = specs


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drivempc",
        description="Finite-control-set drive controller: training, simulation, comparison.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument(
            "--config", action=_SpecAction, metavar="PATH", help="configuration file"
        )
        p.add_argument(
            "--preset", action=_SpecAction, metavar="NAME", help="packaged configuration"
        )
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            dest="overrides",
            help="override one configuration key (repeatable)",
        )
        p.add_argument("--out", default="out", metavar="DIR", help="output directory")
        p.add_argument(
            "--ci", action="store_true", help="reduced-effort profile (small M)"
        )

    p_train = sub.add_parser("train", help="train a tail-cost artifact")
    common(p_train)
    p_train.add_argument("--tail", metavar="PATH", help="artifact output path")

    p_sim = sub.add_parser("simulate", help="run one closed-loop scenario")
    common(p_sim)
    p_sim.add_argument("--tail", metavar="PATH", help="override tail artifact path")
    p_sim.add_argument("--horizon", type=int, help="override prediction horizon")
    p_sim.add_argument(
        "--profile", choices=("float", "fixed"), help="override numeric profile"
    )
    p_sim.add_argument("--label", help="output file prefix (default: run)")
    p_sim.add_argument(
        "--no-figures", action="store_true", help="skip figure rendering"
    )
    p_sim.add_argument(
        "--check", action="store_true", help="verify configured thresholds; exit 3 on failure"
    )

    p_cmp = sub.add_parser("compare", help="run several configurations side by side")
    common(p_cmp)
    p_cmp.add_argument(
        "--check",
        action="store_true",
        help="require each odd row's THD below the following row's; exit 3 otherwise",
    )
    return parser


def _collect_configs(args) -> list[tuple[str, RunConfig]]:
    specs = getattr(args, "specs", None) or []
    if not specs:
        specs = [("default", "")]
    out = []
    for kind, value in specs:
        if kind == "preset":
            cfg, label = load_preset_config(value), value
        elif kind == "config":
            cfg = load_config(value)
            label = os.path.splitext(os.path.basename(value))[0]
        else:
            cfg, label = RunConfig(), "default"
        apply_overrides(cfg, args.overrides)
        out.append((label, cfg))
    return out


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        configs = _collect_configs(args)
        if args.command == "train":
            if len(configs) != 1:
                raise ConfigError("train takes exactly one configuration")
            return cmd_train(configs[0][1], args.out, args)
        if args.command == "simulate":
            if len(configs) != 1:
                raise ConfigError("simulate takes exactly one configuration")
            label, cfg = configs[0]
            if args.horizon is not None:
                cfg.horizon = args.horizon
            if args.profile is not None:
                cfg.profile = args.profile
            if args.tail:
                cfg.tail = args.tail
            if args.label is None:
                args.label = label if label != "default" else "run"
            return cmd_simulate(cfg, args.out, args)
        return cmd_compare(configs, args.out, args)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
