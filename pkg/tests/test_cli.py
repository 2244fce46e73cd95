"""Command-line layer: config files, presets, exit codes, determinism."""

import dataclasses
import os

import numpy as np
import pytest

from drivempc.cli import (
    EXIT_CHECK,
    EXIT_CONFIG,
    EXIT_OK,
    ConfigError,
    RunConfig,
    apply_overrides,
    build_controller,
    build_scenario,
    config_fingerprint,
    load_preset_config,
    main,
    parse_config_text,
    parse_torque_steps,
    resolve_tail,
)
from drivempc.controller import TailCostController, TrackingController
from drivempc.fixedpoint import FixedController
from drivempc.tailcost import TailArtifact, load_artifact

FAST = [
    "--set", "duration_periods=4", "--set", "warmup_periods=1",
    "--set", "metric_periods=2",
]


def write_config(tmp_path, name="run.cfg", **overrides):
    cfg = dataclasses.replace(RunConfig(), **overrides)
    path = tmp_path / name
    path.write_text(cfg.to_text())
    return path, cfg


# -- configuration files ----------------------------------------------------


def test_config_roundtrip_all_fields():
    cfg = RunConfig(delta=5.5, horizon=2, controller="tracking", torque_steps="0.1:0")
    back = parse_config_text(cfg.to_text())
    assert back == cfg
    assert parse_config_text(RunConfig().to_text()) == RunConfig()


def test_config_parse_errors():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("bananas = 3\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config_text("delta = many\n")
    with pytest.raises(ConfigError, match="expected"):
        parse_config_text("delta 4\n")
    # comments and blank lines are fine
    assert parse_config_text("# note\n\ndelta = 3.0\n").delta == 3.0


def test_overrides():
    cfg = apply_overrides(RunConfig(), ["delta=5.0", "horizon=2"])
    assert cfg.delta == 5.0 and cfg.horizon == 2
    with pytest.raises(ConfigError, match="unknown key"):
        apply_overrides(RunConfig(), ["nope=1"])
    with pytest.raises(ConfigError, match="KEY=VALUE"):
        apply_overrides(RunConfig(), ["delta"])


def test_torque_step_parsing():
    assert parse_torque_steps("") == ()
    steps = parse_torque_steps("0.1:0; 0.05:1")
    assert [s.time_s for s in steps] == [0.05, 0.1]  # sorted
    assert [s.torque for s in steps] == [1.0, 0.0]
    assert parse_torque_steps("0.1:0, 0.2:1")[1].time_s == 0.2  # commas ok
    with pytest.raises(ConfigError, match="time_s:torque"):
        parse_torque_steps("0.1=3")


def test_scenario_timing_in_periods():
    cfg = RunConfig(duration_periods=10.0, warmup_periods=2.0)
    sc = build_scenario(cfg)
    assert sc.duration_s == pytest.approx(0.2)
    assert sc.warmup_s == pytest.approx(0.04)


def test_fingerprint_tracks_cost_parameters():
    a = config_fingerprint(RunConfig())
    assert a == config_fingerprint(RunConfig())
    assert a != config_fingerprint(RunConfig(delta=5.0))
    # scenario length is not part of the parameter fingerprint
    assert a == config_fingerprint(RunConfig(duration_periods=8.0))


# -- presets and artifacts --------------------------------------------------


def test_packaged_presets_parse():
    names = ["steady-n1", "steady-n2", "baseline-n1", "baseline-n2", "transient"]
    kinds = {n: load_preset_config(n) for n in names}
    assert kinds["steady-n1"].controller == "tail"
    assert kinds["steady-n2"].horizon == 2
    assert kinds["baseline-n1"].controller == "tracking"
    assert kinds["baseline-n2"].switch_weight == pytest.approx(0.0069)
    assert parse_torque_steps(kinds["transient"].torque_steps)
    with pytest.raises(ConfigError, match="preset"):
        load_preset_config("nope")


def test_resolve_tail_paths(tmp_path):
    with pytest.raises(ConfigError, match="needs"):
        resolve_tail("")
    with pytest.raises(ConfigError, match="does not exist"):
        resolve_tail(str(tmp_path / "missing.tail"))
    with pytest.raises(ConfigError, match="preset"):
        resolve_tail("preset:missing")
    art = resolve_tail("preset:horizon1")
    assert isinstance(art, TailArtifact)
    assert art.m_iters == 50


def test_build_controller_kinds():
    assert isinstance(build_controller(RunConfig(controller="tracking")), TrackingController)
    assert isinstance(
        build_controller(RunConfig(controller="tail", delta=6.0)), TailCostController
    )
    fx = build_controller(RunConfig(controller="tracking", profile="fixed"))
    assert isinstance(fx, FixedController)
    with pytest.raises(ConfigError, match="controller"):
        build_controller(RunConfig(controller="fuzzy"))
    with pytest.raises(ConfigError, match="profile"):
        build_controller(RunConfig(controller="tracking", profile="double"))


# -- command runs -----------------------------------------------------------


def test_simulate_writes_outputs(tmp_path):
    out = tmp_path / "out"
    code = main(
        ["simulate", "--preset", "baseline-n1", *FAST, "--out", str(out), "--no-figures"]
    )
    assert code == EXIT_OK
    trace = out / "baseline-n1_trace.csv"
    metrics = out / "baseline-n1_metrics.txt"
    assert trace.exists() and metrics.exists()
    fp = config_fingerprint(
        apply_overrides(load_preset_config("baseline-n1"), [p for p in FAST if "=" in p])
    )
    assert trace.read_text().splitlines()[0] == f"# fingerprint {fp}"
    head = metrics.read_text().splitlines()
    assert head[0] == f"fingerprint {fp}"
    assert any(l.startswith("thd ") for l in head)


def test_simulate_renders_figures(tmp_path):
    out = tmp_path / "fig"
    code = main(
        ["simulate", "--preset", "baseline-n1", *FAST, "--out", str(out), "--label", "x"]
    )
    assert code == EXIT_OK
    for kind in ("currents", "spectrum", "switching", "torque"):
        assert (out / f"x_{kind}.png").stat().st_size > 5000


def test_simulate_fixed_profile_writes_audit(tmp_path):
    out = tmp_path / "out"
    code = main(
        [
            "simulate", "--preset", "baseline-n1", *FAST,
            "--profile", "fixed", "--out", str(out), "--no-figures",
        ]
    )
    assert code == EXIT_OK
    audit = (out / "baseline-n1_audit.txt").read_text()
    assert "fixed-point audit" in audit


def test_simulate_check_thresholds(tmp_path):
    out = tmp_path / "out"
    base = ["simulate", "--preset", "baseline-n1", *FAST, "--out", str(out), "--no-figures", "--check"]
    assert main(base + ["--set", "check_fsw_max=1"]) == EXIT_CHECK
    assert main(base + ["--set", "check_thd_max=99", "--set", "check_fsw_max=9000"]) == EXIT_OK
    assert main(base) == EXIT_OK  # no thresholds configured


def test_simulate_transient_report(tmp_path):
    out = tmp_path / "out"
    code = main(
        ["simulate", "--preset", "transient", "--out", str(out), "--no-figures"]
    )
    assert code == EXIT_OK
    text = (out / "transient_metrics.txt").read_text()
    assert "settles in" in text
    assert "voltage inversion through zero" in text
    assert "max level jump per interval: 1" in text


def test_simulate_transient_rejects_thresholds(tmp_path):
    out = tmp_path / "out"
    code = main(
        [
            "simulate", "--preset", "transient", "--out", str(out),
            "--no-figures", "--check", "--set", "check_thd_max=10",
        ]
    )
    assert code == EXIT_CONFIG


def test_config_error_exit_codes(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG
    path, _ = write_config(tmp_path)
    assert main(["simulate", "--config", str(path), "--set", "zzz=1"]) == EXIT_CONFIG


def test_compare_is_deterministic_and_checked(tmp_path):
    lo, _ = write_config(
        tmp_path, "quiet.cfg", controller="tracking", switch_weight=0.001,
        duration_periods=4.0, warmup_periods=1.0, metric_periods=2,
    )
    hi, _ = write_config(
        tmp_path, "noisy.cfg", controller="tracking", switch_weight=0.00235,
        duration_periods=4.0, warmup_periods=1.0, metric_periods=2,
    )
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    argv = ["compare", "--config", str(lo), "--config", str(hi), "--check"]
    assert main(argv + ["--out", str(out_a)]) == EXIT_OK
    assert main(argv + ["--out", str(out_b)]) == EXIT_OK
    text_a = (out_a / "comparison.txt").read_bytes()
    assert text_a == (out_b / "comparison.txt").read_bytes()
    assert b"quiet" in text_a and b"noisy" in text_a
    # reversed pair: the low-distortion run is no longer first -> check fails
    assert (
        main(
            ["compare", "--config", str(hi), "--config", str(lo), "--check",
             "--out", str(tmp_path / "c")]
        )
        == EXIT_CHECK
    )


def test_compare_check_needs_pairs(tmp_path):
    lo, _ = write_config(
        tmp_path, "only.cfg", controller="tracking",
        duration_periods=4.0, warmup_periods=1.0, metric_periods=2,
    )
    code = main(["compare", "--config", str(lo), "--check", "--out", str(tmp_path / "o")])
    assert code == EXIT_CONFIG


def test_train_ci_writes_small_artifact(tmp_path):
    out = tmp_path / "out"
    tail_path = tmp_path / "small.tail"
    code = main(
        ["train", "--ci", "--out", str(out), "--tail", str(tail_path),
         "--set", "seed=3"]
    )
    assert code == EXIT_OK
    art = load_artifact(tail_path)
    assert art.m_iters == 5
    assert "olved" in art.solver_status


def test_train_rejects_multiple_configs(tmp_path):
    code = main(
        ["train", "--preset", "baseline-n1", "--preset", "baseline-n2", "--out", str(tmp_path)]
    )
    assert code == EXIT_CONFIG
