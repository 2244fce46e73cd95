"""Finite-control-set model predictive control for a medium-voltage drive.

The package models a three-level neutral-point-clamped inverter feeding an
induction machine, builds a current-tracking controller that optimizes
switch positions directly over a short horizon, and approximates the
infinite-horizon tail of the cost with a quadratic value function trained
offline as a semidefinite program.  A fixed-point replica of the online
controller mirrors what integer arithmetic on an embedded target would
compute.

Typical use::

    from drivempc import (DriveParams, ControlConfig, assemble_augmented,
                          load_preset, TailCostController, Scenario,
                          run_closed_loop, steady_state_metrics)

    params = DriveParams()
    config = ControlConfig()
    model = assemble_augmented(params, config)
    controller = TailCostController(model, load_preset("horizon1"), horizon=1)
    trace = run_closed_loop(controller, Scenario(duration_s=0.5))
    print(steady_state_metrics(trace))
"""

from importlib import resources as _resources

from .params import DriveParams, rated_slip_speed
from .motor import (
    PlantModel,
    build_plant,
    clarke,
    inverse_clarke,
    steady_state,
    switch_voltage,
    torque,
)
from .augment import (
    ALL_SWITCH,
    AugmentedModel,
    ControlConfig,
    assemble_augmented,
    feasible_inputs,
    input_sequences,
)
from .tailcost import (
    FingerprintMismatch,
    QuadraticValue,
    TailArtifact,
    load_artifact,
    save_artifact,
)
from .adp import (
    bellman_block_eigs,
    sampled_bellman_slack,
    train_tail,
)
from .qp import (
    CandidateTable,
    CondensedObjective,
    Decision,
    build_candidate_table,
    build_condensed,
    build_tracking_condensed,
    exhaustive_solve,
)
from .controller import TailCostController, TrackingController
from .fixedpoint import FixedController, FixedFormat, quantize
from .simloop import RunTrace, Scenario, TorqueStep, run_closed_loop, write_trace_csv
from .metrics import (
    SteadyStateMetrics,
    band_entry_time,
    current_thd,
    find_level_inversion,
    settling_time,
    steady_state_metrics,
    switching_frequency,
)

__version__ = "0.1.0"


def load_preset(name: str) -> TailArtifact:
    """Load a tail-cost artifact shipped with the package.

    ``name`` is the preset stem, e.g. ``"horizon1"`` or ``"horizon2"``.
    """
    path = _resources.files(__package__) / "presets" / (name + ".tail")
    with _resources.as_file(path) as p:
        return load_artifact(p)


__all__ = [
    "ALL_SWITCH",
    "AugmentedModel",
    "CandidateTable",
    "CondensedObjective",
    "ControlConfig",
    "Decision",
    "DriveParams",
    "FingerprintMismatch",
    "FixedController",
    "FixedFormat",
    "PlantModel",
    "QuadraticValue",
    "RunTrace",
    "Scenario",
    "SteadyStateMetrics",
    "TailArtifact",
    "TailCostController",
    "TorqueStep",
    "TrackingController",
    "assemble_augmented",
    "band_entry_time",
    "bellman_block_eigs",
    "build_candidate_table",
    "build_condensed",
    "build_plant",
    "build_tracking_condensed",
    "clarke",
    "current_thd",
    "exhaustive_solve",
    "feasible_inputs",
    "find_level_inversion",
    "input_sequences",
    "inverse_clarke",
    "load_artifact",
    "load_preset",
    "quantize",
    "rated_slip_speed",
    "run_closed_loop",
    "sampled_bellman_slack",
    "save_artifact",
    "settling_time",
    "steady_state",
    "steady_state_metrics",
    "switch_voltage",
    "switching_frequency",
    "torque",
    "train_tail",
    "write_trace_csv",
]
