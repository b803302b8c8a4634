"""
Scenario loading, the closed-loop simulator, Monte-Carlo aggregation and artifact output.
"""

from .scenario import (
    DEFAULTS,
    RandomizeSpec,
    ScenarioSpec,
    apply_overrides,
    load_scenario,
    load_scenario_dict,
    parse_override,
)
from .stepper import NoiseStreams, step
from .orchestrator import RunResult, SimEvent, build_schedule, run_scenario
from .monte_carlo import MonteCarloSummary, monte_carlo, summarize, wilson_interval
from .artifacts import (
    build_provenance,
    read_csv_rows,
    read_provenance,
    write_envelope_csv,
    write_metrics_json,
    write_table,
    write_trajectory_csv,
)

__all__ = [
    "DEFAULTS",
    "RandomizeSpec",
    "ScenarioSpec",
    "apply_overrides",
    "load_scenario",
    "load_scenario_dict",
    "parse_override",
    "NoiseStreams",
    "step",
    "RunResult",
    "SimEvent",
    "build_schedule",
    "run_scenario",
    "MonteCarloSummary",
    "monte_carlo",
    "summarize",
    "wilson_interval",
    "build_provenance",
    "read_csv_rows",
    "read_provenance",
    "write_envelope_csv",
    "write_metrics_json",
    "write_table",
    "write_trajectory_csv",
]
