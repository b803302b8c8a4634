"""
Canned experiment suites run by `cartsim reproduce <key>`.

A suite file names a base scenario and either explicit cases or a sweep grid crossed with a
policy list:

    name: spacecraft_grid
    base_scenario: spacecraft_base.yaml
    runs: 10
    policies: [learned_emulated, cart_safety_only, clf_cbf_qp, cart_full]
    sweeps:
      - paths: [disturbance.d_bar, disturbance.gamma_bar]
        values: [0.0, 0.01, 0.02, 0.05, 0.1]

    cases:
      - label: cart/large
        policy: cart_full
        set: {disturbance.d_bar: 0.05}

Every row becomes one Monte-Carlo batch; the suite writes table.csv, table.json and the
trajectory of run 0 of every row.
"""

import itertools
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import structlog
import yaml

from ..shared.utils.config import Config, resolve_output_dir, scenario_path
from ..shared.utils.errors import ValidationError
from ..sim.artifacts import build_provenance, write_table, write_trajectory_csv
from ..sim.monte_carlo import MonteCarloSummary, monte_carlo
from ..sim.scenario import ScenarioSpec, apply_overrides, load_scenario_dict

logger = structlog.get_logger(__name__)

_SUITE_FIELDS = {"name", "base_scenario", "sweeps", "policies", "cases", "runs", "output_dir", "description"}


@dataclass(frozen=True)
class Sweep:
    """One sweep axis; every value is written to all of `paths`."""

    paths: Tuple[str, ...]
    values: Tuple[Any, ...]

    @property
    def name(self) -> str:
        return self.paths[0].split(".")[-1]


@dataclass(frozen=True)
class SuiteCase:
    """One explicit table row: a label, a policy kind and scenario overrides."""

    label: str
    policy: str
    overrides: Tuple[Tuple[str, Any], ...] = ()


@dataclass(frozen=True)
class SuiteSpec:
    """Experiment suite over a base scenario."""

    name: str
    base_scenario: Path
    policies: Tuple[str, ...] = ()
    sweeps: Tuple[Sweep, ...] = ()
    cases: Tuple[SuiteCase, ...] = ()
    runs: Optional[int] = None
    output_dir: Optional[Path] = None
    description: str = ""

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base_dir: Optional[Path] = None) -> "SuiteSpec":
        """
        Validate a suite dictionary.

        Raises:
            ValidationError: naming the offending suite field
        """
        if not isinstance(data, dict):
            raise ValidationError("suite", "expected a mapping")
        unknown = set(data) - _SUITE_FIELDS
        if unknown:
            raise ValidationError(f"suite.{sorted(unknown)[0]}", "unknown field")
        if not data.get("base_scenario"):
            raise ValidationError("suite.base_scenario", "is required")

        base = Path(data["base_scenario"])
        if not base.is_absolute() and base_dir is not None and (base_dir / base).exists():
            base = base_dir / base
        elif not base.exists():
            base = scenario_path(str(data["base_scenario"]))

        policies = tuple(data.get("policies") or ())
        for kind in policies:
            if kind not in Config.SUPPORTED_POLICIES:
                raise ValidationError("suite.policies", f"unknown policy '{kind}'")

        sweeps = []
        for k, raw in enumerate(data.get("sweeps") or ()):
            paths = raw.get("paths") or ([raw["path"]] if raw.get("path") else [])
            values = raw.get("values")
            if not paths or not values:
                raise ValidationError(f"suite.sweeps.{k}", "needs path(s) and a non-empty values list")
            sweeps.append(Sweep(tuple(paths), tuple(values)))

        cases = []
        for k, raw in enumerate(data.get("cases") or ()):
            if "policy" not in raw:
                raise ValidationError(f"suite.cases.{k}.policy", "is required")
            if raw["policy"] not in Config.SUPPORTED_POLICIES:
                raise ValidationError(f"suite.cases.{k}.policy", f"unknown policy '{raw['policy']}'")
            overrides = tuple((str(p), v) for p, v in (raw.get("set") or {}).items())
            cases.append(SuiteCase(str(raw.get("label", raw["policy"])), raw["policy"], overrides))

        if not cases and not policies:
            raise ValidationError("suite.policies", "a suite needs cases or a policy list")

        runs = data.get("runs")
        if runs is not None and (not isinstance(runs, int) or runs < 1):
            raise ValidationError("suite.runs", "must be a positive integer")

        return cls(
            name=str(data.get("name", base.stem)),
            base_scenario=base,
            policies=policies,
            sweeps=tuple(sweeps),
            cases=tuple(cases),
            runs=runs,
            output_dir=Path(data["output_dir"]) if data.get("output_dir") else None,
            description=str(data.get("description", "")),
        )

    def rows(self) -> List[Tuple[str, str, Tuple[Tuple[str, Any], ...], Dict[str, Any]]]:
        """(label, policy, overrides, sweep values) for every table row, in a fixed order."""
        if self.cases:
            return [(c.label, c.policy, c.overrides, {}) for c in self.cases]
        rows = []
        for point in itertools.product(*(s.values for s in self.sweeps)):
            overrides = tuple((path, value) for sweep, value in zip(self.sweeps, point) for path in sweep.paths)
            values = {sweep.name: value for sweep, value in zip(self.sweeps, point)}
            suffix = ",".join(f"{k}={v}" for k, v in values.items())
            for policy in self.policies:
                label = f"{policy}/{suffix}" if suffix else policy
                rows.append((label, policy, overrides, values))
        return rows


def load_suite(path: Union[str, Path]) -> SuiteSpec:
    """Load a suite file by path or by key inside CART_SCENARIO_DIR."""
    path = scenario_path(str(path))
    if not path.exists():
        raise ValidationError("suite", f"file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ValidationError("suite", f"cannot parse {path}: {e}")
    return SuiteSpec.from_dict(data, base_dir=path.parent)


def row_scenario(
    suite: SuiteSpec, policy: str, overrides: Tuple[Tuple[str, Any], ...], seed: Optional[int] = None
) -> ScenarioSpec:
    """Validated scenario of one row; sweep values are type-checked here."""
    base = load_scenario_dict(suite.base_scenario)
    extra = list(overrides) + [("policy.kind", policy)]
    if seed is not None:
        extra.append(("seed", seed))
    return ScenarioSpec.from_dict(apply_overrides(base, extra))


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", label).strip("_")


@dataclass
class SuiteResult:
    """Table rows, per-row summaries and the files written."""

    suite: SuiteSpec
    rows: List[Dict[str, Any]] = field(default_factory=list)
    summaries: List[MonteCarloSummary] = field(default_factory=list)
    files: List[Path] = field(default_factory=list)

    def row(self, label: str) -> Dict[str, Any]:
        for row in self.rows:
            if row["label"] == label:
                return row
        raise KeyError(label)


def run_suite(
    suite: SuiteSpec,
    out_dir: Optional[Union[str, Path]] = None,
    workers: int = 1,
    runs: Optional[int] = None,
    seed: Optional[int] = None,
    write: bool = True,
) -> SuiteResult:
    """
    Run every row of a suite and write the comparison table.

    Args:
        suite: Suite definition
        out_dir: Output directory; defaults to the suite's output_dir, then CART_OUTPUT_DIR/<name>
        workers: Monte-Carlo worker-pool size
        runs: Runs per row; overrides the suite and scenario values
        seed: Base seed override
        write: Write table.csv, table.json and trajectories

    Returns:
        SuiteResult
    """
    log = logger.bind(suite=suite.name)
    result = SuiteResult(suite)
    specs = []
    for label, policy, overrides, values in suite.rows():
        specs.append((label, policy, values, row_scenario(suite, policy, overrides, seed)))
    log.info("suite_started", rows=len(specs), workers=workers)

    for label, policy, values, spec in specs:
        n_runs = runs or suite.runs or spec.n_monte_carlo
        summary = monte_carlo(spec, n_runs, workers)
        result.summaries.append(summary)
        row = {
            "label": label,
            "policy": policy,
            **values,
            "dt": spec.dt,
            "d_bar": spec.disturbance.d_bar,
            "gamma_bar": spec.disturbance.gamma_bar,
            "n_runs": summary.n_runs,
            "success_rate": summary.success_rate,
            "ci_low": summary.ci_low,
            "ci_high": summary.ci_high,
            "collision_rate": summary.collision_rate,
            "mean_J": summary.mean_J,
            "std_J": summary.std_J,
            "min_h": min(summary.min_h),
            "mean_margin": summary.mean_margin,
            "mean_tracking_error": summary.mean_tracking_error,
            "events": summary.event_counts,
        }
        result.rows.append(row)
        log.info("suite_row_finished", label=label, success_rate=row["success_rate"], mean_J=round(row["mean_J"], 6))

        if write:
            directory = _output_dir(suite, out_dir)
            path = directory / "trajectories" / f"{_slug(label)}.csv"
            result.files.append(write_trajectory_csv(path, summary.results[0], spec))

    if write:
        directory = _output_dir(suite, out_dir)
        provenance = build_provenance(
            None,
            seed,
            suite=suite.name,
            base_scenario=load_scenario_dict(suite.base_scenario),
            rows=[{"label": label, "policy": policy, "sweep": values} for label, policy, values, _ in specs],
        )
        result.files.extend(write_table(directory, result.rows, provenance))
    log.info("suite_finished", rows=len(result.rows))
    return result


def _output_dir(suite: SuiteSpec, out_dir: Optional[Union[str, Path]]) -> Path:
    if out_dir is not None:
        return resolve_output_dir(str(out_dir))
    if suite.output_dir is not None:
        return resolve_output_dir(str(suite.output_dir))
    return resolve_output_dir(str(Path(Config.CART_OUTPUT_DIR) / suite.name))
