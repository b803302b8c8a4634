"""
Artifact writers: trajectory CSV, metrics JSON and envelope-comparison CSV.

Every file carries a provenance block (resolved scenario, seed, runtime settings and
package version). CSV files start with `# key=<json>` lines; JSON files hold a
`provenance` key.
"""

import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import structlog

from .. import __version__
from ..shared.utils.config import Config
from .monte_carlo import MonteCarloSummary
from .orchestrator import RunResult
from .scenario import ScenarioSpec

logger = structlog.get_logger(__name__)


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def build_provenance(spec: Optional[ScenarioSpec], seed: Optional[int] = None, **extra: Any) -> Dict[str, Any]:
    """Provenance block for one artifact."""
    provenance = {
        "package": "cartsim",
        "version": __version__,
        "seed": seed if seed is not None else (spec.seed if spec is not None else None),
        "settings": Config.get_runtime_settings(),
    }
    if spec is not None:
        provenance["scenario"] = spec.to_dict()
    provenance.update(extra)
    return _jsonable(provenance)


def write_csv(path: Path, provenance: Dict[str, Any], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        for key, value in provenance.items():
            f.write(f"# {key}={json.dumps(value, sort_keys=True)}\n")
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    logger.debug("artifact_written", path=str(path))
    return path


def read_provenance(path: Path) -> Dict[str, Any]:
    """Parse the `# key=<json>` header of a CSV artifact."""
    provenance: Dict[str, Any] = {}
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith("# "):
                break
            key, _, raw = line[2:].rstrip("\n").partition("=")
            provenance[key] = json.loads(raw)
    return provenance


def read_csv_rows(path: Path) -> List[Dict[str, str]]:
    """Data rows of a CSV artifact, skipping the provenance header."""
    with Path(path).open("r", encoding="utf-8") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


def trajectory_header(dim: int, dim_input: int) -> List[str]:
    return (
        ["t", "agent"]
        + [f"p{k}" for k in range(dim)]
        + [f"v{k}" for k in range(dim)]
        + [f"u{k}" for k in range(dim_input)]
        + ["min_h"]
    )


def write_trajectory_csv(path: Path, result: RunResult, spec: ScenarioSpec) -> Path:
    """
    Per-tick, per-agent rows: t, agent, p..., v..., u..., min_h.

    The input at the final sample is left empty (no control is applied after the horizon).
    """
    n_samples, n_agents, dim = result.positions.shape
    dim_input = result.inputs.shape[2] if result.inputs.ndim == 3 else 0
    rows = []
    for k in range(n_samples):
        u_row = result.inputs[k] if k < len(result.inputs) else None
        for i in range(n_agents):
            u = [""] * dim_input if u_row is None else [repr(float(x)) for x in u_row[i]]
            rows.append(
                [repr(float(result.times[k])), i]
                + [repr(float(x)) for x in result.positions[k, i]]
                + [repr(float(x)) for x in result.velocities[k, i]]
                + u
                + [repr(float(result.min_h_series[k]))]
            )
    provenance = build_provenance(spec, result.rng_seed, run_index=result.run_index, policy=result.policy_kind)
    return write_csv(path, provenance, trajectory_header(dim, dim_input), rows)


def run_metrics(result: RunResult) -> Dict[str, Any]:
    return {
        "run_index": result.run_index,
        "policy": result.policy_kind,
        "success": result.success,
        "collided": result.collided,
        "aborted": result.aborted,
        "J": result.control_effort,
        "min_h": result.min_h,
        "mean_margin": result.mean_margin,
        "final_goal_error": result.final_goal_error,
        "reference_cost": result.reference_cost,
        "contraction_residual_max": result.contraction_residual_max,
        "events": result.event_counts(),
    }


def write_metrics_json(
    path: Path,
    spec: ScenarioSpec,
    summary: Optional[MonteCarloSummary] = None,
    result: Optional[RunResult] = None,
) -> Path:
    """Aggregate metrics (success_rate, mean_J, CI bounds, ...) with the provenance block."""
    if summary is None and result is None:
        raise ValueError("either a summary or a single result is required")
    if summary is not None:
        metrics = summary.to_dict()
        metrics["runs"] = [run_metrics(r) for r in summary.results]
    else:
        metrics = run_metrics(result)
        metrics.update({"success_rate": float(result.success), "mean_J": result.control_effort})
    document = {"provenance": build_provenance(spec), "metrics": _jsonable(metrics)}

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        json.dump(document, f, indent=2, sort_keys=True, allow_nan=True)
    logger.debug("artifact_written", path=str(path))
    return path


def write_envelope_csv(
    path: Path,
    times: np.ndarray,
    mean_s: np.ndarray,
    bound: np.ndarray,
    provenance: Dict[str, Any],
    position_error: Optional[np.ndarray] = None,
    position_bound: Optional[np.ndarray] = None,
) -> Path:
    """Monte-Carlo mean of ||s(t)|| against the analytic envelope, one row per sampled time."""
    header = ["t", "mean_s", "bound"]
    columns = [times, mean_s, bound]
    if position_error is not None and position_bound is not None:
        header += ["mean_position_error", "position_bound"]
        columns += [position_error, position_bound]
    rows = ([repr(float(c[k])) for c in columns] for k in range(len(times)))
    return write_csv(path, provenance, header, rows)


def write_table(directory: Path, rows: List[Dict[str, Any]], provenance: Dict[str, Any]) -> List[Path]:
    """Comparison table as table.csv and table.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    columns: List[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    csv_path = write_csv(
        directory / "table.csv",
        provenance,
        columns,
        ([_cell(row.get(c)) for c in columns] for row in rows),
    )
    json_path = directory / "table.json"
    with json_path.open("w", encoding="utf-8") as f:
        json.dump({"provenance": provenance, "rows": _jsonable(rows)}, f, indent=2, sort_keys=True)
    return [csv_path, json_path]


def _cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (dict, list)):
        return json.dumps(_jsonable(value), sort_keys=True)
    return value
