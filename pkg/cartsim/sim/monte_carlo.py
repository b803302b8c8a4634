"""
Monte-Carlo aggregation of independent seeded runs.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import structlog

from ..shared.utils.errors import ValidationError
from .orchestrator import RunResult, run_scenario
from .scenario import ScenarioSpec

logger = structlog.get_logger(__name__)


def wilson_interval(successes: int, total: int, z: float = 1.96) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if total <= 0:
        return (0.0, 1.0)
    p = successes / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (p + z2 / (2.0 * total)) / denom
    margin = (z * ((p * (1.0 - p) / total + z2 / (4.0 * total * total)) ** 0.5)) / denom
    return (max(0.0, center - margin), min(1.0, center + margin))


@dataclass(frozen=True)
class MonteCarloSummary:
    """Aggregate metrics over the runs of one scenario."""

    scenario: str
    policy_kind: str
    n_runs: int
    success_rate: float
    ci_low: float
    ci_high: float
    collision_rate: float
    mean_J: float
    std_J: float
    min_h: Tuple[float, ...]
    mean_margin: float
    mean_tracking_error: float
    tracking_error_series: np.ndarray
    event_counts: Dict[str, int]
    results: Tuple[RunResult, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "policy": self.policy_kind,
            "n_runs": self.n_runs,
            "success_rate": self.success_rate,
            "success_ci": [self.ci_low, self.ci_high],
            "collision_rate": self.collision_rate,
            "mean_J": self.mean_J,
            "std_J": self.std_J,
            "min_h": list(self.min_h),
            "min_h_overall": min(self.min_h) if self.min_h else None,
            "mean_margin": self.mean_margin,
            "mean_tracking_error": self.mean_tracking_error,
            "tracking_error_series": self.tracking_error_series.tolist(),
            "events": dict(self.event_counts),
        }


def summarize(spec: ScenarioSpec, results: List[RunResult]) -> MonteCarloSummary:
    """Aggregate run results ordered by run index."""
    n = len(results)
    successes = sum(r.success for r in results)
    low, high = wilson_interval(successes, n)
    efforts = np.array([r.control_effort for r in results])

    # Aborted runs are shorter; average the tracking error over the common prefix.
    length = min(r.tracking_error_series.size for r in results)
    tracking = np.mean([r.tracking_error_series[:length] for r in results], axis=0)

    events: Dict[str, int] = {}
    for r in results:
        for kind, count in r.event_counts().items():
            events[kind] = events.get(kind, 0) + count

    return MonteCarloSummary(
        scenario=spec.name,
        policy_kind=spec.policy.kind,
        n_runs=n,
        success_rate=successes / n,
        ci_low=low,
        ci_high=high,
        collision_rate=sum(r.collided for r in results) / n,
        mean_J=float(efforts.mean()),
        std_J=float(efforts.std(ddof=1)) if n > 1 else 0.0,
        min_h=tuple(r.min_h for r in results),
        mean_margin=float(np.mean([r.mean_margin for r in results])),
        mean_tracking_error=float(tracking.mean()) if tracking.size else 0.0,
        tracking_error_series=tracking,
        event_counts=events,
        results=tuple(results),
    )


def _run_one(args: Tuple[ScenarioSpec, int]) -> RunResult:
    spec, run_index = args
    return run_scenario(spec, run_index)


def monte_carlo(spec: ScenarioSpec, n_runs: Optional[int] = None, workers: int = 1) -> MonteCarloSummary:
    """
    Run `n_runs` independent runs (run k uses seed + k) and aggregate them.

    Args:
        spec: Validated scenario
        n_runs: Number of runs; defaults to the scenario's n_monte_carlo
        workers: Process-pool size; 1 runs in-process

    Returns:
        MonteCarloSummary with results ordered by run index
    """
    n_runs = spec.n_monte_carlo if n_runs is None else n_runs
    if n_runs < 1:
        raise ValidationError("n_runs", "must be at least 1")
    if workers < 1:
        raise ValidationError("workers", "must be at least 1")

    log = logger.bind(scenario=spec.name, policy=spec.policy.kind)
    log.info("monte_carlo_started", runs=n_runs, workers=workers)

    tasks = [(spec, k) for k in range(n_runs)]
    if workers == 1 or n_runs == 1:
        results = [_run_one(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, tasks))
    results.sort(key=lambda r: r.run_index)

    summary = summarize(spec, results)
    log.info(
        "monte_carlo_finished",
        success_rate=summary.success_rate,
        ci=[round(summary.ci_low, 4), round(summary.ci_high, 4)],
        mean_J=round(summary.mean_J, 6),
    )
    return summary
