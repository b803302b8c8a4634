"""
Command-line entry point.

    cartsim run <scenario> [--set path=value]... [--out dir] [--seed n] [--runs n]
    cartsim reproduce <nonlinear_small|nonlinear_large|spacecraft_grid|leo_table>
    cartsim verify <kkt|lyapunov|contraction|envelope|gradients>
    cartsim check-config

Exit codes: 0 on completion, 2 on a validation error, 3 on a runtime failure. `verify`
exits 1 when an assertion fails.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import structlog

from . import __version__
from .shared.utils.config import Config, resolve_output_dir, setup_logging
from .shared.utils.errors import CartError, ValidationError
from .sim.artifacts import write_metrics_json, write_trajectory_csv
from .sim.monte_carlo import monte_carlo
from .sim.orchestrator import run_scenario
from .sim.scenario import load_scenario

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def cmd_run(args: argparse.Namespace) -> int:
    """Run one scenario (or a Monte-Carlo batch) and write its artifacts."""
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(("seed", args.seed))
    spec = load_scenario(args.scenario, overrides)
    out_dir = resolve_output_dir(args.out)
    runs = args.runs if args.runs is not None else spec.n_monte_carlo

    stem = spec.name
    if runs == 1:
        result = run_scenario(spec, 0)
        write_trajectory_csv(out_dir / f"{stem}_trajectory.csv", result, spec)
        write_metrics_json(out_dir / f"{stem}_metrics.json", spec, result=result)
        print(f"success={result.success} J={result.control_effort:.6g} min_h={result.min_h:.6g}")
    else:
        summary = monte_carlo(spec, runs, args.workers)
        write_trajectory_csv(out_dir / f"{stem}_trajectory.csv", summary.results[0], spec)
        write_metrics_json(out_dir / f"{stem}_metrics.json", spec, summary=summary)
        print(
            f"success={summary.success_rate:.4g} "
            f"[{summary.ci_low:.3g}, {summary.ci_high:.3g}] "
            f"J={summary.mean_J:.6g} min_h={min(summary.min_h):.6g}"
        )
    logger.info("artifacts_written", directory=str(out_dir), scenario=spec.name)
    return EXIT_OK


def cmd_reproduce(args: argparse.Namespace) -> int:
    """Run a canned suite and print its comparison table."""
    from .suites.reproduce import load_suite, run_suite

    if args.key not in Config.REPRODUCE_KEYS:
        raise ValidationError("reproduce", f"unknown key '{args.key}'; expected one of {Config.REPRODUCE_KEYS}")
    suite = load_suite(args.key)
    result = run_suite(suite, out_dir=args.out, workers=args.workers, runs=args.runs, seed=args.seed)
    for row in result.rows:
        print(
            f"{row['label']:<40} success={row['success_rate']:.3f} "
            f"J={row['mean_J']:.4g} min_h={row['min_h']:.4g}"
        )
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    """Run a property suite; exit 1 naming the failing assertion."""
    from .suites.verify import run_check

    if args.key not in Config.VERIFY_KEYS:
        raise ValidationError("verify", f"unknown key '{args.key}'; expected one of {Config.VERIFY_KEYS}")
    out_dir = resolve_output_dir(args.out) if args.out else None
    report = run_check(args.key, out_dir)
    print(report.summary_line())
    for failure in report.failures:
        print(f"FAILED: {failure}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_check_config(args: argparse.Namespace) -> int:
    """Print the resolved configuration and its validation status."""
    status = Config.validate_configuration()
    status["version"] = __version__
    print(json.dumps(status, indent=2))
    return EXIT_OK if status["valid"] else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cartsim",
        description="Contraction-based robust safety filters for multi-agent control: simulation and experiments.",
    )
    parser.add_argument("--version", action="version", version=f"cartsim {__version__}")
    parser.add_argument("--log-level", default=None, help="Logging level (default: CART_LOG_LEVEL)")
    parser.add_argument(
        "--workers",
        type=int,
        default=Config.CART_WORKERS,
        help="Monte-Carlo worker processes (default: CART_WORKERS)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a scenario file")
    run.add_argument("scenario", type=Path, help="Scenario YAML file")
    run.add_argument(
        "--set",
        action="append",
        metavar="PATH=VALUE",
        help="Override a scenario field, e.g. --set disturbance.d_bar=0.02 (repeatable)",
    )
    run.add_argument("--out", default=None, help="Output directory (default: CART_OUTPUT_DIR)")
    run.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
    run.add_argument("--runs", type=int, default=None, help="Monte-Carlo runs (default: scenario n_monte_carlo)")
    run.set_defaults(handler=cmd_run)

    reproduce = sub.add_parser("reproduce", help="Run a canned experiment suite")
    reproduce.add_argument("key", choices=Config.REPRODUCE_KEYS)
    reproduce.add_argument("--out", default=None, help="Output directory (default: CART_OUTPUT_DIR/<key>)")
    reproduce.add_argument("--runs", type=int, default=None, help="Runs per table row")
    reproduce.add_argument("--seed", type=int, default=None, help="Override the base seed")
    reproduce.set_defaults(handler=cmd_reproduce)

    verify = sub.add_parser("verify", help="Run a property verification suite")
    verify.add_argument("key", choices=Config.VERIFY_KEYS)
    verify.add_argument("--out", default=None, help="Directory for plot data (envelope)")
    verify.set_defaults(handler=cmd_verify)

    check = sub.add_parser("check-config", help="Show the resolved configuration")
    check.set_defaults(handler=cmd_check_config)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    if args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        return args.handler(args)
    except ValidationError as e:
        logger.error("validation_failed", field=e.field, error=e.message)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except CartError as e:
        logger.error("run_failed", error=str(e), kind=type(e).__name__)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception("unexpected_failure", error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
