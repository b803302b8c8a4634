"""
Configuration settings and utilities for the cartsim safe-control simulator.
"""

import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import structlog
from dotenv import load_dotenv

load_dotenv()

_REPO_ROOT = Path(__file__).resolve().parents[3]


class Config:
    """Runtime settings read from the environment (and an optional .env file)."""

    SCHEMA_VERSION = 1

    # Output and scenario locations
    CART_OUTPUT_DIR = os.environ.get("CART_OUTPUT_DIR", "artifacts")
    CART_SCENARIO_DIR = os.environ.get("CART_SCENARIO_DIR", str(_REPO_ROOT / "scenarios"))

    # Logging
    CART_LOG_LEVEL = os.environ.get("CART_LOG_LEVEL", "INFO")
    CART_LOG_FORMAT = os.environ.get("CART_LOG_FORMAT", "console")

    # Execution
    CART_WORKERS = int(os.environ.get("CART_WORKERS", "1"))
    CART_RESIDUAL_TOL = float(os.environ.get("CART_RESIDUAL_TOL", "1e-6"))

    SUPPORTED_PLANTS = [
        "nonlinear_example",
        "nonlinear_example_underactuated",
        "spacecraft_planar",
        "leo_hcw",
        "double_integrator",
    ]

    SUPPORTED_POLICIES = [
        "learned_emulated",
        "clf_cbf_qp",
        "cart_safety_only",
        "cart_full",
        "global_reference",
    ]

    SUPPORTED_PROFILES = ["constant", "sinusoidal", "radial"]

    REPRODUCE_KEYS = ["nonlinear_small", "nonlinear_large", "spacecraft_grid", "leo_table"]

    VERIFY_KEYS = ["kkt", "lyapunov", "contraction", "envelope", "gradients"]

    LOG_FORMATS = ["console", "json"]

    @classmethod
    def validate_configuration(cls) -> Dict[str, Any]:
        """
        Validate the current configuration and return status.

        Returns:
            Dictionary with validation results
        """
        results = {
            "valid": True,
            "errors": [],
            "warnings": [],
            "settings": cls.get_runtime_settings(),
        }

        if cls.CART_LOG_LEVEL.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            results["errors"].append(f"CART_LOG_LEVEL '{cls.CART_LOG_LEVEL}' is not a logging level")

        if cls.CART_LOG_FORMAT not in cls.LOG_FORMATS:
            results["errors"].append(f"CART_LOG_FORMAT must be one of {cls.LOG_FORMATS}")

        if cls.CART_WORKERS < 1:
            results["errors"].append("CART_WORKERS must be at least 1")

        if cls.CART_RESIDUAL_TOL <= 0:
            results["errors"].append("CART_RESIDUAL_TOL must be positive")

        if not Path(cls.CART_SCENARIO_DIR).is_dir():
            results["warnings"].append(
                f"Scenario directory {cls.CART_SCENARIO_DIR} not found - canned suites unavailable"
            )

        results["valid"] = not results["errors"]
        return results

    @classmethod
    def get_runtime_settings(cls) -> Dict[str, Any]:
        """Resolved settings, embedded into every artifact's provenance block."""
        return {
            "output_dir": cls.CART_OUTPUT_DIR,
            "scenario_dir": cls.CART_SCENARIO_DIR,
            "log_level": cls.CART_LOG_LEVEL,
            "log_format": cls.CART_LOG_FORMAT,
            "workers": cls.CART_WORKERS,
            "residual_tol": cls.CART_RESIDUAL_TOL,
            "schema_version": cls.SCHEMA_VERSION,
        }


def setup_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> None:
    """
    Set up structured logging.

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR); defaults to CART_LOG_LEVEL
        fmt: "console" for human-readable lines or "json" for one JSON object per event
    """
    level = (level or Config.CART_LOG_LEVEL).upper()
    fmt = fmt or Config.CART_LOG_FORMAT
    level_value = getattr(logging, level, logging.INFO)

    logging.basicConfig(level=level_value, stream=sys.stderr, format="%(message)s")

    renderer = structlog.processors.JSONRenderer() if fmt == "json" else structlog.dev.ConsoleRenderer()
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level_value),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


def resolve_output_dir(output_dir: Optional[str] = None) -> Path:
    """
    Resolve the directory artifacts are written to, creating it if needed.

    Args:
        output_dir: Explicit directory; falls back to CART_OUTPUT_DIR

    Returns:
        Existing directory path
    """
    path = Path(output_dir or Config.CART_OUTPUT_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path


def scenario_path(name: str) -> Path:
    """Locate a canned scenario or suite file by stem inside CART_SCENARIO_DIR."""
    candidate = Path(name)
    if candidate.suffix in (".yaml", ".yml"):
        return candidate if candidate.exists() else Path(Config.CART_SCENARIO_DIR) / candidate.name
    return Path(Config.CART_SCENARIO_DIR) / f"{name}.yaml"
