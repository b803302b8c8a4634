"""
Shared utilities: configuration, logging setup and the error hierarchy.
"""

from .config import Config, setup_logging, resolve_output_dir, scenario_path
from .errors import (
    CartError,
    ValidationError,
    NotSafe,
    RiccatiFailure,
    GainTooSmall,
    PlannerFailure,
    QPInfeasible,
    NonFiniteState,
    TrajectoryDomainError,
)

__all__ = [
    "Config",
    "setup_logging",
    "resolve_output_dir",
    "scenario_path",
    "CartError",
    "ValidationError",
    "NotSafe",
    "RiccatiFailure",
    "GainTooSmall",
    "PlannerFailure",
    "QPInfeasible",
    "NonFiniteState",
    "TrajectoryDomainError",
]
