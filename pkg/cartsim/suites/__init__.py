"""
Experiment suites (canned reproductions) and property verification suites.
"""

from .reproduce import SuiteCase, SuiteResult, SuiteSpec, Sweep, load_suite, row_scenario, run_suite
from .verify import (
    VERIFY_CHECKS,
    VerifyReport,
    check_contraction,
    check_envelope,
    check_gradients,
    check_kkt,
    check_lyapunov,
    run_check,
)

__all__ = [
    "SuiteCase",
    "SuiteResult",
    "SuiteSpec",
    "Sweep",
    "load_suite",
    "row_scenario",
    "run_suite",
    "VERIFY_CHECKS",
    "VerifyReport",
    "check_contraction",
    "check_envelope",
    "check_gradients",
    "check_kkt",
    "check_lyapunov",
    "run_check",
]
