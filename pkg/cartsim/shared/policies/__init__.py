"""
Comparison policies: emulated learned policy, CLF-CBF QP controller and the global planner.
"""

from .qp import ActiveSetSolver, QPSolution, get_qp_solver, solve_qp, kkt_residuals
from .baselines import (
    POLICY_KINDS,
    QPParams,
    PolicySpec,
    ReferencePoint,
    RegulationSchedule,
    PlanSchedule,
    ClfCbfProblem,
    ClfCbfResult,
    bounded_perturbation,
    learned_policy_emulated,
    clf_metric,
    build_clf_cbf_qp,
    clf_cbf_qp_policy,
)
from .planner import PlannerSettings, GlobalPlan, linear_segment_map, global_reference_policy

__all__ = [
    "ActiveSetSolver",
    "QPSolution",
    "get_qp_solver",
    "solve_qp",
    "kkt_residuals",
    "POLICY_KINDS",
    "QPParams",
    "PolicySpec",
    "ReferencePoint",
    "RegulationSchedule",
    "PlanSchedule",
    "ClfCbfProblem",
    "ClfCbfResult",
    "bounded_perturbation",
    "learned_policy_emulated",
    "clf_metric",
    "build_clf_cbf_qp",
    "clf_cbf_qp_policy",
    "PlannerSettings",
    "GlobalPlan",
    "linear_segment_map",
    "global_reference_policy",
]
