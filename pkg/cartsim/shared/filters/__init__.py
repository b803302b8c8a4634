"""
CaRT filter stack: the log-barrier, the safety filters, the contraction metric and the robust filter.
"""

from .projection import SafetyFilterOutput, halfspace_filter, qp_oracle_halfspace
from .barrier import (
    BarrierEval,
    DistanceClearance,
    PairwiseSafety,
    H_FLOOR,
    eval_h,
    eval_barrier,
    safe_velocity,
    safe_velocity_time_derivative,
)
from .lagrangian_filter import (
    u_bar_lagrangian,
    safety_filter_lagrangian,
    lyapunov_lagrangian,
    lyapunov_rate_bound_lagrangian,
)
from .contraction import (
    MetricEval,
    ContractionSample,
    metric_pointwise,
    evaluate_metric,
    incremental_energy,
    contraction_residual,
    care_residual,
    verify_contraction_along_trajectory,
)
from .general_filter import (
    GeneralFilterContext,
    general_filter_context,
    u_bar_general,
    safety_filter_general,
    lyapunov_general,
    lyapunov_rate_bound_general,
)
from .robust_filter import (
    TargetPoint,
    SafeTargetTrajectory,
    PlantBounds,
    ErrorEnvelope,
    composite_variable,
    robust_filter,
    robust_filter_general,
    error_envelope,
    margin_from_envelope,
    estimate_plant_bounds,
)

__all__ = [
    "SafetyFilterOutput",
    "halfspace_filter",
    "qp_oracle_halfspace",
    "BarrierEval",
    "DistanceClearance",
    "PairwiseSafety",
    "H_FLOOR",
    "eval_h",
    "eval_barrier",
    "safe_velocity",
    "safe_velocity_time_derivative",
    "u_bar_lagrangian",
    "safety_filter_lagrangian",
    "lyapunov_lagrangian",
    "lyapunov_rate_bound_lagrangian",
    "MetricEval",
    "ContractionSample",
    "metric_pointwise",
    "evaluate_metric",
    "incremental_energy",
    "contraction_residual",
    "care_residual",
    "verify_contraction_along_trajectory",
    "GeneralFilterContext",
    "general_filter_context",
    "u_bar_general",
    "safety_filter_general",
    "lyapunov_general",
    "lyapunov_rate_bound_general",
    "TargetPoint",
    "SafeTargetTrajectory",
    "PlantBounds",
    "ErrorEnvelope",
    "composite_variable",
    "robust_filter",
    "robust_filter_general",
    "error_envelope",
    "margin_from_envelope",
    "estimate_plant_bounds",
]
