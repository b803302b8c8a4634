"""
CaRT safety filter for general control-affine plants.

The projection direction is the actuated, metric-weighted error e_v_bar = B^T M (v - v_d).
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import structlog

from ..models.dynamics import AffinePlant, is_fully_actuated
from ..models.gains import FilterGains
from ..models.world import Observation, SafetyConfig, World, global_psi, observe
from .barrier import PairwiseSafety, eval_barrier, safe_velocity_time_derivative
from .contraction import MetricEval, evaluate_metric, incremental_energy
from .projection import SafetyFilterOutput, halfspace_filter

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class GeneralFilterContext:
    """Quantities the general filter is assembled from at one observation."""

    e_v_bar: np.ndarray
    u_bar: np.ndarray
    M: np.ndarray
    v_d: np.ndarray
    f_d: np.ndarray
    e_v: np.ndarray
    grad_psi: np.ndarray
    assumption_holds: bool


def general_filter_context(
    plant: AffinePlant,
    obs: Observation,
    neighbor_velocities: Optional[Sequence[np.ndarray]],
    cfg: SafetyConfig,
    gains: FilterGains,
    metric: Optional[MetricEval] = None,
    safety: Optional[PairwiseSafety] = None,
) -> GeneralFilterContext:
    """
    Assemble e_v_bar and u_bar_d at one observation.

    u_bar_d = e_v_bar (e_v^T M (v_d_dot - f_d) - k_p e_v^T grad psi) / ||e_v_bar||^2, or 0 when
    e_v_bar = 0, with f_d = f(p, v_d, t).

    Args:
        plant: Control-affine plant
        obs: Local observation
        neighbor_velocities: Velocities of the observed neighbor agents (observed ones if None)
        cfg: Safety configuration
        gains: Safety-layer gains
        metric: Contraction metric at the current state; built from the Riccati equation if None
        safety: Optional pairwise safety function

    Returns:
        GeneralFilterContext
    """
    p, v, t = obs.self_state.p, obs.self_state.v, obs.time
    barrier = eval_barrier(obs, cfg, safety)
    v_d = -gains.k_p * barrier.grad_p
    v_d_dot = safe_velocity_time_derivative(obs, neighbor_velocities, cfg, gains.k_p, safety)
    if metric is None:
        metric = evaluate_metric(plant, p, v, v_d, t, gains)

    M = metric.M
    B = plant.actuation(p, v, t)
    f_d = plant.drift(p, v_d, t)
    e_v = v - v_d
    e_v_bar = B.T @ M @ e_v

    norm2 = float(e_v_bar @ e_v_bar)
    if norm2 != 0.0:
        scale = e_v @ M @ (v_d_dot - f_d) - gains.k_p * e_v @ barrier.grad_p
        u_bar = e_v_bar * (scale / norm2)
    else:
        u_bar = np.zeros(B.shape[1])

    return GeneralFilterContext(
        e_v_bar=e_v_bar,
        u_bar=u_bar,
        M=M,
        v_d=v_d,
        f_d=f_d,
        e_v=e_v,
        grad_psi=barrier.grad_p,
        assumption_holds=is_fully_actuated(B),
    )


def u_bar_general(
    plant: AffinePlant,
    obs: Observation,
    neighbor_velocities: Optional[Sequence[np.ndarray]],
    cfg: SafetyConfig,
    gains: FilterGains,
    metric: Optional[MetricEval] = None,
    safety: Optional[PairwiseSafety] = None,
) -> np.ndarray:
    """Reference input u_bar_d of the general filter."""
    return general_filter_context(plant, obs, neighbor_velocities, cfg, gains, metric, safety).u_bar


def safety_filter_general(
    u_learned: np.ndarray,
    plant: AffinePlant,
    obs: Observation,
    neighbor_velocities: Optional[Sequence[np.ndarray]],
    cfg: SafetyConfig,
    gains: FilterGains,
    metric: Optional[MetricEval] = None,
    safety: Optional[PairwiseSafety] = None,
) -> SafetyFilterOutput:
    """
    Minimal-deviation correction of the learned input against e_v_bar.

    The output's `e_v` field carries e_v_bar, the direction actually constrained.

    Raises:
        NotSafe: the barrier is undefined at the current observation
        RiccatiFailure: the metric could not be built
    """
    context = general_filter_context(plant, obs, neighbor_velocities, cfg, gains, metric, safety)
    u, constraint_value, active = halfspace_filter(
        np.asarray(u_learned, dtype=float), context.u_bar, context.e_v_bar
    )
    if not context.assumption_holds:
        logger.debug("actuation_assumption_failed", agent=obs.agent_index)
    return SafetyFilterOutput(
        u=u,
        constraint_value=constraint_value,
        active=active,
        e_v=context.e_v_bar,
        u_bar=context.u_bar,
        assumption_holds=context.assumption_holds,
    )


def lyapunov_general(
    world: World,
    plant: AffinePlant,
    cfg: SafetyConfig,
    gains: FilterGains,
    metrics: Sequence[np.ndarray],
    barrier_weight: float = 1.0,
) -> float:
    """
    V_s = w psi(X) + sum_i E_i with the given per-agent metrics.

    barrier_weight = 1 gives the form used in the decrease argument; barrier_weight = k_p
    gives the per-agent form.
    """
    value = barrier_weight * global_psi(world, cfg)
    for i, agent in enumerate(world.agents):
        v_d = -gains.k_p * eval_barrier(observe(world, i, cfg), cfg).grad_p
        value += incremental_energy(agent.v, v_d, metrics[i])
    return float(value)


def lyapunov_rate_bound_general(
    world: World,
    plant: AffinePlant,
    cfg: SafetyConfig,
    gains: FilterGains,
    metrics: Sequence[MetricEval],
    remainder: bool = True,
) -> float:
    """
    Bound on dV_s/dt (barrier weight k_p) under the filter.

    sum_i -k_p^2 ||grad psi_i||^2 - k_v E_i + e_v_bar^T R^-1 e_v_bar + 1/2 e_v^T (M_dot - Q) e_v

    The pointwise Riccati metric satisfies M A_d + A_d^T M - 2 M B R^-1 B^T M = -k_v M - Q, so the
    actuated term and the metric-rate term remain after the filter constraint is applied. With
    remainder=False only the first two terms are returned, which is the decrease the actuation
    assumption asks for. With barrier weight 1 the same bound applies when k_p = 1.
    """
    bound = 0.0
    for i, agent in enumerate(world.agents):
        grad = eval_barrier(observe(world, i, cfg), cfg).grad_p
        v_d = -gains.k_p * grad
        metric = metrics[i]
        bound += -gains.k_p ** 2 * grad @ grad - gains.k_v * incremental_energy(agent.v, v_d, metric.M)
        if not remainder:
            continue
        e_v = agent.v - v_d
        e_v_bar = metric.B.T @ metric.M @ e_v
        R = gains.actuation_weight(metric.B.shape[1])
        Q = gains.margin_matrix(plant.dim)
        bound += e_v_bar @ np.linalg.solve(R, e_v_bar) + 0.5 * e_v @ (metric.M_dot - Q) @ e_v
    return float(bound)
