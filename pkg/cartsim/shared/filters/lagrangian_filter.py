"""
CaRT safety filter for Lagrangian systems.

The learned input is projected onto the halfspace (u - u_bar_d)^T e_v <= 0 with
e_v = v - v_d, which keeps V_s = k_p psi(X) + sum 1/2 ||e_v||_M^2 non-increasing.
"""

from typing import Optional, Sequence

import numpy as np
import structlog

from ..models.dynamics import LagrangianPlant
from ..models.gains import FilterGains
from ..models.world import Observation, SafetyConfig, World, global_psi, observe
from .barrier import PairwiseSafety, eval_barrier, safe_velocity_time_derivative
from .projection import SafetyFilterOutput, halfspace_filter

logger = structlog.get_logger(__name__)


def u_bar_lagrangian(
    plant: LagrangianPlant,
    obs: Observation,
    neighbor_velocities: Optional[Sequence[np.ndarray]],
    cfg: SafetyConfig,
    gains: FilterGains,
    safety: Optional[PairwiseSafety] = None,
) -> np.ndarray:
    """
    Reference input u_bar_d = M v_d_dot + C v_d + G + D + v_d - k_v M e_v.

    Args:
        plant: Lagrangian plant
        obs: Local observation
        neighbor_velocities: Velocities of the observed neighbor agents (observed ones if None)
        cfg: Safety configuration
        gains: Safety-layer gains
        safety: Optional pairwise safety function

    Returns:
        u_bar_d
    """
    p, v = obs.self_state.p, obs.self_state.v
    barrier = eval_barrier(obs, cfg, safety)
    v_d = -gains.k_p * barrier.grad_p
    v_d_dot = safe_velocity_time_derivative(obs, neighbor_velocities, cfg, gains.k_p, safety)
    e_v = v - v_d
    M = plant.mass_matrix(p)

    return (
        M @ v_d_dot
        + plant.coriolis(p, v) @ v_d
        + plant.gravity(p)
        + plant.damping(p, v)
        + v_d
        - gains.k_v * M @ e_v
    )


def safety_filter_lagrangian(
    u_learned: np.ndarray,
    plant: LagrangianPlant,
    obs: Observation,
    neighbor_velocities: Optional[Sequence[np.ndarray]],
    cfg: SafetyConfig,
    gains: FilterGains,
    safety: Optional[PairwiseSafety] = None,
) -> SafetyFilterOutput:
    """
    Minimal-deviation correction of the learned input (closed-form KKT solution).

    Raises:
        NotSafe: the barrier is undefined at the current observation
    """
    u_bar = u_bar_lagrangian(plant, obs, neighbor_velocities, cfg, gains, safety)
    v_d = -gains.k_p * eval_barrier(obs, cfg, safety).grad_p
    e_v = obs.self_state.v - v_d
    u, constraint_value, active = halfspace_filter(np.asarray(u_learned, dtype=float), u_bar, e_v)
    if active:
        logger.debug("safety_filter_active", agent=obs.agent_index, constraint=constraint_value)
    return SafetyFilterOutput(u=u, constraint_value=constraint_value, active=active, e_v=e_v, u_bar=u_bar)


def lyapunov_lagrangian(world: World, plant: LagrangianPlant, cfg: SafetyConfig, gains: FilterGains) -> float:
    """V_s = k_p psi(X) + sum_i 1/2 ||v_i - v_d_i||^2_M(p_i)."""
    value = gains.k_p * global_psi(world, cfg)
    for i, agent in enumerate(world.agents):
        v_d = -gains.k_p * eval_barrier(observe(world, i, cfg), cfg).grad_p
        e_v = agent.v - v_d
        value += 0.5 * e_v @ plant.mass_matrix(agent.p) @ e_v
    return float(value)


def lyapunov_rate_bound_lagrangian(
    world: World, plant: LagrangianPlant, cfg: SafetyConfig, gains: FilterGains
) -> float:
    """Upper bound sum_i (-k_p^2 ||grad psi_i||^2 - k_v ||e_v_i||^2_M) on dV_s/dt under the filter."""
    bound = 0.0
    for i, agent in enumerate(world.agents):
        grad = eval_barrier(observe(world, i, cfg), cfg).grad_p
        e_v = agent.v + gains.k_p * grad
        bound -= gains.k_p ** 2 * grad @ grad + gains.k_v * e_v @ plant.mass_matrix(agent.p) @ e_v
    return float(bound)
