"""
Per-agent log-barrier psi^i = -sum log h(p_ij), its position gradient, and the
safe target velocity v_d = -k_p grad psi with its time derivative.

Relative positions are p_ij = p_j - p_i, so each gradient term points toward
neighbor j and v_d points away from it.
"""

from dataclasses import dataclass
from typing import Optional, Protocol, Sequence, Tuple

import numpy as np
import structlog

from ..models.world import Observation, SafetyConfig
from ..utils.errors import NotSafe

logger = structlog.get_logger(__name__)

H_FLOOR = 1e-9


class PairwiseSafety(Protocol):
    """Safety function of a relative position, with first and second derivatives in p_ij."""

    def value(self, p_ij: np.ndarray) -> float: ...

    def gradient(self, p_ij: np.ndarray) -> np.ndarray: ...

    def hessian(self, p_ij: np.ndarray) -> np.ndarray: ...


class DistanceClearance:
    """The affine Xi-weighted distance clearance h of a SafetyConfig."""

    def __init__(self, cfg: SafetyConfig):
        self.cfg = cfg

    def value(self, p_ij: np.ndarray) -> float:
        return self.cfg.clearance(p_ij)

    def gradient(self, p_ij: np.ndarray) -> np.ndarray:
        norm = self.cfg.xi_norm(p_ij)
        return self.cfg.xi @ p_ij / (norm * self.cfg.span)

    def hessian(self, p_ij: np.ndarray) -> np.ndarray:
        xi = self.cfg.xi
        norm = self.cfg.xi_norm(p_ij)
        xp = xi @ p_ij
        return (xi / norm - np.outer(xp, xp) / norm ** 3) / self.cfg.span


@dataclass(frozen=True)
class BarrierEval:
    """Value and gradient of psi^i plus the clearances that produced them."""

    psi: float
    grad_p: np.ndarray
    agent_h: Tuple[Tuple[int, float], ...]
    obstacle_h: Tuple[Tuple[int, float], ...]
    min_h: float

    @property
    def h_values(self) -> Tuple[Tuple[int, float], ...]:
        return self.agent_h + self.obstacle_h


def eval_h(p_ij: np.ndarray, cfg: SafetyConfig) -> float:
    """Clearance (||p_ij||_Xi - (r_s + delta_r_s)) / (r_sen - (r_s + delta_r_s))."""
    return cfg.clearance(np.asarray(p_ij, dtype=float))


def _relative_positions(obs: Observation):
    p_i = obs.self_state.p
    for j, state in obs.neighbor_agents:
        yield "agent", j, state.p - p_i
    for k, position in obs.neighbor_obstacles:
        yield "obstacle", k, position - p_i


def eval_barrier(
    obs: Observation,
    cfg: SafetyConfig,
    safety: Optional[PairwiseSafety] = None,
) -> BarrierEval:
    """
    Evaluate psi^i and its analytic gradient with respect to the agent's own position.

    Args:
        obs: Local observation
        cfg: Safety configuration
        safety: Pairwise safety function; defaults to the distance clearance of `cfg`

    Returns:
        BarrierEval

    Raises:
        NotSafe: some clearance is below the floor, so psi is undefined
    """
    safety = safety or DistanceClearance(cfg)
    psi = 0.0
    grad = np.zeros(obs.self_state.dim)
    agent_h, obstacle_h = [], []
    min_h = 1.0

    for kind, index, p_ij in _relative_positions(obs):
        h = safety.value(p_ij)
        (agent_h if kind == "agent" else obstacle_h).append((index, h))
        min_h = min(min_h, h)
        if h < H_FLOOR:
            logger.warning("barrier_undefined", agent=obs.agent_index, neighbor=index, kind=kind, h=h)
            raise NotSafe(h, obs.agent_index)
        psi -= np.log(h)
        grad += safety.gradient(p_ij) / h

    return BarrierEval(psi, grad, tuple(agent_h), tuple(obstacle_h), min_h)


def safe_velocity(
    obs: Observation,
    cfg: SafetyConfig,
    k_p: float,
    safety: Optional[PairwiseSafety] = None,
) -> np.ndarray:
    """Safe target velocity v_d = -k_p grad psi^i."""
    return -k_p * eval_barrier(obs, cfg, safety).grad_p


def safe_velocity_time_derivative(
    obs: Observation,
    neighbor_velocities: Optional[Sequence[np.ndarray]],
    cfg: SafetyConfig,
    k_p: float,
    safety: Optional[PairwiseSafety] = None,
) -> np.ndarray:
    """
    Analytic time derivative of v_d along the relative motion p_ij_dot = v_j - v_i.

    d/dt (grad h / h) = (Hess h / h - grad h grad h^T / h^2) p_ij_dot for every neighbor;
    obstacles are static.

    Args:
        obs: Local observation
        neighbor_velocities: Velocities aligned with obs.neighbor_agents; the observed
            neighbor velocities are used when omitted
        cfg: Safety configuration
        k_p: Barrier gain
        safety: Pairwise safety function; defaults to the distance clearance

    Returns:
        v_d_dot
    """
    safety = safety or DistanceClearance(cfg)
    if neighbor_velocities is None:
        neighbor_velocities = obs.neighbor_velocities()
    if len(neighbor_velocities) != len(obs.neighbor_agents):
        raise ValueError("neighbor_velocities must align with the observed neighbor agents")

    v_i = obs.self_state.v
    agent_rates = [v_j - v_i for v_j in neighbor_velocities]
    obstacle_rates = [-v_i for _ in obs.neighbor_obstacles]

    derivative = np.zeros(obs.self_state.dim)
    for (kind, index, p_ij), rate in zip(_relative_positions(obs), agent_rates + obstacle_rates):
        h = safety.value(p_ij)
        if h < H_FLOOR:
            raise NotSafe(h, obs.agent_index)
        g = safety.gradient(p_ij)
        derivative += safety.hessian(p_ij) @ rate / h - g * (g @ rate) / h ** 2
    return -k_p * derivative
