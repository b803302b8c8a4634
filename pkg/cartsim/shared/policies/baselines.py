"""
Comparison policies: the emulated learned policy, reference schedules it tracks, and the
CLF-CBF quadratic-program controller.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
import structlog

from ..filters.barrier import DistanceClearance, PairwiseSafety
from ..filters.robust_filter import SafeTargetTrajectory
from ..models.dynamics import Plant
from ..models.world import Observation, SafetyConfig
from ..utils.errors import ValidationError
from .qp import QPSolution, solve_qp

logger = structlog.get_logger(__name__)

POLICY_KINDS = ("learned_emulated", "clf_cbf_qp", "cart_safety_only", "cart_full", "global_reference")
REFERENCE_MODES = ("auto", "plan", "regulation")

_PERTURBATION_MODES = 3
_PERTURBATION_FREQUENCY = (0.2, 2.0)


@dataclass(frozen=True)
class QPParams:
    """Weights and rates of the CLF-CBF quadratic program."""

    alpha_h: float = 1.0
    alpha_V: float = 1.0
    rho_weight: float = 1e3
    input_box_limit: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        for name in ("alpha_h", "alpha_V", "rho_weight", "input_box_limit", "mu"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValidationError(f"policy.qp.{name}", "must be positive and finite")


@dataclass(frozen=True)
class PolicySpec:
    """Which policy drives the agents and how the emulated learned input is shaped."""

    kind: str = "learned_emulated"
    error_magnitude: float = 0.0
    qp: QPParams = field(default_factory=QPParams)
    tracking_kp: float = 1.0
    tracking_kd: float = 2.0
    reference: str = "auto"

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValidationError("policy.kind", f"unknown policy '{self.kind}'; expected one of {POLICY_KINDS}")
        if not np.isfinite(self.error_magnitude) or self.error_magnitude < 0:
            raise ValidationError("policy.error_magnitude", "must be finite and non-negative")
        if self.tracking_kp <= 0 or self.tracking_kd <= 0:
            raise ValidationError("policy.tracking", "tracking gains must be positive")
        if self.reference not in REFERENCE_MODES:
            raise ValidationError("policy.reference", f"must be one of {REFERENCE_MODES}")

    @property
    def effective_error(self) -> float:
        """The global reference is followed exactly; every other kind carries the learning error."""
        return 0.0 if self.kind == "global_reference" else self.error_magnitude


# ---------------------------------------------------------------------------
# Reference schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferencePoint:
    """Reference position, velocity and acceleration; `u` is the feed-forward input when one exists."""

    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    u: Optional[np.ndarray] = None


class RegulationSchedule:
    """Stationary goals: every agent is driven toward its goal position at rest."""

    def __init__(self, goals: Sequence[np.ndarray]):
        self.goals = [np.asarray(g, dtype=float) for g in goals]

    def at(self, agent_index: int, t: float) -> ReferencePoint:
        goal = self.goals[agent_index]
        zero = np.zeros_like(goal)
        return ReferencePoint(p=goal, v=zero, a=zero)


class PlanSchedule:
    """
    Dense rollout of a global plan, one trajectory per agent.

    Past the end of the plan the final state is held without feed-forward.
    """

    def __init__(self, trajectories: Sequence[SafeTargetTrajectory]):
        self.trajectories = list(trajectories)

    def at(self, agent_index: int, t: float) -> ReferencePoint:
        trajectory = self.trajectories[agent_index]
        if t > trajectory.end:
            p, v = trajectory.p_d[-1], trajectory.v_d[-1]
            return ReferencePoint(p=p, v=v, a=np.zeros_like(v))
        point = trajectory.at(max(t, trajectory.start))
        return ReferencePoint(p=point.p, v=point.v, a=point.a, u=point.u)


# ---------------------------------------------------------------------------
# Emulated learned policy
# ---------------------------------------------------------------------------


@lru_cache(maxsize=1024)
def _perturbation_modes(seed: int, agent_index: int, channels: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, agent_index, channels]))
    amplitudes = rng.dirichlet(np.ones(_PERTURBATION_MODES), size=channels)
    frequencies = rng.uniform(*_PERTURBATION_FREQUENCY, size=(channels, _PERTURBATION_MODES))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(channels, _PERTURBATION_MODES))
    for array in (amplitudes, frequencies, phases):
        array.setflags(write=False)
    return amplitudes, frequencies, phases


def bounded_perturbation(seed: int, agent_index: int, t: float, channels: int) -> np.ndarray:
    """Smooth low-frequency signal with every channel bounded by 1 in absolute value."""
    amplitudes, frequencies, phases = _perturbation_modes(int(seed), int(agent_index), int(channels))
    return np.sum(amplitudes * np.sin(frequencies * t + phases), axis=1)


def learned_policy_emulated(
    obs: Observation,
    reference: ReferencePoint,
    plant: Plant,
    error_magnitude: float,
    seed: int,
    tracking_kp: float = 1.0,
    tracking_kd: float = 2.0,
) -> np.ndarray:
    """
    Stand-in for a learned motion-planning policy.

    A PD tracking law on the reference point, mapped through pinv(B), plus a seeded
    perturbation whose sup-norm is at most `error_magnitude`.

    Args:
        obs: Local observation of the agent
        reference: Reference point of this agent at the observation time
        plant: Plant model
        error_magnitude: Learning error bound epsilon
        seed: Perturbation seed
        tracking_kp: Position feedback gain
        tracking_kd: Velocity feedback gain

    Returns:
        Input vector
    """
    p, v, t = obs.self_state.p, obs.self_state.v, obs.time
    a0, B = plant.affine_form(p, v, t)
    feedback = tracking_kp * (reference.p - p) + tracking_kd * (reference.v - v)
    if reference.u is not None:
        u = reference.u + np.linalg.pinv(B) @ feedback
    else:
        u = np.linalg.pinv(B) @ (reference.a + feedback - a0)
    if error_magnitude > 0.0:
        u = u + error_magnitude * bounded_perturbation(seed, obs.agent_index, t, u.size)
    return u


# ---------------------------------------------------------------------------
# CLF-CBF quadratic program
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClfCbfProblem:
    """The QP in standard form over z = (u, rho), with a label per constraint row."""

    H: np.ndarray
    g: np.ndarray
    A: np.ndarray
    b: np.ndarray
    labels: Tuple[str, ...]


@dataclass(frozen=True)
class ClfCbfResult:
    """Solved CLF-CBF input, CLF relaxation and the labels of the active rows."""

    u: np.ndarray
    rho: float
    active: Tuple[str, ...]
    solution: QPSolution


def clf_metric(lambda_r: np.ndarray) -> np.ndarray:
    """
    Composite metric M_x = [[2 L^2, L], [L, I]].

    e^T M_x e = ||e_v + L e_p||^2 + ||L e_p||^2, so M_x is positive definite for any SPD L.
    """
    n = lambda_r.shape[0]
    return np.block([[2.0 * lambda_r @ lambda_r, lambda_r], [lambda_r, np.eye(n)]])


def build_clf_cbf_qp(
    obs: Observation,
    plant: Plant,
    u_learned: np.ndarray,
    reference: ReferencePoint,
    cfg: SafetyConfig,
    params: QPParams,
    lambda_r: np.ndarray,
    safety: Optional[PairwiseSafety] = None,
) -> ClfCbfProblem:
    """
    Assemble the CLF-CBF QP rows for one agent.

    CBF (one row per in-range neighbor, neighbor acceleration taken as zero) on
    h_hat = h_dot + mu h with h_hat_dot >= -alpha_h h_hat:
        (grad h^T B) u <= p_dot^T Hess h p_dot - grad h^T a0 + mu h_dot + alpha_h (h_dot + mu h)
    CLF toward the reference point with V = e^T M_x e:
        2 (M_x e)_v^T B u - rho <= -alpha_V V - 2 (M_x e)_p^T e_v - 2 (M_x e)_v^T (a0 - a_ref)
    Box: |u_k| <= input_box_limit.
    """
    safety = safety or DistanceClearance(cfg)
    p, v, t = obs.self_state.p, obs.self_state.v, obs.time
    a0, B = plant.affine_form(p, v, t)
    n, m = B.shape
    u_learned = np.asarray(u_learned, dtype=float)

    H = 2.0 * np.diag(np.concatenate([np.ones(m), [params.rho_weight]]))
    g = np.concatenate([-2.0 * u_learned, [0.0]])
    rows, bounds, labels = [], [], []

    neighbors = [(f"cbf_agent_{j}", state.p - p, state.v - v) for j, state in obs.neighbor_agents]
    neighbors += [(f"cbf_obstacle_{k}", position - p, -v) for k, position in obs.neighbor_obstacles]
    for label, p_ij, p_ij_dot in neighbors:
        h = safety.value(p_ij)
        grad = safety.gradient(p_ij)
        h_dot = float(grad @ p_ij_dot)
        rows.append(np.concatenate([grad @ B, [0.0]]))
        bounds.append(
            float(p_ij_dot @ safety.hessian(p_ij) @ p_ij_dot)
            - float(grad @ a0)
            + params.mu * h_dot
            + params.alpha_h * (h_dot + params.mu * h)
        )
        labels.append(label)

    lam = lambda_r if np.ndim(lambda_r) == 2 else float(lambda_r) * np.eye(n)
    e = np.concatenate([p - reference.p, v - reference.v])
    weighted = clf_metric(lam) @ e
    weighted_p, weighted_v = weighted[:n], weighted[n:]
    V = float(e @ weighted)
    rows.append(np.concatenate([2.0 * weighted_v @ B, [-1.0]]))
    bounds.append(
        -params.alpha_V * V - 2.0 * float(weighted_p @ (v - reference.v)) - 2.0 * float(weighted_v @ (a0 - reference.a))
    )
    labels.append("clf")

    for k in range(m):
        unit = np.zeros(m + 1)
        unit[k] = 1.0
        rows.extend([unit, -unit])
        bounds.extend([params.input_box_limit, params.input_box_limit])
        labels.extend([f"box_upper_{k}", f"box_lower_{k}"])

    return ClfCbfProblem(H=H, g=g, A=np.array(rows), b=np.array(bounds), labels=tuple(labels))


def clf_cbf_qp_policy(
    obs: Observation,
    plant: Plant,
    u_learned: np.ndarray,
    reference: ReferencePoint,
    cfg: SafetyConfig,
    params: QPParams,
    lambda_r: np.ndarray,
    safety: Optional[PairwiseSafety] = None,
) -> ClfCbfResult:
    """
    CLF-CBF QP controller: min ||u - u_learned||^2 + w rho^2 subject to the CBF, relaxed CLF and box rows.

    Raises:
        QPInfeasible: the CBF rows conflict with the input box
    """
    problem = build_clf_cbf_qp(obs, plant, u_learned, reference, cfg, params, lambda_r, safety)
    solution = solve_qp(problem.H, problem.g, problem.A, problem.b)
    m = problem.H.shape[0] - 1
    active = tuple(problem.labels[i] for i in solution.active)
    if active:
        logger.debug("clf_cbf_active", agent=obs.agent_index, active=active)
    return ClfCbfResult(u=solution.x[:m], rho=float(solution.x[m]), active=active, solution=solution)
