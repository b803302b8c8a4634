"""
Disturbance-free global reference planner.

Direct multiple shooting over K segments per agent: node states and zero-order-hold inputs
are the decision variables, the dynamics enter as weighted defects through the exact
segment map of the (linear) plant, and inter-agent and obstacle clearance enter as hinge
penalties at every node. The accepted plan is the dense tick-by-tick rollout of the
optimized inputs, which is exactly what the simulator reproduces without disturbance.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import scipy.sparse
import structlog
from scipy.optimize import least_squares

from ..filters.robust_filter import SafeTargetTrajectory
from ..models.dynamics import Plant, propagate
from ..models.world import AgentState, SafetyConfig, World, min_clearance
from ..utils.errors import PlannerFailure, ValidationError
from .baselines import PlanSchedule

logger = structlog.get_logger(__name__)

_LINEARITY_TOL = 1e-8


@dataclass(frozen=True)
class PlannerSettings:
    """Segment count, penalty weights and solver limits of the shooting problem."""

    segments: int = 20
    w_dyn: float = 1e2
    w_goal: float = 1e2
    w_col: float = 1e2
    margin: float = 0.05
    max_nfev: int = 200
    dense_limit: int = 600

    def __post_init__(self):
        if self.segments < 1:
            raise ValidationError("planner.segments", "must be at least 1")
        for name in ("w_dyn", "w_goal", "w_col"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"planner.{name}", "must be positive")
        if self.margin < 0:
            raise ValidationError("planner.margin", "must be non-negative")
        if self.max_nfev < 1:
            raise ValidationError("planner.max_nfev", "must be at least 1")


@dataclass(frozen=True)
class GlobalPlan:
    """
    Dense plan on the control grid.

    positions/velocities have shape (ticks + 1, agents, dim) and inputs (ticks, agents, m).
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    inputs: np.ndarray
    cost: float
    min_h: float
    segments: int
    ticks_per_segment: int
    goal_error: float

    def trajectory(self, agent_index: int) -> SafeTargetTrajectory:
        return SafeTargetTrajectory(
            self.times,
            self.positions[:, agent_index],
            self.velocities[:, agent_index],
            self.inputs[:, agent_index],
        )

    def schedule(self) -> PlanSchedule:
        return PlanSchedule([self.trajectory(i) for i in range(self.positions.shape[1])])


def _rollout_segment(plant: Plant, x: np.ndarray, u: np.ndarray, dt: float, ticks: int, substeps: int, t0: float):
    n = x.size // 2
    p, v = x[:n], x[n:]
    for k in range(ticks):
        p, v = propagate(plant, p, v, u, t0 + k * dt, dt, substeps)
    return np.concatenate([p, v])


def linear_segment_map(
    plant: Plant, dt: float, ticks: int, substeps: int = 10, t0: float = 0.0
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Exact affine map x+ = Phi x + Gamma u + c of `ticks` control ticks under a held input.

    Columns come from rolling out basis states and inputs; a random check point confirms the map
    is affine.

    Raises:
        ValidationError: the plant's segment map is not affine
    """
    n, m = plant.dim, plant.dim_input
    nx = 2 * n
    c = _rollout_segment(plant, np.zeros(nx), np.zeros(m), dt, ticks, substeps, t0)
    Phi = np.column_stack(
        [_rollout_segment(plant, e, np.zeros(m), dt, ticks, substeps, t0) - c for e in np.eye(nx)]
    )
    Gamma = np.column_stack(
        [_rollout_segment(plant, np.zeros(nx), e, dt, ticks, substeps, t0) - c for e in np.eye(m)]
    )

    rng = np.random.default_rng(0)
    x_check, u_check = rng.standard_normal(nx), rng.standard_normal(m)
    exact = _rollout_segment(plant, x_check, u_check, dt, ticks, substeps, t0)
    predicted = Phi @ x_check + Gamma @ u_check + c
    if not np.all(np.isfinite(exact)) or np.linalg.norm(exact - predicted) > _LINEARITY_TOL * max(
        1.0, np.linalg.norm(exact)
    ):
        raise ValidationError("plant", f"planner needs an affine segment map; '{plant.name}' is nonlinear")
    return Phi, Gamma, c


def _segment_layout(n_ticks: int, segments: int) -> Tuple[int, int]:
    """Largest segment count <= `segments` that divides the tick count, and ticks per segment."""
    for K in range(min(segments, n_ticks), 0, -1):
        if n_ticks % K == 0:
            if K < segments // 2:
                logger.warning("planner_coarse_segments", ticks=n_ticks, requested=segments, used=K)
            return K, n_ticks // K
    return 1, n_ticks


class _ShootingProblem:
    """Residuals and sparse Jacobian of the penalized multiple-shooting least squares."""

    def __init__(
        self,
        Phi: np.ndarray,
        Gamma: np.ndarray,
        c: np.ndarray,
        x0: np.ndarray,
        goals: np.ndarray,
        obstacles: np.ndarray,
        cfg: SafetyConfig,
        settings: PlannerSettings,
        tau: float,
        K: int,
    ):
        self.Phi, self.Gamma, self.c = Phi, Gamma, c
        self.x0, self.goals, self.obstacles = x0, goals, obstacles
        self.cfg, self.settings, self.tau, self.K = cfg, settings, tau, K
        self.N, self.nx = x0.shape
        self.n = self.nx // 2
        self.m = Gamma.shape[1]
        self.block = K * (self.nx + self.m)
        self.n_vars = self.N * self.block
        self.radius = cfg.inflated_radius + settings.margin

        self.pairs: List[Tuple[int, int, int]] = [
            (i, j, -1) for i in range(self.N) for j in range(i + 1, self.N)
        ] + [(i, -1, o) for i in range(self.N) for o in range(len(obstacles))]
        self.n_linear_rows = self.N * K * self.m + self.N * K * self.nx + self.N * self.nx
        self.n_rows = self.n_linear_rows + K * len(self.pairs)
        self._linear_jacobian = self._build_linear_jacobian()

    def x_index(self, agent: int, node: int) -> int:
        """Offset of node state x_node (node = 1..K)."""
        return agent * self.block + (node - 1) * self.nx

    def u_index(self, agent: int, segment: int) -> int:
        return agent * self.block + self.K * self.nx + segment * self.m

    def unpack(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        blocks = z.reshape(self.N, self.block)
        X = blocks[:, : self.K * self.nx].reshape(self.N, self.K, self.nx)
        U = blocks[:, self.K * self.nx:].reshape(self.N, self.K, self.m)
        return X, U

    def pack(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        return np.concatenate([X.reshape(self.N, -1), U.reshape(self.N, -1)], axis=1).ravel()

    def _build_linear_jacobian(self) -> scipy.sparse.csr_matrix:
        rows, cols, data = [], [], []

        def put(row0: int, col0: int, matrix: np.ndarray):
            r, c = np.nonzero(matrix)
            rows.extend(row0 + r)
            cols.extend(col0 + c)
            data.extend(matrix[r, c])

        s = self.settings
        sqrt_tau = np.sqrt(self.tau)
        row = 0
        for i in range(self.N):
            for k in range(self.K):
                put(row, self.u_index(i, k), sqrt_tau * np.eye(self.m))
                row += self.m
        for i in range(self.N):
            for k in range(self.K):
                put(row, self.x_index(i, k + 1), s.w_dyn * np.eye(self.nx))
                if k >= 1:
                    put(row, self.x_index(i, k), -s.w_dyn * self.Phi)
                put(row, self.u_index(i, k), -s.w_dyn * self.Gamma)
                row += self.nx
        for i in range(self.N):
            put(row, self.x_index(i, self.K), s.w_goal * np.eye(self.nx))
            row += self.nx
        return scipy.sparse.csr_matrix((data, (rows, cols)), shape=(self.n_linear_rows, self.n_vars))

    def _separations(self, X: np.ndarray):
        """Per node and pair: offset d (p_j - p_i or obstacle - p_i), its Xi-norm and the hinge value."""
        positions = X[:, :, : self.n]
        offsets = np.empty((self.K, len(self.pairs), self.n))
        for q, (i, j, o) in enumerate(self.pairs):
            target = positions[j] if j >= 0 else np.broadcast_to(self.obstacles[o], (self.K, self.n))
            offsets[:, q] = target - positions[i]
        norms = np.sqrt(np.einsum("kqa,ab,kqb->kq", offsets, self.cfg.xi, offsets))
        hinge = np.maximum(0.0, self.radius - norms)
        return offsets, norms, hinge

    def residuals(self, z: np.ndarray) -> np.ndarray:
        s = self.settings
        X, U = self.unpack(z)
        previous = np.concatenate([self.x0[:, None, :], X[:, :-1]], axis=1)
        defects = X - previous @ self.Phi.T - U @ self.Gamma.T - self.c
        goal = X[:, -1] - self.goals
        parts = [np.sqrt(self.tau) * U.ravel(), s.w_dyn * defects.ravel(), s.w_goal * goal.ravel()]
        if self.pairs:
            parts.append(s.w_col * self._separations(X)[2].ravel())
        return np.concatenate(parts)

    def jacobian(self, z: np.ndarray):
        if not self.pairs:
            jac = self._linear_jacobian
        else:
            X, _ = self.unpack(z)
            offsets, norms, hinge = self._separations(X)
            rows, cols, data = [], [], []
            w = self.settings.w_col
            for k in range(self.K):
                for q, (i, j, _) in enumerate(self.pairs):
                    # Zero-norm offsets have no direction; their row stays empty.
                    if hinge[k, q] <= 0.0 or norms[k, q] <= 1e-12:
                        continue
                    direction = self.cfg.xi @ offsets[k, q] / norms[k, q]
                    row = self.n_linear_rows + k * len(self.pairs) + q
                    xi_col = self.x_index(i, k + 1)
                    rows.extend([row] * self.n)
                    cols.extend(range(xi_col, xi_col + self.n))
                    data.extend(w * direction)
                    if j >= 0:
                        xj_col = self.x_index(j, k + 1)
                        rows.extend([row] * self.n)
                        cols.extend(range(xj_col, xj_col + self.n))
                        data.extend(-w * direction)
            collision = scipy.sparse.csr_matrix(
                (data, (np.array(rows, dtype=int) - self.n_linear_rows, cols)),
                shape=(self.n_rows - self.n_linear_rows, self.n_vars),
            )
            jac = scipy.sparse.vstack([self._linear_jacobian, collision], format="csr")
        if self.n_vars <= self.settings.dense_limit:
            return jac.toarray()
        return jac


def _initial_guess(problem: _ShootingProblem, seed: int) -> np.ndarray:
    """Straight-line node guess bent sideways per agent so symmetric crossings separate."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    n, K = problem.n, problem.K
    fractions = np.arange(1, K + 1) / K
    X = np.zeros((problem.N, K, problem.nx))
    for i in range(problem.N):
        start, goal = problem.x0[i, :n], problem.goals[i, :n]
        bend = rng.standard_normal(n)
        bend *= problem.radius / max(np.linalg.norm(bend), 1e-12)
        path = start + np.outer(fractions, goal - start) + np.outer(np.sin(np.pi * fractions), bend)
        X[i, :, :n] = path
        X[i, :, n:] = np.diff(np.vstack([start, path]), axis=0) / problem.tau
    return problem.pack(X, np.zeros((problem.N, K, problem.m)))


def global_reference_policy(
    plant: Plant,
    initial_states: Sequence[AgentState],
    goals: Sequence[np.ndarray],
    obstacles: Sequence[np.ndarray],
    cfg: SafetyConfig,
    dt: float,
    horizon: float,
    substeps: int = 10,
    settings: PlannerSettings = PlannerSettings(),
    seed: int = 0,
) -> GlobalPlan:
    """
    Plan a collision-free, approximately minimum-energy transfer of every agent to its goal at rest.

    Args:
        plant: Plant with an affine segment map
        initial_states: Start state of every agent
        goals: Goal position of every agent
        obstacles: Static obstacle positions
        cfg: Safety configuration (the plan keeps the inflated radius plus `settings.margin`)
        dt: Control tick
        horizon: Plan duration
        substeps: Integration substeps per tick (must match the simulator)
        settings: Shooting settings
        seed: Seed of the initial-guess perturbation

    Returns:
        GlobalPlan

    Raises:
        ValidationError: the plant is not affine
        PlannerFailure: the rolled-out plan leaves the safe set
    """
    n_ticks = int(round(horizon / dt))
    if n_ticks < 1:
        raise ValidationError("horizon", "must cover at least one control tick")
    K, ticks_per_segment = _segment_layout(n_ticks, settings.segments)
    Phi, Gamma, c = linear_segment_map(plant, dt, ticks_per_segment, substeps)

    x0 = np.array([state.as_vector() for state in initial_states])
    goal_states = np.array([np.concatenate([g, np.zeros_like(g)]) for g in np.asarray(goals, dtype=float)])
    obstacle_array = np.asarray(obstacles, dtype=float).reshape(-1, plant.dim)
    problem = _ShootingProblem(
        Phi, Gamma, c, x0, goal_states, obstacle_array, cfg, settings, ticks_per_segment * dt, K
    )

    dense = problem.n_vars <= settings.dense_limit
    result = least_squares(
        problem.residuals,
        _initial_guess(problem, seed),
        jac=problem.jacobian,
        method="trf",
        tr_solver="exact" if dense else "lsmr",
        ftol=1e-12,
        xtol=1e-12,
        gtol=1e-10,
        max_nfev=settings.max_nfev,
    )
    logger.info(
        "planner_solved",
        agents=problem.N,
        segments=K,
        variables=problem.n_vars,
        cost=float(result.cost),
        nfev=int(result.nfev),
        status=int(result.status),
    )

    _, U = problem.unpack(result.x)
    times, positions, velocities, inputs, min_h, cost = _dense_rollout(
        plant, initial_states, U, obstacles, cfg, dt, n_ticks, ticks_per_segment, substeps
    )
    if min_h <= 0.0:
        logger.warning("planner_unsafe", min_h=min_h)
        raise PlannerFailure(min_h)

    goal_error = float(np.max(np.linalg.norm(positions[-1] - goal_states[:, : plant.dim], axis=1)))
    return GlobalPlan(
        times=times,
        positions=positions,
        velocities=velocities,
        inputs=inputs,
        cost=cost,
        min_h=min_h,
        segments=K,
        ticks_per_segment=ticks_per_segment,
        goal_error=goal_error,
    )


def _dense_rollout(plant, initial_states, U, obstacles, cfg, dt, n_ticks, ticks_per_segment, substeps):
    N = len(initial_states)
    times = np.arange(n_ticks + 1) * dt
    positions = np.zeros((n_ticks + 1, N, plant.dim))
    velocities = np.zeros_like(positions)
    inputs = np.zeros((n_ticks, N, plant.dim_input))
    positions[0] = [s.p for s in initial_states]
    velocities[0] = [s.v for s in initial_states]
    for tick in range(n_ticks):
        for i in range(N):
            u = U[i, tick // ticks_per_segment]
            inputs[tick, i] = u
            positions[tick + 1, i], velocities[tick + 1, i] = propagate(
                plant, positions[tick, i], velocities[tick, i], u, times[tick], dt, substeps
            )

    min_h = float("inf")
    for tick in range(n_ticks + 1):
        world = World(
            tuple(AgentState(positions[tick, i], velocities[tick, i]) for i in range(N)),
            tuple(obstacles),
            times[tick],
        )
        min_h = min(min_h, min_clearance(world, cfg, physical=False))
    cost = float(np.sum(inputs ** 2) * dt)
    return times, positions, velocities, inputs, min_h, cost
