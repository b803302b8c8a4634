"""
Closed-loop run of one scenario.

Every tick all agents observe the same snapshot, each computes its input according to the
policy kind, and the world advances atomically under the disturbance:

    learned_emulated   the emulated learned input
    global_reference   the planned input (tracking feedback on the plan, no learning error)
    cart_safety_only   the learned input through the safety filter, on the live state
    cart_full          the robust filter tracking a safe target trajectory, which is a
                       disturbance-free rollout of the safety-filtered learned policy
                       recomputed every `replan_period` ticks
    clf_cbf_qp         the CLF-CBF QP around the learned input

Safety-critical failures (barrier undefined, QP infeasible, no Riccati solution) are
recorded as events and the run continues with the fallback input.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import structlog

from ..shared.filters.barrier import eval_barrier
from ..shared.filters.contraction import MetricEval, evaluate_metric
from ..shared.filters.general_filter import safety_filter_general
from ..shared.filters.lagrangian_filter import safety_filter_lagrangian
from ..shared.filters.projection import SafetyFilterOutput
from ..shared.filters.robust_filter import SafeTargetTrajectory, robust_filter, robust_filter_general
from ..shared.models.dynamics import DisturbanceSpec, LagrangianPlant, Plant
from ..shared.models.world import Observation, World, min_clearance, observe
from ..shared.policies.baselines import (
    RegulationSchedule,
    clf_cbf_qp_policy,
    learned_policy_emulated,
)
from ..shared.policies.planner import global_reference_policy
from ..shared.utils.errors import (
    NonFiniteState,
    NotSafe,
    PlannerFailure,
    QPInfeasible,
    RiccatiFailure,
    ValidationError,
)
from .scenario import ScenarioSpec
from .stepper import NoiseStreams, step

logger = structlog.get_logger(__name__)

_NO_DISTURBANCE = DisturbanceSpec()


@dataclass(frozen=True)
class SimEvent:
    """Safety-critical occurrence during a run."""

    tick: int
    agent: int
    kind: str
    detail: str = ""


@dataclass(frozen=True)
class RunResult:
    """
    Trajectories and metrics of one run.

    positions/velocities: (ticks + 1, agents, dim); inputs: (ticks, agents, m).
    min_h_series is the physical clearance (collision when negative), margin_h_series the
    clearance against the inflated radius. tracking_error_series is the mean distance of
    the agents to what they track (safe target for cart_full, reference otherwise).
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    inputs: np.ndarray
    min_h_series: np.ndarray
    margin_h_series: np.ndarray
    tracking_error_series: np.ndarray
    collided: bool
    success: bool
    control_effort: float
    rng_seed: int
    run_index: int
    policy_kind: str
    events: Tuple[SimEvent, ...] = ()
    contraction_residual_max: Optional[float] = None
    reference_cost: Optional[float] = None
    final_goal_error: float = float("nan")
    aborted: bool = False

    @property
    def min_h(self) -> float:
        return float(np.min(self.min_h_series))

    @property
    def mean_margin(self) -> float:
        """Time average of the physical clearance."""
        return float(np.mean(self.min_h_series))

    def event_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for event in self.events:
            counts[event.kind] = counts.get(event.kind, 0) + 1
        return counts


def build_schedule(spec: ScenarioSpec, plant: Plant, events: List[SimEvent]):
    """
    Reference schedule of a realized scenario and, when one was computed, the global plan.

    `reference: auto` plans whenever the plant has an affine segment map and falls back to
    regulation otherwise (or when the planner fails, recorded as an event).
    """
    policy = spec.policy
    if policy.reference == "regulation" and policy.kind != "global_reference":
        return RegulationSchedule(spec.goals), None
    strict = policy.reference == "plan" or policy.kind == "global_reference"
    try:
        plan = global_reference_policy(
            plant,
            spec.initial_states,
            spec.goals,
            spec.obstacles,
            spec.safety,
            spec.dt,
            spec.horizon,
            spec.substeps,
            spec.planner,
            seed=spec.seed + spec.run_index,
        )
    except ValidationError:
        if strict:
            raise
        return RegulationSchedule(spec.goals), None
    except PlannerFailure as e:
        if strict:
            raise
        logger.warning("planner_fallback", error=str(e), run=spec.run_index)
        events.append(SimEvent(0, -1, "planner_failure", str(e)))
        return RegulationSchedule(spec.goals), None
    return plan.schedule(), plan


class _Controller:
    """Per-run controller state: reference schedule, safe targets and metric history."""

    def __init__(self, spec: ScenarioSpec, plant: Plant, schedule, events: List[SimEvent]):
        self.spec = spec
        self.plant = plant
        self.schedule = schedule
        self.events = events
        self.lagrangian = isinstance(plant, LagrangianPlant)
        self.lambda_r = spec.robust.lambda_matrix(plant.dim)
        self.perturbation_seed = spec.seed + spec.run_index
        self.targets: List[Optional[SafeTargetTrajectory]] = [None] * spec.n_agents
        self.previous_metric: Dict[int, Tuple[float, np.ndarray]] = {}
        self.contraction_residual_max: Optional[float] = None
        self._logged = set()

    def record(self, tick: int, agent: int, kind: str, detail: str = "") -> None:
        self.events.append(SimEvent(tick, agent, kind, detail))
        if (agent, kind) not in self._logged:
            self._logged.add((agent, kind))
            logger.warning("safety_event", tick=tick, agent=agent, kind=kind, detail=detail)

    def learned_input(self, obs: Observation) -> np.ndarray:
        policy = self.spec.policy
        reference = self.schedule.at(obs.agent_index, obs.time)
        return learned_policy_emulated(
            obs,
            reference,
            self.plant,
            policy.effective_error,
            self.perturbation_seed,
            policy.tracking_kp,
            policy.tracking_kd,
        )

    def safety_filter(
        self,
        u_learned: np.ndarray,
        obs: Observation,
        history: Optional[Dict[int, Tuple[float, np.ndarray]]] = None,
    ) -> SafetyFilterOutput:
        """Safety filter on one observation; raises NotSafe / RiccatiFailure."""
        spec = self.spec
        if self.lagrangian:
            return safety_filter_lagrangian(u_learned, self.plant, obs, None, spec.safety, spec.gains)
        state, t = obs.self_state, obs.time
        v_d = -spec.gains.k_p * eval_barrier(obs, spec.safety).grad_p
        previous = None if history is None else history.get(obs.agent_index)
        metric = evaluate_metric(self.plant, state.p, state.v, v_d, t, spec.gains, previous)
        if history is not None:
            history[obs.agent_index] = (t, metric.M)
        if history is self.previous_metric:
            self._track_residual(metric)
        return safety_filter_general(u_learned, self.plant, obs, None, spec.safety, spec.gains, metric)

    def _track_residual(self, metric: MetricEval) -> None:
        residual = metric.contraction_residual
        if self.contraction_residual_max is None or residual > self.contraction_residual_max:
            self.contraction_residual_max = residual

    def rollout_targets(self, world: World, tick: int) -> Optional[List[SafeTargetTrajectory]]:
        """
        Disturbance-free joint rollout of the safety-filtered learned policy from the live world.

        Returns None when the filter is undefined at the start; a rollout that fails later is
        truncated at the last good sample.
        """
        spec = self.spec
        length = spec.replan_period + 1
        history: Dict[int, Tuple[float, np.ndarray]] = {}
        snapshots = [world]
        applied: List[List[np.ndarray]] = []
        streams = NoiseStreams(spec.seed, spec.run_index)
        current = world
        for k in range(length):
            try:
                inputs = [
                    self.safety_filter(self.learned_input(obs), obs, history).u
                    for obs in (observe(current, i, spec.safety) for i in range(current.n_agents))
                ]
                current = step(current, inputs, self.plant, _NO_DISTURBANCE, spec.dt, streams, tick + k, spec.substeps)
            except (NotSafe, RiccatiFailure, NonFiniteState) as e:
                if k == 0:
                    logger.debug("rollout_rejected", tick=tick, error=str(e))
                    return None
                logger.debug("rollout_truncated", tick=tick, samples=k, error=str(e))
                break
            applied.append(inputs)
            snapshots.append(current)

        times = np.arange(tick, tick + len(snapshots)) * spec.dt
        targets = []
        for i in range(world.n_agents):
            targets.append(
                SafeTargetTrajectory(
                    times,
                    np.array([w.agents[i].p for w in snapshots]),
                    np.array([w.agents[i].v for w in snapshots]),
                    np.array([tick_inputs[i] for tick_inputs in applied]),
                )
            )
        return targets

    def inputs(self, world: World, tick: int) -> Tuple[List[np.ndarray], float]:
        """Inputs of every agent at this tick and the mean tracking error."""
        spec = self.spec
        kind = spec.policy.kind
        t = world.time

        if kind == "cart_full" and (
            tick % spec.replan_period == 0 or not all(tr is not None and tr.covers(t) for tr in self.targets)
        ):
            targets = self.rollout_targets(world, tick)
            if targets is not None:
                self.targets = targets

        inputs, errors = [], []
        for i in range(world.n_agents):
            obs = observe(world, i, spec.safety)
            u_learned = self.learned_input(obs)
            reference = self.schedule.at(i, t)
            tracked = reference.p

            if kind in ("learned_emulated", "global_reference"):
                u = u_learned
            elif kind == "cart_safety_only":
                try:
                    u = self.safety_filter(u_learned, obs, self.previous_metric).u
                except NotSafe as e:
                    self.record(tick, i, "not_safe", str(e))
                    u = u_learned
                except RiccatiFailure as e:
                    self.record(tick, i, "riccati_failure", str(e))
                    u = u_learned
            elif kind == "clf_cbf_qp":
                try:
                    u = clf_cbf_qp_policy(
                        obs, self.plant, u_learned, reference, spec.safety, spec.policy.qp, self.lambda_r
                    ).u
                except QPInfeasible as e:
                    self.record(tick, i, "qp_infeasible", str(e))
                    limit = spec.policy.qp.input_box_limit
                    u = np.clip(u_learned, -limit, limit)
            else:
                u, tracked = self._robust_input(tick, i, obs, u_learned, tracked)

            inputs.append(np.asarray(u, dtype=float))
            errors.append(float(np.linalg.norm(obs.self_state.p - tracked)))
        return inputs, float(np.mean(errors))

    def _robust_input(self, tick: int, i: int, obs: Observation, u_learned: np.ndarray, tracked: np.ndarray):
        target = self.targets[i]
        t = obs.time
        if target is None or not target.covers(t):
            self.record(tick, i, "margin_violation", "no safe target covers the current time")
            return u_learned, tracked
        point = target.at(t)
        state = obs.self_state
        if self.lagrangian:
            return robust_filter(point.u, point, state, self.plant, self.spec.robust).u, point.p
        try:
            metric = evaluate_metric(self.plant, state.p, state.v, point.v, t, self.spec.gains)
        except RiccatiFailure as e:
            self.record(tick, i, "riccati_failure", str(e))
            return point.u, point.p
        return robust_filter_general(point.u, point, state, self.plant, self.spec.robust, metric).u, point.p


def run_scenario(spec: ScenarioSpec, run_index: int = 0) -> RunResult:
    """
    Simulate one run of a scenario.

    Args:
        spec: Validated scenario
        run_index: Monte-Carlo run index (selects the randomized configuration and noise streams)

    Returns:
        RunResult

    Raises:
        PlannerFailure: the global reference policy could not produce a safe plan
    """
    spec = spec.realize(run_index)
    plant = spec.plant()
    events: List[SimEvent] = []
    schedule, plan = build_schedule(spec, plant, events)
    controller = _Controller(spec, plant, schedule, events)
    streams = NoiseStreams(spec.seed, run_index)

    n_ticks = spec.n_ticks
    N, n, m = spec.n_agents, plant.dim, plant.dim_input
    positions = np.full((n_ticks + 1, N, n), np.nan)
    velocities = np.full((n_ticks + 1, N, n), np.nan)
    inputs = np.zeros((n_ticks, N, m))
    min_h = np.full(n_ticks + 1, np.nan)
    margin_h = np.full(n_ticks + 1, np.nan)
    tracking = np.zeros(n_ticks)

    world = spec.world()
    aborted = False
    last_tick = n_ticks

    log = logger.bind(scenario=spec.name, run=run_index, policy=spec.policy.kind)
    log.debug("run_started", agents=N, ticks=n_ticks)

    def record_state(tick: int, snapshot: World) -> None:
        positions[tick] = snapshot.positions()
        velocities[tick] = snapshot.velocities()
        min_h[tick] = min_clearance(snapshot, spec.safety, physical=True)
        margin_h[tick] = min_clearance(snapshot, spec.safety, physical=False)

    record_state(0, world)
    for tick in range(n_ticks):
        u, tracking[tick] = controller.inputs(world, tick)
        inputs[tick] = u
        try:
            world = step(world, u, plant, spec.disturbance, spec.dt, streams, tick, spec.substeps)
        except NonFiniteState as e:
            controller.record(tick, e.agent_index, "non_finite_state", str(e))
            aborted = True
            last_tick = tick
            break
        record_state(tick + 1, world)

    if aborted:
        # Keep the prefix that was actually simulated.
        positions = positions[: last_tick + 1]
        velocities = velocities[: last_tick + 1]
        inputs = inputs[: last_tick + 1]
        min_h = min_h[: last_tick + 1]
        margin_h = margin_h[: last_tick + 1]
        tracking = tracking[: last_tick + 1]

    control_effort = float(np.sum(inputs ** 2) * spec.dt)
    collided = bool(np.nanmin(min_h) < 0.0)
    goal_error = float(np.max(np.linalg.norm(positions[-1] - np.array(spec.goals), axis=1)))
    success = not collided and not aborted and goal_error <= spec.goal_tolerance

    result = RunResult(
        times=np.arange(positions.shape[0]) * spec.dt,
        positions=positions,
        velocities=velocities,
        inputs=inputs,
        min_h_series=min_h,
        margin_h_series=margin_h,
        tracking_error_series=tracking,
        collided=collided,
        success=success,
        control_effort=control_effort,
        rng_seed=spec.seed + run_index,
        run_index=run_index,
        policy_kind=spec.policy.kind,
        events=tuple(events),
        contraction_residual_max=controller.contraction_residual_max,
        reference_cost=None if plan is None else plan.cost,
        final_goal_error=goal_error,
        aborted=aborted,
    )
    log.info(
        "run_finished",
        success=success,
        collided=collided,
        J=round(control_effort, 6),
        min_h=round(result.min_h, 6),
        events=result.event_counts(),
    )
    return result
