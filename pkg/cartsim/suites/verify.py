"""
Property suites run by `cartsim verify <key>`.

Each check runs with fixed seeds and returns a VerifyReport holding its worst-case
residuals and whether every assertion held.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import structlog

from ..shared.filters.barrier import eval_barrier, safe_velocity, safe_velocity_time_derivative
from ..shared.filters.contraction import ContractionSample, evaluate_metric, verify_contraction_along_trajectory
from ..shared.filters.general_filter import lyapunov_general, lyapunov_rate_bound_general, safety_filter_general
from ..shared.filters.lagrangian_filter import (
    lyapunov_lagrangian,
    lyapunov_rate_bound_lagrangian,
    safety_filter_lagrangian,
)
from ..shared.filters.projection import halfspace_filter, qp_oracle_halfspace
from ..shared.filters.robust_filter import (
    PlantBounds,
    TargetPoint,
    composite_variable,
    error_envelope,
    robust_filter,
)
from ..shared.models.dynamics import (
    DisturbanceSpec,
    advance,
    double_integrator_plant,
    nonlinear_example_plant,
    propagate,
)
from ..shared.models.gains import FilterGains, RobustGains
from ..shared.models.world import AgentState, SafetyConfig, World, min_clearance, observe
from ..shared.policies.baselines import RegulationSchedule, learned_policy_emulated
from ..shared.policies.qp import kkt_residuals, solve_qp
from ..shared.utils.config import Config
from ..shared.utils.errors import RiccatiFailure, ValidationError
from ..sim.artifacts import build_provenance, write_envelope_csv

logger = structlog.get_logger(__name__)


@dataclass
class VerifyReport:
    """Outcome of one property suite."""

    key: str
    passed: bool
    residuals: Dict[str, float]
    failures: List[str] = field(default_factory=list)
    details: Dict[str, object] = field(default_factory=dict)

    def summary_line(self) -> str:
        values = " ".join(f"{k}={v:.3e}" for k, v in self.residuals.items())
        return f"{self.key}: {'PASS' if self.passed else 'FAIL'} {values}"


def _relative(a: np.ndarray, b: np.ndarray, floor: float = 1e-3) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))


def _random_world(
    rng: np.random.Generator,
    dim: int,
    n_agents: int,
    n_obstacles: int,
    cfg: SafetyConfig,
    box: float = 2.0,
    min_h: float = 0.05,
    boundary_gap: float = 1e-2,
    max_attempts: int = 10_000,
) -> World:
    """Random configuration with every clearance above `min_h` and no pair near the sensing boundary."""
    for _ in range(max_attempts):
        positions = rng.uniform(-box, box, size=(n_agents + n_obstacles, dim))
        distances = [
            np.linalg.norm(positions[i] - positions[j])
            for i in range(len(positions))
            for j in range(i + 1, len(positions))
        ]
        if any(abs(d - cfg.r_sen) < boundary_gap for d in distances):
            continue
        agents = [AgentState(p, rng.normal(scale=0.5, size=dim)) for p in positions[:n_agents]]
        world = World(agents, tuple(positions[n_agents:]), float(rng.uniform(0.0, 5.0)))
        if min_clearance(world, cfg, physical=False) >= min_h:
            return world
    raise ValidationError("verify", "could not sample a safe configuration")


# ---------------------------------------------------------------------------
# kkt
# ---------------------------------------------------------------------------


def check_kkt(instances: int = 10_000, seed: int = 0, tol: float = 1e-12, qp_tol: float = 1e-8) -> VerifyReport:
    """
    Closed-form filters against the halfspace-projection oracle, and active-set KKT residuals.

    Instances cycle through the raw projection, the Lagrangian filter, the general filter and
    the robust filter over dimensions 1 to 6.
    """
    rng = np.random.default_rng(seed)
    worst = {"projection": 0.0, "lagrangian": 0.0, "general": 0.0, "robust": 0.0}
    gains = FilterGains()
    robust_gains = RobustGains(lambda_r=1.5, k_r=2.0)
    general_plant = nonlinear_example_plant()
    skipped = 0

    for k in range(instances):
        dim = 1 + (k // 4) % 6
        kind = ("projection", "lagrangian", "general", "robust")[k % 4]
        if kind == "projection":
            e = rng.normal(size=dim)
            e *= rng.uniform(0.5, 2.0) / np.linalg.norm(e)
            u, u_bar = rng.normal(size=dim), rng.normal(size=dim)
            filtered, _, _ = halfspace_filter(u, u_bar, e)
            oracle = qp_oracle_halfspace(u, u_bar, e)
        elif kind == "lagrangian":
            cfg = SafetyConfig.isotropic(dim, 0.3, 0.1, 2.5)
            world = _random_world(rng, dim, 3, 1, cfg)
            plant = double_integrator_plant(dim)
            obs = observe(world, 0, cfg)
            u = rng.normal(scale=2.0, size=dim)
            out = safety_filter_lagrangian(u, plant, obs, None, cfg, gains)
            filtered, oracle = out.u, qp_oracle_halfspace(u, out.u_bar, out.e_v)
        elif kind == "general":
            cfg = SafetyConfig.isotropic(2, 0.3, 0.1, 2.5)
            world = _random_world(rng, 2, 3, 1, cfg, box=1.0)
            obs = observe(world, 0, cfg)
            u = rng.normal(scale=2.0, size=2)
            try:
                out = safety_filter_general(u, general_plant, obs, None, cfg, gains)
            except RiccatiFailure:
                skipped += 1
                continue
            filtered, oracle = out.u, qp_oracle_halfspace(u, out.u_bar, out.e_v)
        else:
            plant = double_integrator_plant(dim)
            target = TargetPoint(
                t=0.0,
                p=rng.normal(size=dim),
                v=rng.normal(size=dim),
                u=rng.normal(size=dim),
                a=rng.normal(size=dim),
            )
            state = AgentState(target.p + rng.normal(scale=0.3, size=dim), target.v + rng.normal(scale=0.3, size=dim))
            out = robust_filter(target.u, target, state, plant, robust_gains)
            filtered, oracle = out.u, qp_oracle_halfspace(target.u, out.u_bar, out.e_v)
        deviation = float(np.linalg.norm(filtered - oracle) / max(1.0, np.linalg.norm(oracle)))
        worst[kind] = max(worst[kind], deviation)

    qp_worst = 0.0
    for k in range(max(instances // 100, 10)):
        n = 1 + k % 6
        L = rng.normal(size=(n, n))
        H = L @ L.T + n * np.eye(n)
        g = rng.normal(size=n)
        A = rng.normal(size=(2 * n, n))
        x0 = rng.normal(size=n)
        b = A @ x0 + rng.uniform(0.0, 1.0, size=2 * n)
        solution = solve_qp(H, g, A, b)
        qp_worst = max(qp_worst, max(kkt_residuals(H, g, A, b, solution).values()))

    residuals = {f"{k}_max_deviation": v for k, v in worst.items()}
    residuals["qp_kkt_max"] = qp_worst
    failures = [f"{k} deviation {v:.3e} > {tol:.0e}" for k, v in worst.items() if v > tol]
    if qp_worst > qp_tol:
        failures.append(f"active-set KKT residual {qp_worst:.3e} > {qp_tol:.0e}")
    return VerifyReport("kkt", not failures, residuals, failures, {"instances": instances, "skipped": skipped})


# ---------------------------------------------------------------------------
# lyapunov
# ---------------------------------------------------------------------------


def _lagrangian_cushion(dt: float, duration: float, gains: FilterGains, cfg: SafetyConfig) -> float:
    """Worst positive excess of the finite-difference rate of V_s over its bound along the filtered loop."""
    plant = double_integrator_plant(2)
    world = World([AgentState([0.0, 0.0], [0.0, 0.0]), AgentState([2.0, 0.3], [0.0, 0.0])], (), 0.0)
    goals = RegulationSchedule([np.array([2.0, 0.3]), np.array([0.0, 0.0])])
    cushion = 0.0
    value = lyapunov_lagrangian(world, plant, cfg, gains)
    for tick in range(int(round(duration / dt))):
        bound = lyapunov_rate_bound_lagrangian(world, plant, cfg, gains)
        agents = []
        for i, agent in enumerate(world.agents):
            obs = observe(world, i, cfg)
            u_learned = learned_policy_emulated(obs, goals.at(i, world.time), plant, 0.0, 0, 4.0, 1.0)
            u = safety_filter_lagrangian(u_learned, plant, obs, None, cfg, gains).u
            agents.append(AgentState(*propagate(plant, agent.p, agent.v, u, world.time, dt, 1)))
        world = world.advance(agents, (tick + 1) * dt)
        next_value = lyapunov_lagrangian(world, plant, cfg, gains)
        cushion = max(cushion, (next_value - value) / dt - bound)
        value = next_value
    return cushion


def _general_cushion(dt: float, duration: float, gains: FilterGains, cfg: SafetyConfig) -> Tuple[float, float]:
    """
    Worst excess of the finite-difference rate of V_s over the full bound, and over the
    assumption-form bound without the Riccati remainder.

    Ticks whose metric has no previous evaluation carry M_dot = 0 and are not compared.
    """
    plant = nonlinear_example_plant()
    world = World([AgentState([0.0, 0.0], [0.0, 0.0]), AgentState([1.5, 0.2], [0.0, 0.0])], (), 0.0)
    goals = RegulationSchedule([np.array([1.5, 0.2]), np.array([0.0, 0.0])])
    history: Dict[int, tuple] = {}
    cushion = gap = float("-inf")
    previous = None
    for tick in range(int(round(duration / dt))):
        metrics, agents = [], []
        for i, agent in enumerate(world.agents):
            obs = observe(world, i, cfg)
            v_d = safe_velocity(obs, cfg, gains.k_p)
            metric = evaluate_metric(plant, agent.p, agent.v, v_d, world.time, gains, history.get(i))
            history[i] = (world.time, metric.M)
            metrics.append(metric)
            u_learned = learned_policy_emulated(obs, goals.at(i, world.time), plant, 0.0, 0)
            u = safety_filter_general(u_learned, plant, obs, None, cfg, gains, metric).u
            agents.append(AgentState(*propagate(plant, agent.p, agent.v, u, world.time, dt, 1)))
        value = lyapunov_general(world, plant, cfg, gains, [m.M for m in metrics], barrier_weight=gains.k_p)
        if previous is not None and previous[3]:
            rate = (value - previous[0]) / dt
            cushion = max(cushion, rate - previous[1])
            gap = max(gap, rate - previous[2])
        previous = (
            value,
            lyapunov_rate_bound_general(world, plant, cfg, gains, metrics),
            lyapunov_rate_bound_general(world, plant, cfg, gains, metrics, remainder=False),
            tick > 0,
        )
        world = world.advance(agents, (tick + 1) * dt)
    return cushion, gap


def check_lyapunov(dts=(4e-3, 2e-3, 1e-3), duration: float = 1.0) -> VerifyReport:
    """
    Decrease of V_s along the disturbance-free filtered loop.

    For both paths the cushion (finite-difference rate minus the bound) is an O(dt)
    discretization effect, so quartering dt must at least halve it. The general path is checked
    with V_s = psi + sum E at k_p = 1, where it equals the k_p psi + sum E form; the excess over
    the assumption-form bound is reported but not asserted.
    """
    gains = FilterGains(k_p=1.0, k_v=1.0)
    cfg = SafetyConfig.isotropic(2, 0.5, 0.1, 5.0)
    lagrangian = [_lagrangian_cushion(dt, duration, gains, cfg) for dt in dts]
    general, gaps = zip(*(_general_cushion(dt, duration, gains, cfg) for dt in dts))

    residuals = {f"lagrangian_cushion_dt{dt:g}": c for dt, c in zip(dts, lagrangian)}
    residuals.update({f"general_cushion_dt{dt:g}": c for dt, c in zip(dts, general)})
    residuals.update({f"general_assumption_gap_dt{dt:g}": g for dt, g in zip(dts, gaps)})
    failures = []
    for name, series in (("lagrangian", lagrangian), ("general", general)):
        limit = max(series[0], 0.0) * 0.5 + 1e-9
        if series[-1] > limit:
            failures.append(f"{name} cushion did not shrink with dt: {series[0]:.3e} -> {series[-1]:.3e}")
    logger.info(
        "lyapunov_general_forms",
        k_p=gains.k_p,
        barrier_weight_proof=1.0,
        barrier_weight_assumption=gains.k_p,
        assumption_gap=gaps[-1],
    )
    return VerifyReport("lyapunov", not failures, residuals, failures, {"dts": list(dts)})


# ---------------------------------------------------------------------------
# contraction
# ---------------------------------------------------------------------------


def contraction_trajectory(dt: float = 1e-3, duration: float = 2.0, gains: Optional[FilterGains] = None):
    """Disturbance-free filtered run of the nonlinear example, recording the metric used at every tick."""
    gains = gains or FilterGains()
    plant = nonlinear_example_plant()
    cfg = SafetyConfig.isotropic(2, 0.2, 0.05, 5.0)
    world = World([AgentState([0.0, 0.0], [0.0, 0.0])], (np.array([0.0, 4.0]),), 0.0)
    goals = RegulationSchedule([np.array([0.3, 0.0])])
    samples: List[ContractionSample] = []
    for tick in range(int(round(duration / dt))):
        agent = world.agents[0]
        obs = observe(world, 0, cfg)
        v_d = safe_velocity(obs, cfg, gains.k_p)
        metric = evaluate_metric(plant, agent.p, agent.v, v_d, world.time, gains)
        samples.append(ContractionSample(world.time, agent.p, agent.v, v_d, metric.M))
        u_learned = learned_policy_emulated(obs, goals.at(0, world.time), plant, 0.0, 0, 0.5, 1.5)
        u = safety_filter_general(u_learned, plant, obs, None, cfg, gains, metric).u
        world = world.advance([AgentState(*propagate(plant, agent.p, agent.v, u, world.time, dt, 10))], (tick + 1) * dt)
    return plant, samples


def check_contraction(tol: float = 1e-4, dt: float = 1e-3) -> VerifyReport:
    """
    Contraction inequality along a recorded closed-loop trajectory, plus a negative control:
    the same trajectory checked against a ten-fold k_v must show a positive residual.
    """
    gains = FilterGains()
    plant, samples = contraction_trajectory(dt, gains=gains)
    residual = verify_contraction_along_trajectory(samples, plant, gains)
    inflated = verify_contraction_along_trajectory(samples, plant, FilterGains(k_v=10.0 * gains.k_v))
    failures = []
    if residual > tol:
        failures.append(f"contraction residual {residual:.3e} > {tol:.0e}")
    if inflated <= 0.0:
        failures.append(f"inflated k_v not detected (residual {inflated:.3e})")
    return VerifyReport(
        "contraction",
        not failures,
        {"max_residual": residual, "inflated_kv_residual": inflated},
        failures,
        {"samples": len(samples)},
    )


# ---------------------------------------------------------------------------
# envelope
# ---------------------------------------------------------------------------


def _target(t: float) -> TargetPoint:
    p = 0.5 * np.array([np.sin(t), np.cos(t)])
    v = 0.5 * np.array([np.cos(t), -np.sin(t)])
    a = -p
    return TargetPoint(t=t, p=p, v=v, u=a, a=a)


def envelope_monte_carlo(
    paths: int = 500,
    horizon: float = 3.0,
    dt: float = 0.01,
    d_bar: float = 0.05,
    gamma_bar: float = 0.1,
    initial_offset: float = 0.3,
    seed: int = 0,
    gains: Optional[RobustGains] = None,
):
    """
    Robust-filter tracking of a circular target on the unit-mass plant under disturbance.

    Returns:
        (times, mean ||s||, mean ||p - p_d||, envelope)
    """
    gains = gains or RobustGains(lambda_r=1.0, k_r=1.0, epsilon_d=1.0)
    plant = double_integrator_plant(2)
    disturbance = DisturbanceSpec(d_bar=d_bar, gamma_bar=gamma_bar, d_profile="constant", seed=seed)
    gamma = disturbance.diffusion(2)
    lam = gains.lambda_matrix(2)
    n_ticks = int(round(horizon / dt))
    times = np.arange(n_ticks + 1) * dt

    s_norms = np.zeros((paths, n_ticks + 1))
    e_norms = np.zeros((paths, n_ticks + 1))
    offset = np.array([initial_offset, 0.0])
    for path in range(paths):
        rng = np.random.default_rng(np.random.SeedSequence([seed, path]))
        start = _target(0.0)
        state = AgentState(start.p + offset, start.v)
        for k in range(n_ticks + 1):
            target = _target(times[k])
            s_norms[path, k] = np.linalg.norm(composite_variable(state, target, lam))
            e_norms[path, k] = np.linalg.norm(state.p - target.p)
            if k == n_ticks:
                break
            u = robust_filter(target.u, target, state, plant, gains).u
            force = disturbance.force(2, times[k], path)
            noise = gamma @ rng.standard_normal(2) * np.sqrt(dt)
            state = AgentState(*advance(plant, state.p, state.v, u, times[k], dt, force=force, noise=noise))

    s0 = float(np.linalg.norm(lam @ offset))
    envelope = error_envelope(
        gains,
        PlantBounds(m_lower=1.0, m_upper=1.0),
        disturbance,
        s0,
        mean_initial_position_error=initial_offset,
        dim=2,
    )
    return times, s_norms, e_norms, envelope


def check_envelope(
    paths: int = 500, slack: float = 0.1, margin: float = 0.5, out_dir: Optional[Path] = None, seed: int = 0
) -> VerifyReport:
    """
    Monte-Carlo mean of ||s(t)|| against (1 + slack)(a + b e^{-k t}), and the empirical
    probability of leaving the margin against D_E(t) / D_s plus three standard errors.
    """
    times, s_norms, e_norms, envelope = envelope_monte_carlo(paths=paths, seed=seed)
    envelope = envelope.with_margin(margin)
    mean_s = s_norms.mean(axis=0)
    bound = np.array([envelope.mean_bound(t) for t in times])
    mean_e = e_norms.mean(axis=0)
    position_bound = np.array([envelope.expected_position_error(t) for t in times])

    ratio = float(np.max(mean_s / ((1.0 + slack) * bound)))
    exceed = (e_norms > margin).mean(axis=0)
    sigma = np.sqrt(exceed * (1.0 - exceed) / paths)
    markov = position_bound / margin
    probability_excess = float(np.max(exceed - (markov + 3.0 * sigma)))

    failures = []
    if ratio > 1.0:
        failures.append(f"mean ||s|| exceeds the envelope (worst ratio {ratio:.3f})")
    if probability_excess > 0.0:
        failures.append(f"margin exceedance above its bound by {probability_excess:.3e}")

    details: Dict[str, object] = {"a": envelope.a, "b": envelope.b, "k_r_bar": envelope.k_r_bar, "paths": paths}
    if out_dir is not None:
        provenance = build_provenance(None, seed, check="envelope", paths=paths, envelope=details)
        details["csv"] = str(
            write_envelope_csv(Path(out_dir) / "envelope.csv", times, mean_s, bound, provenance, mean_e, position_bound)
        )
    return VerifyReport(
        "envelope",
        not failures,
        {"max_mean_to_bound_ratio": ratio, "max_probability_excess": probability_excess},
        failures,
        details,
    )


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def _psi_i(world: World, i: int, cfg: SafetyConfig) -> float:
    return eval_barrier(observe(world, i, cfg), cfg).psi


def _moved(world: World, i: int, p: np.ndarray) -> World:
    agents = list(world.agents)
    agents[i] = AgentState(p, agents[i].v)
    return world.advance(agents, world.time)


def _drifted(world: World, delta: float) -> World:
    return world.advance([AgentState(a.p + delta * a.v, a.v) for a in world.agents], world.time + delta)


def check_gradients(
    configurations: int = 100, seed: int = 0, step: float = 1e-5, grad_tol: float = 1e-6, rate_tol: float = 1e-5
) -> VerifyReport:
    """Analytic grad psi and v_d_dot against central finite differences on random safe configurations."""
    rng = np.random.default_rng(seed)
    k_p = 1.3
    worst_grad, worst_rate = 0.0, 0.0
    for _ in range(configurations):
        dim = int(rng.integers(2, 4))
        cfg = SafetyConfig(r_s=0.3, delta_r_s=0.1, r_sen=2.5, xi=rng.uniform(0.5, 1.0, size=dim))
        world = _random_world(rng, dim, 4, 2, cfg, min_h=0.1)
        for i in range(world.n_agents):
            obs = observe(world, i, cfg)
            if obs.neighbor_count == 0:
                continue
            analytic = eval_barrier(obs, cfg).grad_p
            numeric = np.zeros(dim)
            for k in range(dim):
                e = np.zeros(dim)
                e[k] = step
                p = world.agents[i].p
                numeric[k] = (_psi_i(_moved(world, i, p + e), i, cfg) - _psi_i(_moved(world, i, p - e), i, cfg)) / (
                    2 * step
                )
            worst_grad = max(worst_grad, _relative(numeric, analytic))

            rate = safe_velocity_time_derivative(obs, None, cfg, k_p)
            ahead = safe_velocity(observe(_drifted(world, step), i, cfg), cfg, k_p)
            behind = safe_velocity(observe(_drifted(world, -step), i, cfg), cfg, k_p)
            worst_rate = max(worst_rate, _relative((ahead - behind) / (2 * step), rate))

    failures = []
    if worst_grad > grad_tol:
        failures.append(f"gradient relative error {worst_grad:.3e} > {grad_tol:.0e}")
    if worst_rate > rate_tol:
        failures.append(f"v_d_dot relative error {worst_rate:.3e} > {rate_tol:.0e}")
    return VerifyReport(
        "gradients",
        not failures,
        {"max_gradient_error": worst_grad, "max_rate_error": worst_rate},
        failures,
        {"configurations": configurations},
    )


VERIFY_CHECKS: Dict[str, Callable[..., VerifyReport]] = {
    "kkt": check_kkt,
    "lyapunov": check_lyapunov,
    "contraction": check_contraction,
    "envelope": check_envelope,
    "gradients": check_gradients,
}


def run_check(key: str, out_dir: Optional[Path] = None) -> VerifyReport:
    """Run one named property suite."""
    if key not in VERIFY_CHECKS:
        raise ValidationError("verify", f"unknown check '{key}'; expected one of {Config.VERIFY_KEYS}")
    log = logger.bind(check=key)
    log.info("verify_started")
    report = VERIFY_CHECKS[key](out_dir=out_dir) if key == "envelope" else VERIFY_CHECKS[key]()
    if report.passed:
        log.info("verify_passed", **report.residuals)
    else:
        log.warning("verify_failed", failures=report.failures, **report.residuals)
    return report
