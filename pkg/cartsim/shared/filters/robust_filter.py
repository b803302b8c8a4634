"""
CaRT robust tracking filter, its stochastic tracking-error envelope and the margin calculator.

The filter tracks a safe target trajectory (p_d, v_d, u_d) with the composite variable

    s = (v - v_d) + Lambda_r (p - p_d)

and the sliding-control reference input

    u_bar_r = M a_r + C v_r + G + D - k_r M s,   v_r = v_d - Lambda_r (p - p_d),
                                                 a_r = a_d - Lambda_r (v - v_d)

so that d/dt (s^T M s) = 2 (u - u_bar_r)^T s - 2 k_r s^T M s. The target input is projected
onto (u - u_bar_r)^T s <= 0.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import structlog

from ..models.dynamics import AffinePlant, DisturbanceSpec, LagrangianPlant, Plant
from ..models.gains import RobustGains
from ..models.world import AgentState
from ..utils.errors import GainTooSmall, TrajectoryDomainError, ValidationError
from .contraction import MetricEval
from .projection import SafetyFilterOutput, halfspace_filter

logger = structlog.get_logger(__name__)

_TIME_TOL = 1e-9


@dataclass(frozen=True)
class TargetPoint:
    """Safe target at one instant: position, velocity, input and acceleration."""

    t: float
    p: np.ndarray
    v: np.ndarray
    u: np.ndarray
    a: np.ndarray


class SafeTargetTrajectory:
    """
    Safe target trajectory on a dense time grid.

    Positions and velocities are linearly interpolated, the input is held, and the
    acceleration is the slope of the velocity on the containing segment.
    """

    def __init__(self, times: np.ndarray, p_d: np.ndarray, v_d: np.ndarray, u_d: np.ndarray):
        self.times = np.asarray(times, dtype=float)
        self.p_d = np.asarray(p_d, dtype=float)
        self.v_d = np.asarray(v_d, dtype=float)
        self.u_d = np.asarray(u_d, dtype=float)
        if self.times.ndim != 1 or self.times.size < 2:
            raise ValidationError("target.times", "need at least two samples")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("target.times", "must be strictly increasing")
        if not (len(self.p_d) == len(self.v_d) == len(self.times)):
            raise ValidationError("target", "p_d and v_d must align with times")
        if len(self.u_d) not in (len(self.times), len(self.times) - 1):
            raise ValidationError("target.u_d", "must have one entry per sample or per segment")

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def covers(self, t: float) -> bool:
        return self.start - _TIME_TOL <= t <= self.end + _TIME_TOL

    def at(self, t: float) -> TargetPoint:
        """Target point at time t; raises TrajectoryDomainError outside the stored span."""
        if not self.covers(t):
            raise TrajectoryDomainError(t, self.start, self.end)
        # Queries within _TIME_TOL below a sample snap onto the segment starting there.
        k = int(np.searchsorted(self.times, t + _TIME_TOL, side="right") - 1)
        k = min(max(k, 0), len(self.times) - 2)
        t0, t1 = self.times[k], self.times[k + 1]
        w = min(max((t - t0) / (t1 - t0), 0.0), 1.0)
        p = (1 - w) * self.p_d[k] + w * self.p_d[k + 1]
        v = (1 - w) * self.v_d[k] + w * self.v_d[k + 1]
        a = (self.v_d[k + 1] - self.v_d[k]) / (t1 - t0)
        u = self.u_d[min(k, len(self.u_d) - 1)]
        return TargetPoint(t=float(t), p=p, v=v, u=u.copy(), a=a)


def composite_variable(state: AgentState, target: TargetPoint, lambda_r: np.ndarray) -> np.ndarray:
    """s = (v - v_d) + Lambda_r (p - p_d)."""
    return (state.v - target.v) + lambda_r @ (state.p - target.p)


def robust_filter(
    u_target: np.ndarray,
    target: TargetPoint,
    state: AgentState,
    plant: LagrangianPlant,
    gains: RobustGains,
) -> SafetyFilterOutput:
    """
    Robust filter for Lagrangian plants.

    Args:
        u_target: Safe target input u_d(t)
        target: Safe target point at the current time
        state: True agent state
        plant: Lagrangian plant
        gains: Robust-layer gains

    Returns:
        SafetyFilterOutput whose `e_v` field holds the composite variable s
    """
    p, v = state.p, state.v
    lam = gains.lambda_matrix(plant.dim)
    s = composite_variable(state, target, lam)
    v_r = target.v - lam @ (p - target.p)
    a_r = target.a - lam @ (v - target.v)
    M = plant.mass_matrix(p)
    u_bar = M @ a_r + plant.coriolis(p, v) @ v_r + plant.gravity(p) + plant.damping(p, v) - gains.k_r * M @ s
    u, constraint_value, active = halfspace_filter(np.asarray(u_target, dtype=float), u_bar, s)
    return SafetyFilterOutput(u=u, constraint_value=constraint_value, active=active, e_v=s, u_bar=u_bar)


def robust_filter_general(
    u_target: np.ndarray,
    target: TargetPoint,
    state: AgentState,
    plant: AffinePlant,
    gains: RobustGains,
    metric: MetricEval,
) -> SafetyFilterOutput:
    """
    Robust filter for control-affine plants.

    With e_s = B^T M s, u_bar_r = e_s (s^T M (a_r - f(p, v, t)) - k_r s^T M s) / ||e_s||^2
    (0 when e_s = 0) and the target input is projected against e_s.

    Returns:
        SafetyFilterOutput whose `e_v` field holds e_s
    """
    p, v, t = state.p, state.v, target.t
    lam = gains.lambda_matrix(plant.dim)
    s = composite_variable(state, target, lam)
    a_r = target.a - lam @ (v - target.v)
    M = metric.M
    B = plant.actuation(p, v, t)
    e_s = B.T @ M @ s
    norm2 = float(e_s @ e_s)
    if norm2 != 0.0:
        u_bar = e_s * ((s @ M @ (a_r - plant.drift(p, v, t)) - gains.k_r * s @ M @ s) / norm2)
    else:
        u_bar = np.zeros(B.shape[1])
    u, constraint_value, active = halfspace_filter(np.asarray(u_target, dtype=float), u_bar, e_s)
    return SafetyFilterOutput(u=u, constraint_value=constraint_value, active=active, e_v=e_s, u_bar=u_bar)


# ---------------------------------------------------------------------------
# Tracking-error envelope
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlantBounds:
    """Uniform bounds on the plant: m_lower I <= M <= m_upper I, ||M^-1 Gamma||_F^2 <= d_s_bar, ..."""

    m_lower: float
    m_upper: float
    d_s_bar: Optional[float] = None
    m_x_bar: float = 0.0
    m_x2_bar: float = 0.0

    def __post_init__(self):
        if not (0 < self.m_lower <= self.m_upper) or not np.isfinite(self.m_upper):
            raise ValidationError("plant_bounds", "need 0 < m_lower <= m_upper < inf")
        if self.m_x_bar < 0 or self.m_x2_bar < 0:
            raise ValidationError("plant_bounds", "derivative bounds must be non-negative")
        if self.d_s_bar is not None and self.d_s_bar < 0:
            raise ValidationError("plant_bounds.d_s_bar", "must be non-negative")


@dataclass(frozen=True)
class ErrorEnvelope:
    """
    Bounds E||s(t)|| <= a + b exp(-k_r_bar t) and E||p - p_d|| <= D_E(t).

    `D_s` is the chosen margin; `probability_floor(t)` is the resulting lower bound on
    P[||p - p_d|| <= D_s].
    """

    a: float
    b: float
    k_r_bar: float
    C_d: float
    lambda_min: float
    mean_initial_position_error: float = 0.0
    D_s: float = 0.0

    def mean_bound(self, t: float) -> float:
        return self.a + self.b * np.exp(-self.k_r_bar * t)

    def expected_position_error(self, t: float) -> float:
        """D_E(t) = E||p(0) - p_d(0)|| e^{-lt} + a (1 - e^{-lt}) / l + b (e^{-kt} - e^{-lt}) / (l - k)."""
        lam, k = self.lambda_min, self.k_r_bar
        decay = np.exp(-lam * t)
        value = self.mean_initial_position_error * decay + self.a * (1.0 - decay) / lam
        if abs(lam - k) < 1e-12:
            value += self.b * t * decay
        else:
            value += self.b * (np.exp(-k * t) - decay) / (lam - k)
        return float(value)

    def probability_floor(self, t: float) -> float:
        expected = self.expected_position_error(t)
        if self.D_s <= 0.0:
            return 1.0 if expected == 0.0 else 0.0
        return max(0.0, 1.0 - expected / self.D_s)

    def with_margin(self, D_s: float) -> "ErrorEnvelope":
        return ErrorEnvelope(
            a=self.a,
            b=self.b,
            k_r_bar=self.k_r_bar,
            C_d=self.C_d,
            lambda_min=self.lambda_min,
            mean_initial_position_error=self.mean_initial_position_error,
            D_s=D_s,
        )


def error_envelope(
    gains: RobustGains,
    plant_bounds: PlantBounds,
    disturbance: DisturbanceSpec,
    initial_error: float,
    mean_initial_position_error: float = 0.0,
    dim: int = 1,
    margin: float = 0.0,
) -> ErrorEnvelope:
    """
    Tracking-error envelope of the robust filter under bounded and stochastic disturbance.

    Args:
        gains: Robust-layer gains (k_r, epsilon_d, Lambda_r)
        plant_bounds: Plant constants; d_s_bar defaults to (gamma_bar / m_lower)^2
        disturbance: Disturbance bounds d_bar and gamma_bar
        initial_error: ||s(0)||, giving E V_r(0) = m_upper ||s(0)||^2
        mean_initial_position_error: E||p(0) - p_d(0)||, a first moment; D_E(t) bounds
            E||p - p_d|| and starts from this value, not from its square
        dim: Position dimension (to expand a scalar Lambda_r)
        margin: Chosen margin D_s

    Returns:
        ErrorEnvelope

    Raises:
        GainTooSmall: k_r does not dominate the disturbance terms
    """
    m_lo, m_hi = plant_bounds.m_lower, plant_bounds.m_upper
    d_s = plant_bounds.d_s_bar
    if d_s is None:
        d_s = (disturbance.gamma_bar / m_lo) ** 2
    eps = gains.epsilon_d
    d_bar = disturbance.d_bar

    two_k_bar = gains.k_r - ((d_bar + d_s * plant_bounds.m_x_bar) / eps + 0.5 * d_s * plant_bounds.m_x2_bar) / m_lo
    if two_k_bar <= 0:
        raise GainTooSmall(
            f"k_r = {gains.k_r} leaves no positive contraction rate (2 k_r_bar = {two_k_bar:.3e})"
        )
    k_bar = 0.5 * two_k_bar
    C_d = (d_s * m_hi + eps * (d_bar + d_s * plant_bounds.m_x_bar)) / m_lo
    steady = C_d / two_k_bar
    a = float(np.sqrt(steady))
    b = float(np.sqrt(max(m_hi * initial_error ** 2 - steady, 0.0)))

    envelope = ErrorEnvelope(
        a=a,
        b=b,
        k_r_bar=k_bar,
        C_d=C_d,
        lambda_min=gains.lambda_min(dim),
        mean_initial_position_error=mean_initial_position_error,
        D_s=margin,
    )
    logger.debug("error_envelope", a=a, b=b, k_r_bar=k_bar, C_d=C_d)
    return envelope


def margin_from_envelope(envelope: ErrorEnvelope, target_probability: float, horizon: float, samples: int = 2001) -> float:
    """
    Smallest margin D_s with [1 - sup_{t <= horizon} D_E(t) / D_s]^+ >= target_probability.

    Args:
        envelope: Tracking-error envelope
        target_probability: Required probability in (0, 1)
        horizon: Time span the guarantee must hold over
        samples: Grid resolution for the supremum

    Returns:
        D_s
    """
    if not 0 < target_probability < 1:
        raise ValidationError("target_probability", "must lie strictly between 0 and 1")
    grid = np.linspace(0.0, max(horizon, 0.0), samples)
    sup_expected = max(envelope.expected_position_error(t) for t in grid)
    return float(sup_expected / (1.0 - target_probability))


def estimate_plant_bounds(
    plant: Plant,
    low: np.ndarray,
    high: np.ndarray,
    samples: int = 10_000,
    safety_factor: float = 1.2,
    seed: int = 0,
) -> PlantBounds:
    """
    Estimate m_lower, m_upper, m_x_bar and m_x2_bar over a state box.

    Constant-mass plants (and control-affine plants, whose metric here is the identity
    disturbance gain) return exact values without sampling.

    Args:
        plant: Plant model
        low: Lower corner of the position box
        high: Upper corner of the position box
        samples: Number of sampled positions
        safety_factor: Inflation of upper bounds (and deflation of m_lower)
        seed: Sampling seed

    Returns:
        PlantBounds with d_s_bar left to the disturbance default
    """
    if not isinstance(plant, LagrangianPlant):
        return PlantBounds(m_lower=1.0, m_upper=1.0)
    if plant.constant_mass:
        eigenvalues = np.linalg.eigvalsh(plant.mass_matrix(np.zeros(plant.dim)))
        return PlantBounds(m_lower=float(eigenvalues.min()), m_upper=float(eigenvalues.max()))

    rng = np.random.default_rng(seed)
    h = 1e-4
    m_lo, m_hi, m_x, m_x2 = np.inf, 0.0, 0.0, 0.0
    basis = np.eye(plant.dim)
    for _ in range(samples):
        p = rng.uniform(low, high)
        M = plant.mass_matrix(p)
        eigenvalues = np.linalg.eigvalsh(M)
        m_lo, m_hi = min(m_lo, eigenvalues.min()), max(m_hi, eigenvalues.max())
        for k in range(plant.dim):
            dM = (plant.mass_matrix(p + h * basis[k]) - plant.mass_matrix(p - h * basis[k])) / (2 * h)
            m_x = max(m_x, np.linalg.norm(dM, 2))
            for l in range(plant.dim):
                d2M = (
                    plant.mass_matrix(p + h * basis[k] + h * basis[l])
                    - plant.mass_matrix(p + h * basis[k] - h * basis[l])
                    - plant.mass_matrix(p - h * basis[k] + h * basis[l])
                    + plant.mass_matrix(p - h * basis[k] - h * basis[l])
                ) / (4 * h * h)
                m_x2 = max(m_x2, np.linalg.norm(d2M, 2))
    return PlantBounds(
        m_lower=float(m_lo / safety_factor),
        m_upper=float(m_hi * safety_factor),
        m_x_bar=float(m_x * safety_factor),
        m_x2_bar=float(m_x2 * safety_factor),
    )
