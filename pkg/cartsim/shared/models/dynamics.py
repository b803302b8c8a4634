"""
Plant models: Lagrangian systems (M, C, G, D) and general control-affine systems (f, B),
the registered experiment plants, disturbance profiles and the shared integrators.

Lagrangian form:

    M(p) dv + (C(p, v) v + G(p) + D(p, v)) dt = (u + d) dt + Gamma dW

Control-affine form:

    dv = (f(p, v, t) + B(p, v, t) u) dt + d dt + Gamma dW

with dp = v dt in both cases.
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np
import structlog

from ..utils.errors import ValidationError

logger = structlog.get_logger(__name__)

Vector = np.ndarray
Matrix = np.ndarray

_FD_STEP = 1e-6
_QUADRATURE_ORDER = 8


class LagrangianPlant:
    """Mechanical system with SPD mass matrix and skew-symmetric M_dot - 2C."""

    def __init__(
        self,
        dim: int,
        mass_matrix: Callable[[Vector], Matrix],
        coriolis: Callable[[Vector, Vector], Matrix],
        gravity: Callable[[Vector], Vector],
        damping: Optional[Callable[[Vector, Vector], Vector]] = None,
        name: str = "lagrangian",
        constant_mass: bool = False,
    ):
        self.dim = dim
        self._mass_matrix = mass_matrix
        self._coriolis = coriolis
        self._gravity = gravity
        self._damping = damping
        self.name = name
        self.constant_mass = constant_mass

    @property
    def dim_input(self) -> int:
        return self.dim

    def mass_matrix(self, p: Vector) -> Matrix:
        return self._mass_matrix(p)

    def coriolis(self, p: Vector, v: Vector) -> Matrix:
        return self._coriolis(p, v)

    def gravity(self, p: Vector) -> Vector:
        return self._gravity(p)

    def damping(self, p: Vector, v: Vector) -> Vector:
        if self._damping is None:
            return np.zeros(self.dim)
        return self._damping(p, v)

    def mass_matrix_dot(self, p: Vector, v: Vector) -> Matrix:
        """Total time derivative of M along the motion (directional derivative along v)."""
        if self.constant_mass:
            return np.zeros((self.dim, self.dim))
        return (self.mass_matrix(p + _FD_STEP * v) - self.mass_matrix(p - _FD_STEP * v)) / (2 * _FD_STEP)

    def bias(self, p: Vector, v: Vector) -> Vector:
        """C(p, v) v + G(p) + D(p, v)."""
        return self.coriolis(p, v) @ v + self.gravity(p) + self.damping(p, v)

    def acceleration(self, p: Vector, v: Vector, u: Vector, t: float = 0.0) -> Vector:
        return np.linalg.solve(self.mass_matrix(p), u - self.bias(p, v))

    def affine_form(self, p: Vector, v: Vector, t: float = 0.0) -> Tuple[Vector, Matrix]:
        """Return (a0, B) with v_dot = a0 + B u."""
        m_inv = np.linalg.inv(self.mass_matrix(p))
        return -m_inv @ self.bias(p, v), m_inv

    def disturbance_gain(self, p: Vector) -> Matrix:
        return np.linalg.inv(self.mass_matrix(p))

    def as_affine(self) -> "AffinePlant":
        """Equivalent control-affine plant with f = -M^-1 (Cv + G + D) and B = M^-1."""
        return AffinePlant(
            dim_state=self.dim,
            dim_input=self.dim,
            drift=lambda p, v, t: -np.linalg.solve(self.mass_matrix(p), self.bias(p, v)),
            actuation=lambda p, v, t: np.linalg.inv(self.mass_matrix(p)),
            name=f"{self.name}_affine",
        )


class AffinePlant:
    """General control-affine system v_dot = f(p, v, t) + B(p, v, t) u."""

    def __init__(
        self,
        dim_state: int,
        dim_input: int,
        drift: Callable[[Vector, Vector, float], Vector],
        actuation: Callable[[Vector, Vector, float], Matrix],
        drift_jacobian: Optional[Callable[[Vector, Vector, float], Matrix]] = None,
        name: str = "affine",
    ):
        self.dim = dim_state
        self.dim_input = dim_input
        self._drift = drift
        self._actuation = actuation
        self._drift_jacobian = drift_jacobian
        self.name = name

    def drift(self, p: Vector, v: Vector, t: float = 0.0) -> Vector:
        return self._drift(p, v, t)

    def actuation(self, p: Vector, v: Vector, t: float = 0.0) -> Matrix:
        return self._actuation(p, v, t)

    def drift_jacobian(self, p: Vector, v: Vector, t: float = 0.0) -> Matrix:
        """Jacobian of f with respect to v (analytic when provided, central differences otherwise)."""
        if self._drift_jacobian is not None:
            return self._drift_jacobian(p, v, t)
        jac = np.zeros((self.dim, self.dim))
        for k in range(self.dim):
            step = np.zeros(self.dim)
            step[k] = _FD_STEP
            jac[:, k] = (self.drift(p, v + step, t) - self.drift(p, v - step, t)) / (2 * _FD_STEP)
        return jac

    def acceleration(self, p: Vector, v: Vector, u: Vector, t: float = 0.0) -> Vector:
        return self.drift(p, v, t) + self.actuation(p, v, t) @ u

    def affine_form(self, p: Vector, v: Vector, t: float = 0.0) -> Tuple[Vector, Matrix]:
        return self.drift(p, v, t), self.actuation(p, v, t)

    def disturbance_gain(self, p: Vector) -> Matrix:
        return np.eye(self.dim)


Plant = Union[LagrangianPlant, AffinePlant]


def is_fully_actuated(B: Matrix, tol: float = 1e-9) -> bool:
    """True when B B^+ = I, i.e. every velocity direction is actuated."""
    n = B.shape[0]
    return bool(np.linalg.norm(B @ np.linalg.pinv(B) - np.eye(n)) <= tol)


# ---------------------------------------------------------------------------
# Registered plants
# ---------------------------------------------------------------------------


def _nonlinear_drift(p: Vector, v: Vector, t: float) -> Vector:
    return np.array([
        np.cos(p[0]) * p[1] - v[0] + v[1],
        -np.sin(p[1]) * p[0] * v[1] + v[0] ** 2 - v[1] - 2.0 * v[0] * v[1],
    ])


def _nonlinear_drift_jacobian(p: Vector, v: Vector, t: float) -> Matrix:
    return np.array([
        [-1.0, 1.0],
        [2.0 * v[0] - 2.0 * v[1], -np.sin(p[1]) * p[0] - 1.0 - 2.0 * v[0]],
    ])


def nonlinear_example_plant(underactuated: bool = False) -> AffinePlant:
    """
    Two-dimensional nonlinear, non-polynomial benchmark plant.

    f1 = cos(p1) p2 - v1 + v2
    f2 = -sin(p2) p1 v2 + v1^2 - v2 - 2 v1 v2

    Args:
        underactuated: Use B = [1; 0] instead of the identity

    Returns:
        AffinePlant with an analytic drift Jacobian
    """
    B = np.array([[1.0], [0.0]]) if underactuated else np.eye(2)
    return AffinePlant(
        dim_state=2,
        dim_input=B.shape[1],
        drift=_nonlinear_drift,
        actuation=lambda p, v, t: B,
        drift_jacobian=_nonlinear_drift_jacobian,
        name="nonlinear_example_underactuated" if underactuated else "nonlinear_example",
    )


def spacecraft_simulator_plant() -> AffinePlant:
    """Planar thruster vehicle over (x, y, heading) with unit mass and inertia (surrogate model)."""
    return AffinePlant(
        dim_state=3,
        dim_input=3,
        drift=lambda p, v, t: np.zeros(3),
        actuation=lambda p, v, t: np.eye(3),
        drift_jacobian=lambda p, v, t: np.zeros((3, 3)),
        name="spacecraft_planar",
    )


def leo_lagrangian_plant(mean_motion: float) -> LagrangianPlant:
    """
    Hill-Clohessy-Wiltshire relative motion in Lagrangian form.

    x_ddot - 2n y_dot - 3n^2 x = u_x
    y_ddot + 2n x_dot          = u_y
    z_ddot + n^2 z             = u_z

    mapped to M = I, C = [[0, -2n, 0], [2n, 0, 0], [0, 0, 0]] (skew) and
    G = (-3n^2 x, 0, n^2 z).

    Args:
        mean_motion: Mean motion n of the reference orbit (rad per time unit)

    Returns:
        LagrangianPlant with constant mass matrix
    """
    if mean_motion <= 0:
        raise ValidationError("plant.params.mean_motion", "mean motion must be positive")
    n = float(mean_motion)
    coriolis = np.array([[0.0, -2.0 * n, 0.0], [2.0 * n, 0.0, 0.0], [0.0, 0.0, 0.0]])
    return LagrangianPlant(
        dim=3,
        mass_matrix=lambda p: np.eye(3),
        coriolis=lambda p, v: coriolis,
        gravity=lambda p: np.array([-3.0 * n * n * p[0], 0.0, n * n * p[2]]),
        name="leo_hcw",
        constant_mass=True,
    )


def double_integrator_plant(dim: int = 2) -> LagrangianPlant:
    """Unit-mass point in `dim` dimensions with no bias forces."""
    return LagrangianPlant(
        dim=dim,
        mass_matrix=lambda p: np.eye(dim),
        coriolis=lambda p, v: np.zeros((dim, dim)),
        gravity=lambda p: np.zeros(dim),
        name="double_integrator",
        constant_mass=True,
    )


def hcw_energy(p: Vector, v: Vector, mean_motion: float) -> float:
    """Energy-like integral of free HCW motion: |v|^2/2 - 3/2 n^2 x^2 + 1/2 n^2 z^2."""
    n2 = mean_motion * mean_motion
    return float(0.5 * v @ v - 1.5 * n2 * p[0] ** 2 + 0.5 * n2 * p[2] ** 2)


_PLANT_FACTORIES: Dict[str, Callable[..., Plant]] = {
    "nonlinear_example": lambda: nonlinear_example_plant(underactuated=False),
    "nonlinear_example_underactuated": lambda: nonlinear_example_plant(underactuated=True),
    "spacecraft_planar": spacecraft_simulator_plant,
    "leo_hcw": lambda mean_motion=1.0: leo_lagrangian_plant(mean_motion),
    "double_integrator": lambda dim=2: double_integrator_plant(int(dim)),
}

_plant_cache: Dict[Tuple[str, Tuple[Tuple[str, Any], ...]], Plant] = {}


def get_plant(key: str, **params: Any) -> Plant:
    """Get a cached plant instance by registry key."""
    if key not in _PLANT_FACTORIES:
        raise ValidationError("plant.key", f"unknown plant '{key}'; expected one of {sorted(_PLANT_FACTORIES)}")
    cache_key = (key, tuple(sorted(params.items())))
    if cache_key not in _plant_cache:
        try:
            _plant_cache[cache_key] = _PLANT_FACTORIES[key](**params)
        except TypeError as e:
            raise ValidationError("plant.params", f"invalid parameters for '{key}': {e}")
        logger.debug("plant_created", key=key, params=params)
    return _plant_cache[cache_key]


# ---------------------------------------------------------------------------
# State-dependent coefficient factorization
# ---------------------------------------------------------------------------


def sdc_factorize(plant: AffinePlant, p: Vector, v: Vector, v_ref: Vector, t: float = 0.0) -> Matrix:
    """
    Mean-value factorization A_d with A_d (v - v_ref) = f(p, v, t) - f(p, v_ref, t).

    A_d = integral over s in [0, 1] of df/dv(p, v_ref + s (v - v_ref), t), evaluated with
    8-point Gauss-Legendre quadrature (exact for drifts up to degree 16 in v).
    """
    nodes, weights = np.polynomial.legendre.leggauss(_QUADRATURE_ORDER)
    s_values = 0.5 * (nodes + 1.0)
    delta = v - v_ref
    A_d = np.zeros((plant.dim, plant.dim))
    for s, w in zip(s_values, weights):
        A_d += 0.5 * w * plant.drift_jacobian(p, v_ref + s * delta, t)
    return A_d


# ---------------------------------------------------------------------------
# Disturbance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DisturbanceSpec:
    """Bounds and profile of the deterministic disturbance d and the diffusion Gamma."""

    d_bar: float = 0.0
    gamma_bar: float = 0.0
    d_profile: str = "constant"
    seed: int = 0
    omega: float = 1.0

    def __post_init__(self):
        if self.d_bar < 0:
            raise ValidationError("disturbance.d_bar", "must be non-negative")
        if self.gamma_bar < 0:
            raise ValidationError("disturbance.gamma_bar", "must be non-negative")
        if self.d_profile not in ("constant", "sinusoidal", "radial"):
            raise ValidationError(
                "disturbance.profile", f"unknown profile '{self.d_profile}' (constant, sinusoidal, radial)"
            )

    def diffusion(self, n: int) -> Matrix:
        """Gamma = gamma_bar / sqrt(n) I so that ||Gamma||_F = gamma_bar."""
        return (self.gamma_bar / np.sqrt(n)) * np.eye(n)

    def _direction(self, n: int, agent_index: int) -> Tuple[Vector, float]:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, agent_index]))
        direction = rng.standard_normal(n)
        direction /= np.linalg.norm(direction)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        return direction, phase

    def force(self, n: int, t: float, agent_index: int = 0, toward: Optional[Vector] = None) -> Vector:
        """
        Deterministic disturbance for one agent, bounded in norm by d_bar.

        Args:
            n: Dimension
            t: Time
            agent_index: Agent the disturbance acts on (selects the seeded direction)
            toward: Offset to the nearest other object (radial profile only)

        Returns:
            Disturbance vector
        """
        if self.d_bar == 0.0:
            return np.zeros(n)
        if self.d_profile == "radial":
            if toward is None:
                return np.zeros(n)
            distance = np.linalg.norm(toward)
            if distance == 0.0:
                return np.zeros(n)
            return self.d_bar * toward / distance
        direction, phase = self._direction(n, agent_index)
        if self.d_profile == "sinusoidal":
            return self.d_bar * np.sin(self.omega * t + phase) * direction
        return self.d_bar * direction


# ---------------------------------------------------------------------------
# Integrators
# ---------------------------------------------------------------------------


def advance(
    plant: Plant,
    p: Vector,
    v: Vector,
    u: Vector,
    t: float,
    h: float,
    force: Optional[Vector] = None,
    noise: Optional[Vector] = None,
) -> Tuple[Vector, Vector]:
    """
    One semi-implicit Euler(-Maruyama) substep.

    Args:
        plant: Plant model
        p: Position
        v: Velocity
        u: Input held over the substep
        t: Substep start time
        h: Substep length
        force: Deterministic disturbance d (generalized force for Lagrangian plants)
        noise: Diffusion increment Gamma dW (same convention as `force`)

    Returns:
        Updated (p, v); the position update uses the new velocity
    """
    a = plant.acceleration(p, v, u, t)
    if force is not None or noise is not None:
        gain = plant.disturbance_gain(p)
        if force is not None:
            a = a + gain @ force
    v_next = v + a * h
    if noise is not None:
        v_next = v_next + gain @ noise
    p_next = p + v_next * h
    return p_next, v_next


def propagate(
    plant: Plant,
    p: Vector,
    v: Vector,
    u: Vector,
    t: float,
    duration: float,
    substeps: int = 10,
) -> Tuple[Vector, Vector]:
    """Disturbance-free zero-order-hold propagation over `duration` in `substeps` substeps."""
    h = duration / substeps
    for k in range(substeps):
        p, v = advance(plant, p, v, u, t + k * h, h)
    return p, v


def rk4_propagate(
    plant: Plant,
    p: Vector,
    v: Vector,
    u: Vector,
    t: float,
    duration: float,
    steps: int,
) -> Tuple[Vector, Vector]:
    """Classical fourth-order Runge-Kutta reference integrator (disturbance-free, ZOH input)."""
    h = duration / steps
    n = p.size

    def rhs(time, x):
        return np.concatenate([x[n:], plant.acceleration(x[:n], x[n:], u, time)])

    x = np.concatenate([p, v])
    for k in range(steps):
        tk = t + k * h
        k1 = rhs(tk, x)
        k2 = rhs(tk + 0.5 * h, x + 0.5 * h * k1)
        k3 = rhs(tk + 0.5 * h, x + 0.5 * h * k2)
        k4 = rhs(tk + h, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x[:n], x[n:]
