"""
State containers, local observation extraction and the global safety product.

Sensing sets use the plain Euclidean norm; only the clearance function h uses
the Xi-weighted norm.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..utils.errors import ValidationError


def _as_vector(value, name: str) -> np.ndarray:
    array = np.array(value, dtype=float).reshape(-1)
    if array.size == 0:
        raise ValidationError(name, "must have at least one entry")
    if not np.all(np.isfinite(array)):
        raise ValidationError(name, "all entries must be finite")
    return array


@dataclass(frozen=True)
class AgentState:
    """Generalized position p and velocity v of one agent."""

    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        p = _as_vector(self.p, "p")
        v = _as_vector(self.v, "v")
        if p.shape != v.shape:
            raise ValidationError("v", f"length {v.size} does not match position length {p.size}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v)

    @property
    def dim(self) -> int:
        return self.p.size

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "AgentState":
        n = x.size // 2
        return cls(x[:n], x[n:])


@dataclass(frozen=True)
class World:
    """Snapshot of every agent state, the static obstacles and the clock."""

    agents: Tuple[AgentState, ...]
    obstacles: Tuple[np.ndarray, ...] = ()
    time: float = 0.0

    def __post_init__(self):
        agents = tuple(self.agents)
        if not agents:
            raise ValidationError("agents", "at least one agent is required")
        dim = agents[0].dim
        if any(agent.dim != dim for agent in agents):
            raise ValidationError("agents", "all agents must share the same dimension")
        obstacles = tuple(_as_vector(o, "obstacles") for o in self.obstacles)
        if any(o.size != dim for o in obstacles):
            raise ValidationError("obstacles", f"obstacle positions must have dimension {dim}")
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "obstacles", obstacles)
        object.__setattr__(self, "time", float(self.time))

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def dim(self) -> int:
        return self.agents[0].dim

    def positions(self) -> np.ndarray:
        return np.array([agent.p for agent in self.agents])

    def velocities(self) -> np.ndarray:
        return np.array([agent.v for agent in self.agents])

    def advance(self, agents: Sequence[AgentState], time: float) -> "World":
        return replace(self, agents=tuple(agents), time=time)


@dataclass(frozen=True)
class SafetyConfig:
    """Barrier geometry: safe radius, robustness margin, sensing radius and ellipsoid weight."""

    r_s: float
    delta_r_s: float
    r_sen: float
    xi: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.r_s <= 0:
            raise ValidationError("safety.r_s", "minimal safe distance must be positive")
        if self.delta_r_s <= 0:
            raise ValidationError("safety.delta_r_s", "robustness margin must be positive")
        if self.r_sen - (self.r_s + self.delta_r_s) <= 0:
            raise ValidationError(
                "safety.r_sen",
                "sensing radius must exceed r_s + delta_r_s (r_sen - (r_s + delta_r_s) > 0)",
            )
        if self.xi is None:
            raise ValidationError("safety.xi", "ellipsoid weight is required")
        xi = np.array(self.xi, dtype=float)
        if xi.ndim == 1:
            xi = np.diag(xi)
        if xi.ndim != 2 or xi.shape[0] != xi.shape[1]:
            raise ValidationError("safety.xi", "ellipsoid weight must be a square matrix or a diagonal")
        if not np.allclose(xi, xi.T, atol=1e-12):
            raise ValidationError("safety.xi", "ellipsoid weight must be symmetric")
        eigenvalues = np.linalg.eigvalsh(xi)
        if eigenvalues.min() <= 0:
            raise ValidationError("safety.xi", "ellipsoid weight must be positive definite")
        if eigenvalues.max() > 1.0 + 1e-12:
            raise ValidationError("safety.xi", "largest eigenvalue must not exceed 1")
        object.__setattr__(self, "xi", xi)

    @classmethod
    def isotropic(cls, dim: int, r_s: float, delta_r_s: float, r_sen: float) -> "SafetyConfig":
        return cls(r_s=r_s, delta_r_s=delta_r_s, r_sen=r_sen, xi=np.eye(dim))

    @property
    def dim(self) -> int:
        return self.xi.shape[0]

    @property
    def inflated_radius(self) -> float:
        return self.r_s + self.delta_r_s

    @property
    def span(self) -> float:
        return self.r_sen - self.inflated_radius

    def xi_norm(self, p_ij: np.ndarray) -> float:
        return float(np.sqrt(p_ij @ self.xi @ p_ij))

    def clearance(self, p_ij: np.ndarray) -> float:
        """Affine clearance h: 0 at the inflated safe radius, 1 at the sensing radius."""
        return (self.xi_norm(p_ij) - self.inflated_radius) / self.span

    def physical_clearance(self, p_ij: np.ndarray) -> float:
        """Clearance against the true safe radius r_s; negative means an actual collision."""
        return (self.xi_norm(p_ij) - self.r_s) / (self.r_sen - self.r_s)

    def in_range(self, p_ij: np.ndarray) -> bool:
        return float(np.linalg.norm(p_ij)) <= self.r_sen

    def with_margin(self, delta_r_s: float) -> "SafetyConfig":
        return replace(self, delta_r_s=delta_r_s)


@dataclass(frozen=True)
class Observation:
    """Local view of one agent: its own state plus neighbors within the sensing radius."""

    agent_index: int
    self_state: AgentState
    neighbor_agents: Tuple[Tuple[int, AgentState], ...]
    neighbor_obstacles: Tuple[Tuple[int, np.ndarray], ...]
    time: float

    @property
    def neighbor_count(self) -> int:
        return len(self.neighbor_agents) + len(self.neighbor_obstacles)

    def neighbor_velocities(self) -> List[np.ndarray]:
        return [state.v for _, state in self.neighbor_agents]


def observe(world: World, agent_index: int, cfg: SafetyConfig) -> Observation:
    """
    Extract the local observation of one agent.

    Args:
        world: Current world snapshot
        agent_index: Index of the observing agent
        cfg: Safety configuration providing the sensing radius

    Returns:
        Observation with neighbors sorted by ascending index
    """
    if not 0 <= agent_index < world.n_agents:
        raise IndexError(f"agent index {agent_index} out of range for {world.n_agents} agents")

    own = world.agents[agent_index]
    agents = tuple(
        (j, state)
        for j, state in enumerate(world.agents)
        if j != agent_index and cfg.in_range(state.p - own.p)
    )
    obstacles = tuple(
        (k, position) for k, position in enumerate(world.obstacles) if cfg.in_range(position - own.p)
    )
    return Observation(agent_index, own, agents, obstacles, world.time)


def _all_pairs(world: World):
    positions = world.positions()
    for i in range(world.n_agents):
        for j in range(i + 1, world.n_agents):
            yield "agent", i, j, positions[j] - positions[i]
        for k, obstacle in enumerate(world.obstacles):
            yield "obstacle", i, k, obstacle - positions[i]


def _in_range_pairs(world: World, cfg: SafetyConfig):
    return (pair for pair in _all_pairs(world) if cfg.in_range(pair[3]))


def global_safety_product(world: World, cfg: SafetyConfig) -> float:
    """
    Product of h over unordered in-range agent pairs and agent-obstacle pairs (1.0 if none).

    Any pair at or inside the inflated radius makes the product exactly 0.0.
    """
    product = 1.0
    for _, _, _, p_ij in _in_range_pairs(world, cfg):
        h = cfg.clearance(p_ij)
        if h <= 0:
            return 0.0
        product *= h
    return product


def per_agent_products(world: World, cfg: SafetyConfig) -> np.ndarray:
    """Per-agent products of h over each agent's observed neighbors, 0.0 for an agent in violation."""
    products = np.ones(world.n_agents)
    for kind, i, j, p_ij in _in_range_pairs(world, cfg):
        h = max(cfg.clearance(p_ij), 0.0)
        products[i] *= h
        if kind == "agent":
            products[j] *= h
    return products


def min_clearance(world: World, cfg: SafetyConfig, physical: bool = True) -> float:
    """
    Smallest clearance over all pairs, capped at 1.0.

    Physical clearance covers every pair, including pairs outside the Euclidean sensing range.
    The inflated clearance covers in-range pairs only.

    Args:
        world: World snapshot
        cfg: Safety configuration
        physical: Measure against r_s (collision) instead of the inflated radius

    Returns:
        Minimum clearance, or 1.0 when no pair comes closer than the sensing radius
    """
    if physical:
        values = [cfg.physical_clearance(p_ij) for _, _, _, p_ij in _all_pairs(world)]
    else:
        values = [cfg.clearance(p_ij) for _, _, _, p_ij in _in_range_pairs(world, cfg)]
    return min(values + [1.0])


def global_psi(world: World, cfg: SafetyConfig) -> float:
    """Global log-barrier psi(X) = -log of the global safety product, +inf when unsafe."""
    total = 0.0
    for _, _, _, p_ij in _in_range_pairs(world, cfg):
        h = cfg.clearance(p_ij)
        if h <= 0:
            return float("inf")
        total -= np.log(h)
    return total


def sample_configuration(
    rng: np.random.Generator,
    count: int,
    low: np.ndarray,
    high: np.ndarray,
    min_separation: float,
    avoid: Optional[Sequence[np.ndarray]] = None,
    max_attempts: int = 10_000,
) -> List[np.ndarray]:
    """
    Rejection-sample positions in a box with a minimal pairwise separation.

    Args:
        rng: Random generator
        count: Number of positions
        low: Lower corner of the box
        high: Upper corner of the box
        min_separation: Minimal Euclidean distance between any two samples (and to `avoid`)
        avoid: Fixed positions the samples must also keep away from
        max_attempts: Budget of draws before giving up

    Returns:
        List of sampled positions
    """
    avoid = list(avoid or [])
    placed: List[np.ndarray] = []
    attempts = 0
    while len(placed) < count:
        attempts += 1
        if attempts > max_attempts:
            raise ValidationError(
                "randomize", f"could not place {count} positions with separation {min_separation}"
            )
        candidate = rng.uniform(low, high)
        if all(np.linalg.norm(candidate - other) >= min_separation for other in placed + avoid):
            placed.append(candidate)
    return placed
