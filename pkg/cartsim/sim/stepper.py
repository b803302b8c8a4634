"""
Euler-Maruyama world update with per-(run, agent, tick) counter-based noise streams.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..shared.models.dynamics import DisturbanceSpec, Plant, advance, propagate
from ..shared.models.world import AgentState, World
from ..shared.utils.errors import NonFiniteState, ValidationError


@dataclass(frozen=True)
class NoiseStreams:
    """Counter-based generators: one independent Philox stream per (seed, run, agent, tick)."""

    seed: int
    run_index: int = 0

    def generator(self, agent_index: int, tick: int) -> np.random.Generator:
        sequence = np.random.SeedSequence([self.seed, self.run_index, agent_index, tick])
        return np.random.Generator(np.random.Philox(sequence))


def _nearest_offset(world: World, agent_index: int) -> Optional[np.ndarray]:
    """Offset from the agent to the closest other agent or obstacle (None when alone)."""
    p_i = world.agents[agent_index].p
    offsets = [a.p - p_i for j, a in enumerate(world.agents) if j != agent_index]
    offsets += [o - p_i for o in world.obstacles]
    if not offsets:
        return None
    return min(offsets, key=np.linalg.norm)


def step(
    world: World,
    inputs: Sequence[np.ndarray],
    plant: Plant,
    disturbance: DisturbanceSpec,
    dt: float,
    streams: NoiseStreams,
    tick: int,
    substeps: int = 10,
) -> World:
    """
    Advance every agent by one control tick with zero-order-hold inputs.

    Each substep applies v += (a + gain d) h + gain Gamma sqrt(h) xi and then p += v h. With
    no disturbance the update is exactly `propagate`.

    Args:
        world: Current snapshot
        inputs: One input per agent
        plant: Plant model
        disturbance: Disturbance bounds and profile
        dt: Control tick
        streams: Noise streams of this run
        tick: Index of the tick being taken
        substeps: Integration substeps per tick

    Returns:
        World at time (tick + 1) dt

    Raises:
        NonFiniteState: an updated state entry is not finite
    """
    if dt <= 0:
        raise ValidationError("dt", "must be positive")
    h = dt / substeps
    t0 = world.time
    deterministic = disturbance.d_bar == 0.0
    diffusive = disturbance.gamma_bar > 0.0

    agents = []
    for i, (agent, u) in enumerate(zip(world.agents, inputs)):
        u = np.asarray(u, dtype=float)
        if deterministic and not diffusive:
            p, v = propagate(plant, agent.p, agent.v, u, t0, dt, substeps)
        else:
            n = agent.dim
            toward = _nearest_offset(world, i) if disturbance.d_profile == "radial" else None
            increments = None
            if diffusive:
                gamma = disturbance.diffusion(n)
                increments = streams.generator(i, tick).standard_normal((substeps, n)) @ gamma.T * np.sqrt(h)
            p, v = agent.p, agent.v
            for k in range(substeps):
                t = t0 + k * h
                force = None if deterministic else disturbance.force(n, t, i, toward)
                noise = None if increments is None else increments[k]
                p, v = advance(plant, p, v, u, t, h, force=force, noise=noise)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise NonFiniteState(i, tick)
        agents.append(AgentState(p, v))
    return world.advance(agents, (tick + 1) * dt)
