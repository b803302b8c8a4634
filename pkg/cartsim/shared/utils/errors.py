"""
Exception hierarchy for the safe-control library and simulator.

Library code raises these; the simulator decides per tick whether an error
is fatal for a run or recorded as an event, and the CLI maps them to exit codes.
"""

from typing import Any, Optional


class CartError(Exception):
    """Base class for every error raised by cartsim."""


class ValidationError(CartError):
    """A value object or scenario file violates its invariants."""

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class NotSafe(CartError):
    """The log-barrier is undefined because some clearance fell to (or below) the floor."""

    def __init__(self, min_h: float, agent_index: Optional[int] = None):
        self.min_h = min_h
        self.agent_index = agent_index
        who = "" if agent_index is None else f" for agent {agent_index}"
        super().__init__(f"barrier undefined{who}: min clearance {min_h:.3e}")


class RiccatiFailure(CartError):
    """No stabilizing Riccati solution exists at the queried state."""

    def __init__(self, message: str, state: Any = None):
        self.state = state
        super().__init__(message)


class GainTooSmall(CartError):
    """The composite gain k_r admits no positive contraction rate for the given bounds."""


class PlannerFailure(CartError):
    """The global reference planner ended with an unsafe trajectory."""

    def __init__(self, min_h: float, message: str = ""):
        self.min_h = min_h
        super().__init__(message or f"planned trajectory is unsafe: min clearance {min_h:.3e}")


class QPInfeasible(CartError):
    """The CLF-CBF quadratic program has an empty feasible set."""


class NonFiniteState(CartError):
    """Integration produced a non-finite state entry."""

    def __init__(self, agent_index: int, tick: int):
        self.agent_index = agent_index
        self.tick = tick
        super().__init__(f"non-finite state for agent {agent_index} at tick {tick}")


class TrajectoryDomainError(CartError):
    """A safe target trajectory was queried outside its stored time span."""

    def __init__(self, t: float, start: float, end: float):
        self.t = t
        self.start = start
        self.end = end
        super().__init__(f"time {t:.6f} outside trajectory domain [{start:.6f}, {end:.6f}]")
