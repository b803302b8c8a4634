"""
Closed-form minimal-deviation projection shared by every CaRT filter.

All filters solve  min ||u - u_nominal||^2  s.t.  (u - u_bar)^T e <= 0  for some
direction e (e_v, B^T M e_v or the composite variable s).
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np


@dataclass(frozen=True)
class SafetyFilterOutput:
    """Result of one filter evaluation."""

    u: np.ndarray
    constraint_value: float
    active: bool
    e_v: np.ndarray
    u_bar: np.ndarray
    assumption_holds: bool = True


def halfspace_filter(
    u_nominal: np.ndarray, u_bar: np.ndarray, direction: np.ndarray
) -> Tuple[np.ndarray, float, bool]:
    """
    Case-split projection of u_nominal onto {u : (u - u_bar)^T direction <= 0}.

    Args:
        u_nominal: Input to be corrected
        u_bar: Reference input defining the halfspace offset
        direction: Halfspace normal

    Returns:
        (filtered input, constraint value before filtering, whether the projection fired)
    """
    constraint_value = float((u_nominal - u_bar) @ direction)
    if constraint_value > 0:
        return u_nominal - direction * (constraint_value / float(direction @ direction)), constraint_value, True
    return np.array(u_nominal, dtype=float, copy=True), constraint_value, False


def qp_oracle_halfspace(u_learned: np.ndarray, u_bar: np.ndarray, e_v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the halfspace a^T u <= b with a = e_v and b = e_v^T u_bar."""
    a = np.asarray(e_v, dtype=float)
    b = float(a @ u_bar)
    violation = float(a @ u_learned) - b
    norm2 = float(a @ a)
    if violation <= 0 or norm2 == 0.0:
        return np.array(u_learned, dtype=float, copy=True)
    return u_learned - a * (violation / norm2)
