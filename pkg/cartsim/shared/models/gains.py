"""
Design parameters of the safety layer and the robust tracking layer.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..utils.errors import ValidationError


def _spd_or_scalar(value, name: str) -> np.ndarray:
    array = np.array(value, dtype=float)
    if array.ndim == 0:
        if array <= 0:
            raise ValidationError(name, "must be positive")
        return array
    if array.ndim == 1:
        array = np.diag(array)
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise ValidationError(name, "must be a positive scalar, a diagonal or a square matrix")
    if not np.allclose(array, array.T, atol=1e-12):
        raise ValidationError(name, "must be symmetric")
    if np.linalg.eigvalsh(array).min() <= 0:
        raise ValidationError(name, "must be positive definite")
    return array


def _expand(array: np.ndarray, n: int, name: str) -> np.ndarray:
    if array.ndim == 0:
        return float(array) * np.eye(n)
    if array.shape != (n, n):
        raise ValidationError(name, f"expected a {n}x{n} matrix, got {array.shape}")
    return array


@dataclass(frozen=True)
class FilterGains:
    """Safety-layer gains k_p, k_v, the actuation weight R and the metric margin Q = q_margin I."""

    k_p: float = 1.0
    k_v: float = 1.0
    R: Optional[np.ndarray] = field(default=None)
    q_margin: float = 1.0

    def __post_init__(self):
        if self.k_p <= 0:
            raise ValidationError("gains.k_p", "must be positive")
        if self.k_v <= 0:
            raise ValidationError("gains.k_v", "must be positive")
        if self.q_margin <= 0:
            raise ValidationError("gains.q_margin", "must be positive")
        if self.R is not None:
            object.__setattr__(self, "R", _spd_or_scalar(self.R, "gains.R"))

    def actuation_weight(self, m: int) -> np.ndarray:
        if self.R is None:
            return np.eye(m)
        return _expand(self.R, m, "gains.R")

    def margin_matrix(self, n: int) -> np.ndarray:
        return self.q_margin * np.eye(n)


@dataclass(frozen=True)
class RobustGains:
    """Robust-layer gains: position gain Lambda_r, composite gain k_r and split parameter epsilon_d."""

    lambda_r: np.ndarray = field(default_factory=lambda: np.array(1.0))
    k_r: float = 1.0
    epsilon_d: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lambda_r", _spd_or_scalar(self.lambda_r, "robust.lambda_r"))
        if self.k_r <= 0:
            raise ValidationError("robust.k_r", "must be positive")
        if self.epsilon_d <= 0:
            raise ValidationError("robust.epsilon_d", "must be positive")

    def lambda_matrix(self, n: int) -> np.ndarray:
        return _expand(self.lambda_r, n, "robust.lambda_r")

    def lambda_min(self, n: int) -> float:
        return float(np.linalg.eigvalsh(self.lambda_matrix(n)).min())
