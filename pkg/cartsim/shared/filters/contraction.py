"""
Contraction metric for general control-affine plants.

The metric is built pointwise from the Riccati equation

    (A_d + k_v/2 I)^T M + M (A_d + k_v/2 I) - 2 M B R^-1 B^T M + Q = 0

so that M A_d + A_d^T M - 2 M B R^-1 B^T M + k_v M = -Q. The M_dot term is not bounded a
priori; `verify_contraction_along_trajectory` measures it after the fact.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import structlog

from ..models.dynamics import AffinePlant, sdc_factorize
from ..models.gains import FilterGains
from ..utils.errors import RiccatiFailure

logger = structlog.get_logger(__name__)

M_FLOOR = 1e-9
CARE_TOL = 1e-8


@dataclass(frozen=True)
class MetricEval:
    """Metric at one state with its rate and the resulting contraction residual."""

    M: np.ndarray
    M_dot: np.ndarray
    A_d: np.ndarray
    B: np.ndarray
    contraction_residual: float


@dataclass(frozen=True)
class ContractionSample:
    """State, safe velocity and the metric actually used at one instant of a run."""

    t: float
    p: np.ndarray
    v: np.ndarray
    v_d: np.ndarray
    M: np.ndarray


def care_residual(A_d: np.ndarray, B: np.ndarray, R: np.ndarray, k_v: float, Q: np.ndarray, M: np.ndarray) -> float:
    """Relative residual of the shifted Riccati equation."""
    A = A_d + 0.5 * k_v * np.eye(A_d.shape[0])
    lhs = A.T @ M + M @ A - 2.0 * M @ B @ np.linalg.solve(R, B.T) @ M + Q
    return float(np.linalg.norm(lhs) / max(1.0, np.linalg.norm(Q), np.linalg.norm(M)))


def metric_pointwise(
    A_d: np.ndarray, B: np.ndarray, R: np.ndarray, k_v: float, Q: np.ndarray
) -> np.ndarray:
    """
    Stabilizing Riccati solution used as the contraction metric at one state.

    Args:
        A_d: State-dependent coefficient matrix
        B: Actuation matrix (n x m)
        R: Actuation weight (m x m, SPD)
        k_v: Contraction rate
        Q: Margin matrix (SPD)

    Returns:
        Symmetric positive-definite metric M

    Raises:
        RiccatiFailure: no stabilizing solution, or the solution fails its checks
    """
    n = A_d.shape[0]
    shifted = A_d + 0.5 * k_v * np.eye(n)
    try:
        # The factor 2 on the quadratic term is absorbed by halving R.
        M = scipy.linalg.solve_continuous_are(shifted, B, Q, 0.5 * R)
    except (np.linalg.LinAlgError, ValueError) as e:
        logger.warning("riccati_failed", error=str(e))
        raise RiccatiFailure(f"no stabilizing Riccati solution: {e}", state=A_d)

    M = 0.5 * (M + M.T)
    if not np.all(np.isfinite(M)):
        raise RiccatiFailure("Riccati solution is not finite", state=A_d)
    min_eig = float(np.linalg.eigvalsh(M).min())
    if min_eig < M_FLOOR:
        raise RiccatiFailure(f"metric not positive definite (min eigenvalue {min_eig:.3e})", state=A_d)
    residual = care_residual(A_d, B, R, k_v, Q, M)
    if residual > CARE_TOL:
        raise RiccatiFailure(f"Riccati residual {residual:.3e} exceeds tolerance", state=A_d)
    return M


def contraction_residual(
    M: np.ndarray, M_dot: np.ndarray, A_d: np.ndarray, B: np.ndarray, R: np.ndarray, k_v: float
) -> float:
    """Largest eigenvalue of M_dot + M A_d + A_d^T M - 2 M B R^-1 B^T M + k_v M."""
    lhs = M_dot + M @ A_d + A_d.T @ M - 2.0 * M @ B @ np.linalg.solve(R, B.T) @ M + k_v * M
    return float(np.linalg.eigvalsh(0.5 * (lhs + lhs.T)).max())


def evaluate_metric(
    plant: AffinePlant,
    p: np.ndarray,
    v: np.ndarray,
    v_d: np.ndarray,
    t: float,
    gains: FilterGains,
    previous: Optional[Tuple[float, np.ndarray]] = None,
) -> MetricEval:
    """
    Build the metric at (p, v) against the safe velocity v_d.

    Args:
        plant: Control-affine plant
        p: Position
        v: Velocity
        v_d: Safe target velocity
        t: Time
        gains: Provides k_v, R and the margin Q
        previous: (time, metric) of the same agent's previous evaluation; M_dot is the
            backward difference against it, zero when absent

    Returns:
        MetricEval
    """
    A_d = sdc_factorize(plant, p, v, v_d, t)
    B = plant.actuation(p, v, t)
    R = gains.actuation_weight(B.shape[1])
    M = metric_pointwise(A_d, B, R, gains.k_v, gains.margin_matrix(plant.dim))

    M_dot = np.zeros_like(M)
    if previous is not None and t > previous[0]:
        M_dot = (M - previous[1]) / (t - previous[0])

    residual = contraction_residual(M, M_dot, A_d, B, R, gains.k_v)
    return MetricEval(M=M, M_dot=M_dot, A_d=A_d, B=B, contraction_residual=residual)


def incremental_energy(v: np.ndarray, v_d: np.ndarray, M: np.ndarray) -> float:
    """E = 1/2 (v - v_d)^T M (v - v_d)."""
    e_v = np.asarray(v) - np.asarray(v_d)
    return float(0.5 * e_v @ M @ e_v)


def verify_contraction_along_trajectory(
    trajectory: Sequence[ContractionSample], plant: AffinePlant, gains: FilterGains
) -> float:
    """
    Worst contraction residual along a recorded trajectory.

    M_dot uses central differences of the recorded metrics (one-sided at the ends). The
    inequality is evaluated with the k_v of `gains`, which may differ from the one the
    metrics were built with.

    Args:
        trajectory: Time-ordered samples holding the metric used at each instant
        plant: Control-affine plant
        gains: Gains the trajectory is checked against

    Returns:
        Maximum over the samples of the largest eigenvalue of the contraction inequality
    """
    samples = list(trajectory)
    if not samples:
        return float("-inf")
    worst = float("-inf")
    for k, sample in enumerate(samples):
        if len(samples) == 1:
            M_dot = np.zeros_like(sample.M)
        else:
            lo, hi = max(k - 1, 0), min(k + 1, len(samples) - 1)
            M_dot = (samples[hi].M - samples[lo].M) / (samples[hi].t - samples[lo].t)
        A_d = sdc_factorize(plant, sample.p, sample.v, sample.v_d, sample.t)
        B = plant.actuation(sample.p, sample.v, sample.t)
        R = gains.actuation_weight(B.shape[1])
        worst = max(worst, contraction_residual(sample.M, M_dot, A_d, B, R, gains.k_v))
    logger.debug("contraction_verified", samples=len(samples), worst=worst)
    return worst
