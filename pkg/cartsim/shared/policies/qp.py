"""
Dense primal active-set solver for small strictly convex QPs

    minimize 1/2 x^T H x + g^T x   subject to   A x <= b

started from a feasible point found by a phase-I linear program.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import structlog
from scipy.optimize import linprog

from ..utils.errors import QPInfeasible

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class QPSolution:
    """Minimizer, final working set and its multipliers (zero for inactive rows)."""

    x: np.ndarray
    active: Tuple[int, ...]
    multipliers: np.ndarray
    iterations: int


class ActiveSetSolver:
    """Primal active-set method with KKT block solves."""

    def __init__(self, max_iter: int = 100, tol: float = 1e-10):
        self.max_iter = max_iter
        self.tol = tol

    def _solve_eqp(self, H, g, A_w, b_w):
        """Minimizer of the QP with the working rows held as equalities, and their multipliers."""
        n = H.shape[0]
        k = A_w.shape[0]
        kkt = np.block([[H, A_w.T], [A_w, np.zeros((k, k))]])
        rhs = np.concatenate([-g, b_w])
        sol = np.linalg.solve(kkt, rhs)
        return sol[:n], sol[n:]

    def _feasible_start(self, A, b, n):
        """Phase I: maximize the smallest slack t (capped at 1) subject to A x + t <= b."""
        c = np.zeros(n + 1)
        c[-1] = -1.0
        A_ub = np.hstack([A, np.ones((A.shape[0], 1))])
        bounds = [(None, None)] * n + [(None, 1.0)]
        result = linprog(c, A_ub=A_ub, b_ub=b, bounds=bounds, method="highs")
        if result.status != 0 or result.x is None:
            raise QPInfeasible(f"phase-I linear program failed: {result.message}")
        if result.x[-1] < -1e-9:
            raise QPInfeasible(f"constraints are infeasible (best slack {result.x[-1]:.3e})")
        return np.asarray(result.x[:n], dtype=float)

    def _initial_working_set(self, A, b, x) -> List[int]:
        working: List[int] = []
        slack = b - A @ x
        for i in np.argsort(np.abs(slack)):
            if abs(slack[i]) > 1e-9 * max(1.0, abs(b[i])):
                break
            candidate = A[working + [int(i)]]
            if np.linalg.matrix_rank(candidate) == len(working) + 1:
                working.append(int(i))
        return working

    def solve(self, H: np.ndarray, g: np.ndarray, A: np.ndarray, b: np.ndarray) -> QPSolution:
        """
        Solve the QP.

        Args:
            H: Symmetric positive-definite Hessian
            g: Linear term
            A: Constraint rows
            b: Constraint bounds

        Returns:
            QPSolution

        Raises:
            QPInfeasible: the constraint set is empty
        """
        n = H.shape[0]
        A = np.atleast_2d(np.asarray(A, dtype=float)).reshape(-1, n)
        b = np.asarray(b, dtype=float).reshape(-1)

        x = np.linalg.solve(H, -g)
        if A.shape[0] == 0 or np.all(A @ x <= b + self.tol):
            return QPSolution(x=x, active=(), multipliers=np.zeros(A.shape[0]), iterations=0)

        x = self._feasible_start(A, b, n)
        working = self._initial_working_set(A, b, x)

        for iteration in range(1, self.max_iter + 1):
            A_w = A[working] if working else np.zeros((0, n))
            x_eq, lam = self._solve_eqp(H, g, A_w, b[working])
            step = x_eq - x

            if np.linalg.norm(step) <= 1e-9 * max(1.0, np.linalg.norm(x)):
                x = x_eq
                if lam.size == 0 or lam.min() >= -self.tol:
                    multipliers = np.zeros(A.shape[0])
                    multipliers[working] = np.maximum(lam, 0.0)
                    return QPSolution(
                        x=x, active=tuple(sorted(working)), multipliers=multipliers, iterations=iteration
                    )
                working.pop(int(np.argmin(lam)))
                continue

            alpha, blocking = 1.0, None
            directional = A @ step
            for i in range(A.shape[0]):
                if i in working or directional[i] <= self.tol:
                    continue
                ratio = (b[i] - A[i] @ x) / directional[i]
                if ratio < alpha:
                    alpha, blocking = max(ratio, 0.0), i
            x = x_eq if blocking is None else x + alpha * step
            if blocking is not None:
                working.append(blocking)

        logger.warning("qp_iteration_limit", iterations=self.max_iter)
        raise QPInfeasible(f"active-set iteration limit {self.max_iter} reached")


_default_solver: Optional[ActiveSetSolver] = None


def get_qp_solver() -> ActiveSetSolver:
    """Get a shared solver instance."""
    global _default_solver
    if _default_solver is None:
        _default_solver = ActiveSetSolver()
    return _default_solver


def solve_qp(H: np.ndarray, g: np.ndarray, A: np.ndarray, b: np.ndarray) -> QPSolution:
    """Solve min 1/2 x^T H x + g^T x s.t. A x <= b with the shared active-set solver."""
    return get_qp_solver().solve(H, g, A, b)


def kkt_residuals(H: np.ndarray, g: np.ndarray, A: np.ndarray, b: np.ndarray, solution: QPSolution) -> Dict[str, float]:
    """
    KKT residuals of a QP solution.

    Returns:
        Dictionary with stationarity, primal feasibility, dual feasibility and
        complementary slackness residuals
    """
    x, lam = solution.x, solution.multipliers
    A = np.atleast_2d(np.asarray(A, dtype=float)).reshape(-1, H.shape[0])
    slack = b - A @ x
    stationarity = H @ x + g + A.T @ lam
    return {
        "stationarity": float(np.linalg.norm(stationarity, np.inf)),
        "primal": float(max(0.0, -slack.min())) if slack.size else 0.0,
        "dual": float(max(0.0, -lam.min())) if lam.size else 0.0,
        "complementarity": float(np.abs(lam * slack).max()) if lam.size else 0.0,
    }
