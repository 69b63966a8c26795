"""
Log-barrier interior-point solver for small smooth convex programs.

The program is

    minimize f0(x)  subject to  c_j(x) <= 0,  lower <= x <= upper,

started from a strictly feasible point. Each outer iteration centers the
barrier function t * f0(x) - sum log(-c_j(x)) - sum log(box slack) with
damped Newton steps and a backtracking line search that never leaves the
strict interior; t then grows by ``mu`` until the duality-gap surrogate
m / t drops below ``ktol``.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from ..constants import DefaultValues, ErrorCodes, Tolerances
from ..utils.error_handling import SolverError

logger = logging.getLogger(__name__)

Vector = np.ndarray


@dataclass(frozen=True)
class InequalityBlock:
    """
    A vector of convex constraints c(x) <= 0.

    ``hess(x, weights)`` returns sum_j weights_j * Hessian(c_j)(x); leave it
    ``None`` for affine blocks.
    """

    fun: Callable[[Vector], Vector]
    jac: Callable[[Vector], np.ndarray]
    hess: Optional[Callable[[Vector, Vector], np.ndarray]] = None
    name: str = ""


def linear_block(A: np.ndarray, b: np.ndarray, name: str = "linear") -> InequalityBlock:
    """Affine constraints A x <= b."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    return InequalityBlock(fun=lambda x: A @ x - b, jac=lambda x: A, hess=None, name=name)


def scalar_constraint(
    fun: Callable[[Vector], float],
    grad: Callable[[Vector], Vector],
    hess: Optional[Callable[[Vector], np.ndarray]] = None,
    name: str = "scalar",
) -> InequalityBlock:
    """Wrap one scalar constraint c(x) <= 0 as a block."""
    return InequalityBlock(
        fun=lambda x: np.array([fun(x)], dtype=float),
        jac=lambda x: np.atleast_2d(grad(x)),
        hess=None if hess is None else (lambda x, wts: wts[0] * hess(x)),
        name=name,
    )


@dataclass
class ConvexProgram:
    """Objective callbacks, constraint blocks, box bounds and a start point."""

    objective: Callable[[Vector], float]
    gradient: Callable[[Vector], Vector]
    hessian: Optional[Callable[[Vector], np.ndarray]]
    constraints: List[InequalityBlock]
    lower: Vector
    upper: Vector
    x0: Optional[Vector] = None
    variable_names: Sequence[str] = ()

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)

    @property
    def dimension(self) -> int:
        return int(self.lower.shape[0])

    def constraint_values(self, x: Vector) -> Vector:
        if not self.constraints:
            return np.zeros(0)
        return np.concatenate([block.fun(x) for block in self.constraints])

    def num_constraints(self) -> int:
        """Count of general constraints plus finite box bounds."""
        general = self.constraint_values(self.x0).size if self.x0 is not None else sum(
            block.fun(np.zeros(self.dimension)).size for block in self.constraints
        )
        return int(general + np.isfinite(self.lower).sum() + np.isfinite(self.upper).sum())

    def is_strictly_feasible(self, x: Vector) -> bool:
        if x is None or x.shape != self.lower.shape or not np.all(np.isfinite(x)):
            return False
        with np.errstate(invalid="ignore"):
            if np.any(x <= self.lower) or np.any(x >= self.upper):
                return False
            values = self.constraint_values(x)
        return bool(np.all(values < 0))

    def max_violation(self, x: Vector) -> float:
        """Largest violation over constraints and bounds (0 when feasible)."""
        parts = [np.zeros(1), self.constraint_values(x), self.lower - x, x - self.upper]
        return float(max(np.max(np.nan_to_num(p, nan=np.inf, neginf=0.0)) for p in parts))


@dataclass
class SolverReport:
    """Convergence record of one barrier solve."""

    outer_iterations: int = 0
    newton_iterations: int = 0
    final_gap: float = np.inf
    barrier_t: float = 0.0
    kkt_residual: float = np.inf
    converged: bool = False
    objective_history: List[float] = field(default_factory=list)


def finite_difference_hessian(gradient: Callable[[Vector], Vector], x: Vector) -> np.ndarray:
    """Symmetrized central differences of the gradient."""
    n = x.size
    hess = np.empty((n, n))
    for k in range(n):
        step = 1e-6 * max(1.0, abs(x[k]))
        e = np.zeros(n)
        e[k] = step
        hess[:, k] = (gradient(x + e) - gradient(x - e)) / (2 * step)
    return 0.5 * (hess + hess.T)


def gradient_check(fun: Callable[[Vector], float], grad: Callable[[Vector], Vector],
                   x: Vector, eps: float = 1e-6) -> float:
    """Relative error between ``grad`` and central finite differences of ``fun``."""
    numeric = np.empty_like(x, dtype=float)
    for k in range(x.size):
        e = np.zeros_like(x, dtype=float)
        e[k] = eps
        numeric[k] = (fun(x + e) - fun(x - e)) / (2 * eps)
    analytic = np.asarray(grad(x), dtype=float)
    scale = max(np.linalg.norm(numeric), np.linalg.norm(analytic), 1e-12)
    return float(np.linalg.norm(numeric - analytic) / scale)


def midpoint_convexity_gap(fun: Callable[[Vector], float], a: Vector, b: Vector) -> float:
    """(f(a) + f(b)) / 2 - f((a + b) / 2); non-negative for convex f."""
    return float(0.5 * (fun(a) + fun(b)) - fun(0.5 * (a + b)))


class _Barrier:
    """Barrier function pieces for a fixed program."""

    def __init__(self, prog: ConvexProgram):
        self.prog = prog
        self.has_lower = np.isfinite(prog.lower)
        self.has_upper = np.isfinite(prog.upper)

    def value(self, x: Vector, t: float) -> float:
        prog = self.prog
        c = prog.constraint_values(x)
        lo = x[self.has_lower] - prog.lower[self.has_lower]
        hi = prog.upper[self.has_upper] - x[self.has_upper]
        return float(
            t * prog.objective(x) - np.log(-c).sum() - np.log(lo).sum() - np.log(hi).sum()
        )

    def derivatives(self, x: Vector, t: float) -> Tuple[Vector, np.ndarray]:
        prog = self.prog
        grad = t * np.asarray(prog.gradient(x), dtype=float)
        if prog.hessian is not None:
            hess = t * np.asarray(prog.hessian(x), dtype=float)
        else:
            hess = t * finite_difference_hessian(prog.gradient, x)

        for block in prog.constraints:
            c = block.fun(x)
            J = block.jac(x)
            inv = 1.0 / (-c)
            grad += J.T @ inv
            hess += (J.T * inv**2) @ J
            if block.hess is not None:
                hess += block.hess(x, inv)

        lo_slack = np.where(self.has_lower, x - np.where(self.has_lower, prog.lower, 0.0), 1.0)
        hi_slack = np.where(self.has_upper, np.where(self.has_upper, prog.upper, 0.0) - x, 1.0)
        grad += np.where(self.has_lower, -1.0 / lo_slack, 0.0)
        grad += np.where(self.has_upper, 1.0 / hi_slack, 0.0)
        hess[np.diag_indices_from(hess)] += np.where(self.has_lower, lo_slack**-2.0, 0.0)
        hess[np.diag_indices_from(hess)] += np.where(self.has_upper, hi_slack**-2.0, 0.0)
        return grad, hess


def _newton_direction(grad: Vector, hess: np.ndarray) -> Vector:
    try:
        factor = scipy.linalg.cho_factor(hess)
        return -scipy.linalg.cho_solve(factor, grad)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        ridge = 1e-12 * (1.0 + np.abs(np.diag(hess)).max())
        return -np.linalg.lstsq(hess + ridge * np.eye(hess.shape[0]), grad, rcond=None)[0]


def solve(
    prog: ConvexProgram,
    ktol: float = Tolerances.SOLVER_KTOL,
    t0: float = DefaultValues.BARRIER_T0,
    mu: float = DefaultValues.BARRIER_MU,
    alpha: float = DefaultValues.LINE_SEARCH_ALPHA,
    beta: float = DefaultValues.LINE_SEARCH_BETA,
    newton_tol: float = DefaultValues.NEWTON_TOL,
    max_newton_iterations: int = DefaultValues.MAX_NEWTON_ITERATIONS,
    max_outer_iterations: int = DefaultValues.MAX_OUTER_ITERATIONS,
    min_step: float = DefaultValues.MIN_STEP,
) -> Tuple[Vector, SolverReport]:
    """
    Minimize a convex program with the log-barrier method.

    Args:
        prog: Program with a strictly feasible ``x0``
        ktol: Target for the duality-gap surrogate m / t
        t0: Initial barrier parameter
        mu: Barrier growth factor
        alpha: Armijo fraction of the line search
        beta: Step shrink factor of the line search
        newton_tol: Centering stops when lambda^2 / 2 falls below this
        max_newton_iterations: Total Newton step budget
        max_outer_iterations: Outer iteration budget
        min_step: Smallest line-search step before giving up

    Returns:
        Minimizer and convergence report

    Raises:
        SolverError: ``infeasible-start`` when x0 is missing or not strictly
            feasible, ``max-iterations`` when a budget runs out (the best
            iterate is attached), ``line-search-failed`` when no finite
            strictly feasible step is found
    """
    if prog.x0 is None:
        raise SolverError("no strictly feasible start supplied", ErrorCodes.INFEASIBLE_START)
    x = np.array(prog.x0, dtype=float)
    if not prog.is_strictly_feasible(x):
        raise SolverError(
            f"start point violates constraints by {prog.max_violation(x):.3g}",
            ErrorCodes.INFEASIBLE_START,
        )

    report = SolverReport()
    barrier = _Barrier(prog)
    m = prog.num_constraints()
    t = t0 if m > 0 else 1.0

    while True:
        report.outer_iterations += 1
        while True:
            grad, hess = barrier.derivatives(x, t)
            if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
                raise SolverError(
                    "barrier derivatives are not finite", ErrorCodes.LINE_SEARCH, best_iterate=x.copy()
                )
            step = _newton_direction(grad, hess)
            if not np.all(np.isfinite(step)):
                raise SolverError(
                    "Newton direction is not finite", ErrorCodes.LINE_SEARCH, best_iterate=x.copy()
                )
            decrement_sq = float(-grad @ step)
            if decrement_sq / 2.0 <= newton_tol:
                break
            if report.newton_iterations >= max_newton_iterations:
                raise SolverError(
                    f"Newton budget of {max_newton_iterations} steps exhausted "
                    f"(gap {m / t:.3g})",
                    ErrorCodes.MAX_ITERATIONS,
                    best_iterate=x.copy(),
                )
            report.newton_iterations += 1

            size = 1.0
            while not prog.is_strictly_feasible(x + size * step):
                size *= beta
                if size < min_step:
                    raise SolverError(
                        f"no strictly feasible step above {min_step:g}",
                        ErrorCodes.LINE_SEARCH,
                        best_iterate=x.copy(),
                    )
            current = barrier.value(x, t)
            slope = alpha * float(grad @ step)
            while barrier.value(x + size * step, t) > current + size * slope:
                size *= beta
                if size < min_step:
                    break
            if size < min_step:
                break
            x = x + size * step

        report.objective_history.append(float(prog.objective(x)))
        gap = m / t if m > 0 else 0.0
        report.final_gap = gap
        report.barrier_t = t
        if gap <= ktol:
            break
        if report.outer_iterations >= max_outer_iterations:
            raise SolverError(
                f"outer budget of {max_outer_iterations} iterations exhausted (gap {gap:.3g})",
                ErrorCodes.MAX_ITERATIONS,
                best_iterate=x.copy(),
            )
        t *= mu

    grad, _ = barrier.derivatives(x, t)
    report.kkt_residual = float(np.max(np.abs(grad)) / t) if grad.size else 0.0
    report.converged = True
    logger.debug(
        f"barrier solve: n={prog.dimension} m={m} outer={report.outer_iterations} "
        f"newton={report.newton_iterations} gap={report.final_gap:.2e} "
        f"kkt={report.kkt_residual:.2e}"
    )
    return x, report
