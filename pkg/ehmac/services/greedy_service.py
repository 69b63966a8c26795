"""
Myopic policy: minimize the current slot's weighted distortion only.
"""

import logging

import numpy as np

from ..constants import ErrorCodes, Tolerances
from ..solvers.barrier import ConvexProgram, linear_block, solve
from ..solvers.rate_region import RateRegionInstance, is_rate_feasible, subset_matrix
from ..states.system import Action, SystemParams, SystemState
from ..utils.error_handling import SolverError

logger = logging.getLogger(__name__)


def greedy_power(state: SystemState) -> np.ndarray:
    """
    Full battery for users that have bits and a positive weight, zero otherwise.

    The slot's cost does not depend on the battery left afterwards and the
    rate region only grows with P, so spending everything is weakly optimal
    for users that can use it. Idle users keep their energy.
    """
    active = (state.r > 0) & (state.w > 0) & (state.B > 0)
    return np.where(active, state.B, 0.0)


def greedy_act(state: SystemState, params: SystemParams, ktol: float = Tolerances.GREEDY_KTOL) -> Action:
    """
    Solve the one-slot problem with P fixed at ``greedy_power``.

    Args:
        state: Current state
        params: System parameters
        ktol: Barrier gap target of the rate solve

    Returns:
        Feasible action minimizing sum_i w_i f(r_i - rho_i)

    Raises:
        SolverError: If the solved rates fall outside the rate region
    """
    P = greedy_power(state)
    g = params.rate_fn
    f = params.cost_fn
    capacity_single = g(state.h * P)
    active = np.flatnonzero((P > 0) & (capacity_single > 0))
    rho = np.zeros(state.num_users)
    if active.size == 0:
        return Action(P=P, rho=rho)

    h, Pa = state.h[active], P[active]
    w, r = state.w[active], state.r[active]
    subsets = subset_matrix(active.size)
    capacities = g(subsets @ (h * Pa))

    def objective(x):
        return float(np.sum(w * f(r - x)))

    def gradient(x):
        return -w * f.derivative(r - x)

    def hessian(x):
        return np.diag(w * f.second_derivative(r - x))

    start = 0.5 * np.minimum(r, capacity_single[active] / (state.num_users + 1))
    prog = ConvexProgram(
        objective=objective,
        gradient=gradient,
        hessian=hessian,
        constraints=[linear_block(subsets, capacities, name="rate-region")],
        lower=np.zeros(active.size),
        upper=r,
        x0=start,
    )
    x, report = solve(prog, ktol=ktol)
    rho[active] = np.clip(x, 0.0, r)
    if not is_rate_feasible(RateRegionInstance(h=state.h, P=P, g=g), rho):
        raise SolverError(
            f"greedy rates {rho.tolist()} leave the rate region at P={P.tolist()}",
            code=ErrorCodes.INFEASIBLE_RESULT,
            best_iterate=rho,
        )
    logger.debug(f"greedy slot: active={active.tolist()} newton={report.newton_iterations}")
    return Action(P=P, rho=rho)
