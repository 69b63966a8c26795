"""
Offline oracle: the whole horizon of one known sample path as a single convex program.

Variables are P_i(t), rho_i(t) and the auxiliary battery B_i(t). Variables
that the path forces to zero are eliminated: P and B while user i has
harvested nothing yet, rho while no version has arrived or P is forced.
Remaining bits are substituted along the known arrivals:
r_i(t) - rho_i(t) = r_max - (sum of rho_i since the last arrival).
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..constants import DefaultValues, Tolerances
from ..solvers.barrier import ConvexProgram, InequalityBlock, SolverReport, linear_block, solve
from ..solvers.rate_region import subset_matrix
from ..states.dataset import TrainingDataset
from ..states.dynamics import advance_state, sample_path
from ..states.system import Action, SamplePath, StochasticModel, SystemParams, SystemState
from ..utils.error_handling import EhmacError, PathSolveError, log_function_call

logger = logging.getLogger(__name__)


@dataclass
class OfflineLayout:
    """Variable indexing and path-derived constants of one offline program."""

    power_index: np.ndarray
    rate_index: np.ndarray
    battery_index: np.ndarray
    weights: np.ndarray
    last_arrival: np.ndarray

    @property
    def num_variables(self) -> int:
        return int(
            (self.power_index >= 0).sum() + (self.rate_index >= 0).sum() + (self.battery_index >= 0).sum()
        )


@dataclass(frozen=True, eq=False)
class OfflineSolution:
    """Optimal offline trajectory of one sample path."""

    P: np.ndarray
    rho: np.ndarray
    B: np.ndarray
    objective: float
    report: SolverReport
    path: SamplePath

    def actions(self) -> List[Action]:
        return [Action(P=self.P[t], rho=self.rho[t]) for t in range(self.P.shape[0])]

    def states(self, params: SystemParams) -> List[SystemState]:
        """States the true dynamics produce under the offline actions, slot by slot."""
        state = SystemState.initial(params.num_users)
        previous = Action.zeros(params.num_users)
        states = []
        for t in range(self.P.shape[0]):
            state = advance_state(state, previous, self.path, t, params)
            states.append(state)
            previous = Action(P=self.P[t], rho=self.rho[t])
        return states


def _layout(path: SamplePath, params: SystemParams) -> OfflineLayout:
    T, M = path.horizon, path.num_users
    harvested = np.cumsum(path.energy, axis=0) > 0
    last_arrival = np.full((T, M), -1, dtype=np.int64)
    weights = np.zeros((T, M))
    for i in range(M):
        last, w = -1, 0.0
        for t in range(T):
            if path.arrivals[t, i]:
                last, w = t, float(path.weights[t, i])
            last_arrival[t, i] = last
            weights[t, i] = w

    has_power = harvested
    has_rate = has_power & (last_arrival >= 0)
    counter = 0
    power_index = np.full((T, M), -1, dtype=np.int64)
    rate_index = np.full((T, M), -1, dtype=np.int64)
    battery_index = np.full((T, M), -1, dtype=np.int64)
    for index, mask in ((power_index, has_power), (rate_index, has_rate), (battery_index, has_power)):
        count = int(mask.sum())
        index[mask] = np.arange(counter, counter + count)
        counter += count
    return OfflineLayout(power_index, rate_index, battery_index, weights, last_arrival)


def _cost_rows(layout: OfflineLayout, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Window-sum matrix L over rho and weights of the (t, i) slots that carry cost."""
    T, M = layout.weights.shape
    rows, weights = [], []
    for t in range(T):
        for i in range(M):
            w = layout.weights[t, i]
            if w <= 0:
                continue
            row = np.zeros(n)
            for tau in range(layout.last_arrival[t, i], t + 1):
                k = layout.rate_index[tau, i]
                if k >= 0:
                    row[k] = 1.0
            rows.append(row)
            weights.append(w)
    if not rows:
        return np.zeros((0, n)), np.zeros(0)
    return np.array(rows), np.array(weights)


def _rate_block(
    path: SamplePath, layout: OfflineLayout, params: SystemParams, n: int
) -> Optional[InequalityBlock]:
    """sum_{i in S} rho_i(t) - g(sum_{i in S} h_i(t) P_i(t)) <= 0 for every slot and subset."""
    subsets = subset_matrix(path.num_users)
    rate_rows, power_rows = [], []
    for t in range(path.horizon):
        for mask in subsets:
            members = np.flatnonzero(mask)
            if not np.any(layout.rate_index[t, members] >= 0):
                continue
            a = np.zeros(n)
            c = np.zeros(n)
            for i in members:
                if layout.rate_index[t, i] >= 0:
                    a[layout.rate_index[t, i]] = 1.0
                if layout.power_index[t, i] >= 0:
                    c[layout.power_index[t, i]] = path.channel[t, i]
            rate_rows.append(a)
            power_rows.append(c)
    if not rate_rows:
        return None
    A = np.array(rate_rows)
    C = np.array(power_rows)
    g = params.rate_fn

    def hess(x, weights):
        curvature = -g.second_derivative(C @ x) * weights
        return (C.T * curvature) @ C

    return InequalityBlock(
        fun=lambda x: A @ x - g(C @ x),
        jac=lambda x: A - g.derivative(C @ x)[:, None] * C,
        hess=hess,
        name="rate-region",
    )


def _linear_rows(path: SamplePath, layout: OfflineLayout, params: SystemParams, n: int):
    """Battery epigraph, power-below-battery and bits-per-version rows as A x <= b."""
    T, M = path.horizon, path.num_users
    rows, rhs = [], []
    for i in range(M):
        for t in range(T):
            kb = layout.battery_index[t, i]
            if kb < 0:
                continue
            # B(t) - B(t-1) + P(t-1) <= E(t)
            row = np.zeros(n)
            row[kb] = 1.0
            if t > 0:
                if layout.battery_index[t - 1, i] >= 0:
                    row[layout.battery_index[t - 1, i]] = -1.0
                if layout.power_index[t - 1, i] >= 0:
                    row[layout.power_index[t - 1, i]] = 1.0
            rows.append(row)
            rhs.append(path.energy[t, i])
            # P(t) <= B(t)
            row = np.zeros(n)
            row[layout.power_index[t, i]] = 1.0
            row[kb] = -1.0
            rows.append(row)
            rhs.append(0.0)
        start = 0
        while start < T:
            if path.arrivals[start, i]:
                end = start + 1
                while end < T and not path.arrivals[end, i]:
                    end += 1
                window = [layout.rate_index[tau, i] for tau in range(start, end)
                          if layout.rate_index[tau, i] >= 0]
                if window:
                    row = np.zeros(n)
                    row[window] = 1.0
                    rows.append(row)
                    rhs.append(params.r_max)
                start = end
            else:
                start += 1
    return np.array(rows).reshape(-1, n), np.array(rhs)


def _strict_start(path: SamplePath, layout: OfflineLayout, params: SystemParams, n: int) -> np.ndarray:
    T, M = path.horizon, path.num_users
    x = np.zeros(n)
    for i in range(M):
        B_prev = P_prev = 0.0
        for t in range(T):
            if layout.battery_index[t, i] < 0:
                continue
            B = 0.9 * min(B_prev - P_prev + path.energy[t, i], params.b_max)
            P = 0.5 * B
            x[layout.battery_index[t, i]] = B
            x[layout.power_index[t, i]] = P
            if layout.rate_index[t, i] >= 0:
                capacity = float(params.rate_fn(path.channel[t, i] * P))
                x[layout.rate_index[t, i]] = 0.5 * min(capacity / (M + 1), params.r_max / (2 * T))
            B_prev, P_prev = B, P
    return x


def build_offline_program(path: SamplePath, params: SystemParams) -> Tuple[ConvexProgram, OfflineLayout]:
    """
    Assemble the offline program of one path together with its variable layout.

    The program minimizes (1/TM) sum w_i(t) f(r_i(t) - rho_i(t)) subject to
    the per-slot rate region, the battery epigraph pair, P <= B and at most
    r_max bits per version, with a strictly feasible start.
    """
    layout = _layout(path, params)
    n = layout.num_variables
    scale = 1.0 / (path.horizon * path.num_users)
    L, w = _cost_rows(layout, n)
    f = params.cost_fn
    r_max = params.r_max

    def objective(x):
        return scale * float(np.sum(w * f(r_max - L @ x)))

    def gradient(x):
        return -scale * (L.T @ (w * f.derivative(r_max - L @ x)))

    def hessian(x):
        curvature = scale * w * f.second_derivative(r_max - L @ x)
        return (L.T * curvature) @ L

    blocks: List[InequalityBlock] = []
    rate = _rate_block(path, layout, params, n)
    if rate is not None:
        blocks.append(rate)
    A, b = _linear_rows(path, layout, params, n)
    if A.shape[0]:
        blocks.append(linear_block(A, b, name="battery-power-bits"))

    upper = np.empty(n)
    upper[layout.power_index[layout.power_index >= 0]] = params.b_max
    upper[layout.battery_index[layout.battery_index >= 0]] = params.b_max
    upper[layout.rate_index[layout.rate_index >= 0]] = params.r_max
    prog = ConvexProgram(
        objective=objective,
        gradient=gradient,
        hessian=hessian,
        constraints=blocks,
        lower=np.zeros(n),
        upper=upper,
        x0=_strict_start(path, layout, params, n),
    )
    return prog, layout


def clip_to_dynamics(
    path: SamplePath, P: np.ndarray, rho: np.ndarray, params: SystemParams
) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Replay an action sequence along ``path`` with the true dynamics.

    Each action is clipped to the battery and bits the dynamics leave, which
    only removes solver round-off. Returns the clipped actions and
    (1/TM) sum_t sum_i w_i(t) f(r_i(t) - rho_i(t)).
    """
    from ..states.dynamics import stage_cost

    P = np.array(P, dtype=float)
    rho = np.array(rho, dtype=float)
    state = SystemState.initial(params.num_users)
    previous = Action.zeros(params.num_users)
    total = []
    for t in range(path.horizon):
        state = advance_state(state, previous, path, t, params)
        P[t] = np.clip(P[t], 0.0, state.B)
        rho[t] = np.clip(rho[t], 0.0, state.r)
        previous = Action(P=P[t], rho=rho[t])
        total.append(stage_cost(state, previous, params))
    return P, rho, float(np.sum(total)) / (path.horizon * path.num_users)


def solve_offline(
    path: SamplePath, params: SystemParams, ktol: float = Tolerances.SOLVER_KTOL
) -> OfflineSolution:
    """
    Solve the offline program of one path.

    Returns:
        Per-slot actions, auxiliary batteries, objective and solver report

    Raises:
        SolverError: If the barrier solver fails
    """
    prog, layout = build_offline_program(path, params)
    T, M = path.horizon, path.num_users
    if prog.dimension == 0:
        x, report = np.zeros(0), SolverReport(converged=True, final_gap=0.0, kkt_residual=0.0)
    else:
        x, report = solve(prog, ktol=ktol)

    P = np.zeros((T, M))
    rho = np.zeros((T, M))
    B = np.zeros((T, M))
    for target, index in ((P, layout.power_index), (rho, layout.rate_index), (B, layout.battery_index)):
        mask = index >= 0
        target[mask] = np.clip(x[index[mask]], 0.0, None)

    P, rho, objective = clip_to_dynamics(path, P, rho, params)
    logger.debug(
        f"offline path seed={path.seed}: n={prog.dimension} objective={objective:.6f} "
        f"gap={report.final_gap:.1e}"
    )
    return OfflineSolution(P=P, rho=rho, B=B, objective=objective, report=report, path=path)


def _dataset_from_solution(solution: OfflineSolution, params: SystemParams) -> TrainingDataset:
    features = np.array([s.as_vector() for s in solution.states(params)])
    T = solution.P.shape[0]
    return TrainingDataset(
        features=features,
        targets=np.column_stack([solution.P, solution.rho]),
        path_seeds=np.full(T, solution.path.seed if solution.path.seed is not None else -1, dtype=np.int64),
        slots=np.arange(1, T + 1, dtype=np.int64),
    )


def _solve_seed(args) -> TrainingDataset:
    model, params, seed, ktol = args
    try:
        solution = solve_offline(sample_path(model, params, seed), params, ktol=ktol)
    except EhmacError as e:
        raise PathSolveError(seed, e) from e
    return _dataset_from_solution(solution, params)


def generate_dataset(
    model: StochasticModel,
    params: SystemParams,
    num_paths: int = DefaultValues.NUM_PATHS,
    seed: int = DefaultValues.SEED,
    workers: int = DefaultValues.WORKERS,
    ktol: float = Tolerances.SOLVER_KTOL,
    progress: bool = False,
) -> TrainingDataset:
    """
    Solve ``num_paths`` offline paths (seeds seed, seed+1, ...) and collect NT records.

    Records are ordered by path seed, then slot, regardless of ``workers``.

    Raises:
        PathSolveError: Carrying the seed of the first path that failed
    """
    if num_paths < 1:
        raise ValueError("num_paths must be at least 1")
    log_function_call("generate_dataset", num_paths=num_paths, seed=seed, workers=workers)
    jobs = [(model, params, seed + k, ktol) for k in range(num_paths)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(tqdm(pool.map(_solve_seed, jobs), total=num_paths, disable=not progress))
    else:
        parts = [_solve_seed(job) for job in tqdm(jobs, disable=not progress)]
    dataset = TrainingDataset.concatenate(parts)
    logger.info(f"Generated {len(dataset)} offline records from {num_paths} paths")
    return dataset


class OfflineService:
    """Offline solves and dataset generation for one configuration."""

    def __init__(self, params: SystemParams, model: StochasticModel, workers: int = DefaultValues.WORKERS,
                 ktol: float = Tolerances.SOLVER_KTOL):
        self.params = params
        self.model = model
        self.workers = workers
        self.ktol = ktol

    def generate(self, num_paths: int, seed: int, progress: bool = False) -> TrainingDataset:
        return generate_dataset(self.model, self.params, num_paths, seed, self.workers, self.ktol, progress)
