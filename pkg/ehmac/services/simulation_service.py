"""
Monte Carlo evaluation of policies and experiment orchestration.

All policies of one sweep point are evaluated on the same sample paths
(path k uses seed ``cfg.seed + k``). Episode means use compensated
summation in seed order, so results do not depend on the worker count.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..adapters.policies import (
    GreedyPolicy,
    MdpPolicy,
    NnPolicy,
    OfflineReplayPolicy,
    Policy,
    ZeroPolicy,
)
from ..constants import CsvColumns, DefaultValues, PolicyNames, SweepParameters, Tolerances
from ..solvers.rate_region import RateRegionInstance, is_rate_feasible
from ..states.dynamics import advance_state, sample_path, stage_cost
from ..states.system import Action, ModelSettings, SamplePath, StochasticModel, SystemParams, SystemState
from ..utils.error_handling import ConfigError, DominanceError, ErrorContext, PolicyInfeasibleError
from .mdp_service import DiscretizationSpec, MdpService
from .offline_service import generate_dataset
from .training_service import TrainingConfig, train

logger = logging.getLogger(__name__)


@dataclass
class EpisodeLog:
    """Per-slot record of one simulated episode."""

    states: List[SystemState] = field(default_factory=list)
    actions: List[Action] = field(default_factory=list)
    costs: List[float] = field(default_factory=list)


def audit_action(state: SystemState, action: Action, params: SystemParams, slot: int,
                 tol: float = Tolerances.FEASIBILITY) -> None:
    """
    Check the per-slot constraints of an action.

    Raises:
        PolicyInfeasibleError: Naming the slot and the violated constraint
    """
    if action.P.shape != state.B.shape:
        raise PolicyInfeasibleError(slot, "dimension", f"{action.P.shape} vs {state.B.shape}")
    if np.any(action.P > state.B + tol):
        raise PolicyInfeasibleError(slot, "power-budget", f"P={action.P.tolist()} B={state.B.tolist()}")
    if np.any(action.rho > state.r + tol):
        raise PolicyInfeasibleError(slot, "remaining-bits", f"rho={action.rho.tolist()} r={state.r.tolist()}")
    if not is_rate_feasible(RateRegionInstance(h=state.h, P=action.P, g=params.rate_fn), action.rho, tol):
        raise PolicyInfeasibleError(slot, "rate-region", f"rho={action.rho.tolist()} P={action.P.tolist()}")


def simulate_episode(policy: Policy, path: SamplePath, params: SystemParams) -> Tuple[float, EpisodeLog]:
    """
    Run one episode, querying the policy causally and auditing every action.

    Returns:
        (1/TM) sum_t sum_i w_i(t) f(r_i(t) - rho_i(t)) and the trajectory log

    Raises:
        PolicyInfeasibleError: If the policy returns an infeasible action
    """
    policy.begin_episode(path)
    state = SystemState.initial(params.num_users)
    previous = Action.zeros(params.num_users)
    log = EpisodeLog()
    for t in range(path.horizon):
        state = advance_state(state, previous, path, t, params)
        action = policy.act(state, t + 1)
        audit_action(state, action, params, t + 1)
        log.states.append(state)
        log.actions.append(action)
        log.costs.append(stage_cost(state, action, params))
        previous = action
    return math.fsum(log.costs) / (path.horizon * path.num_users), log


def summarize(costs: Sequence[float]) -> Tuple[float, float]:
    """Mean (compensated sum) and standard error of episode objectives."""
    n = len(costs)
    if n == 0:
        return float("nan"), float("nan")
    mean = math.fsum(costs) / n
    if n == 1:
        return mean, 0.0
    variance = math.fsum((c - mean) ** 2 for c in costs) / (n - 1)
    return mean, math.sqrt(variance / n)


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep: a model parameter, its values, and what to run at each."""

    params: SystemParams
    model: ModelSettings = field(default_factory=ModelSettings)
    sweep_param: str = DefaultValues.SWEEP_PARAM
    sweep_values: Tuple[float, ...] = DefaultValues.SWEEP_VALUES
    episodes: int = DefaultValues.EPISODES
    seed: int = DefaultValues.SEED
    policies: Tuple[str, ...] = tuple(PolicyNames.ALL)
    num_paths: int = DefaultValues.NUM_PATHS
    training: TrainingConfig = field(default_factory=TrainingConfig)
    grid_step: float = DefaultValues.GRID_STEP
    power_step: Optional[float] = None
    rate_step: Optional[float] = None
    ktol: float = Tolerances.SOLVER_KTOL
    greedy_ktol: float = Tolerances.GREEDY_KTOL
    workers: int = DefaultValues.WORKERS
    check_dominance: bool = True

    def __post_init__(self):
        if self.sweep_param not in SweepParameters.ALL:
            raise ConfigError("experiment.sweep_param",
                              f"'{self.sweep_param}' is not one of {SweepParameters.ALL}")
        if any(not 0.0 <= v <= 1.0 for v in self.sweep_values):
            raise ConfigError("experiment.sweep_values", "values must lie in [0, 1]")
        if self.episodes < 1:
            raise ConfigError("experiment.episodes", "must be at least 1")
        unknown = [p for p in self.policies if p not in PolicyNames.CHOICES]
        if unknown:
            raise ConfigError("experiment.policies", f"unknown policies {unknown}")
        if self.workers < 1:
            raise ConfigError("experiment.workers", "must be at least 1")
        if not (self.ktol > 0 and self.greedy_ktol > 0):
            raise ConfigError("solver.ktol", "tolerances must be positive")

    def discretization(self, model: StochasticModel) -> DiscretizationSpec:
        return DiscretizationSpec.uniform(self.params, model, self.grid_step, self.power_step, self.rate_step)


@dataclass(frozen=True)
class ResultRow:
    sweep_param: str
    sweep_value: float
    policy: str
    mean_cost: float
    stderr: float
    episodes: int


@dataclass
class ExperimentResult:
    """Rows in sweep-value, then policy order; raw episode objectives kept alongside."""

    rows: List[ResultRow] = field(default_factory=list)
    episode_costs: Dict[Tuple[float, str], np.ndarray] = field(default_factory=dict)

    def row(self, sweep_value: float, policy: str) -> ResultRow:
        for row in self.rows:
            if row.policy == policy and abs(row.sweep_value - sweep_value) < 1e-12:
                return row
        raise KeyError((sweep_value, policy))

    def table(self) -> Dict[float, Dict[str, float]]:
        """sweep value -> policy -> mean cost."""
        result: Dict[float, Dict[str, float]] = {}
        for row in self.rows:
            result.setdefault(row.sweep_value, {})[row.policy] = row.mean_cost
        return result


def _evaluate_paths(args) -> np.ndarray:
    policies, params, model, seeds = args
    costs = np.empty((len(policies), len(seeds)))
    for k, seed in enumerate(seeds):
        path = sample_path(model, params, seed)
        for j, policy in enumerate(policies):
            costs[j, k], _ = simulate_episode(policy, path, params)
    return costs


def evaluate_policies(
    policies: Sequence[Policy],
    params: SystemParams,
    model: StochasticModel,
    episodes: int,
    seed: int,
    workers: int = DefaultValues.WORKERS,
    progress: bool = False,
) -> np.ndarray:
    """Objectives of every policy on paths seed..seed+episodes-1, shape (policies, episodes)."""
    seeds = list(range(seed, seed + episodes))
    if workers <= 1:
        chunks = [seeds[k:k + 100] for k in range(0, len(seeds), 100)]
        parts = [_evaluate_paths((list(policies), params, model, chunk))
                 for chunk in tqdm(chunks, disable=not progress)]
    else:
        size = max(1, math.ceil(len(seeds) / (4 * workers)))
        jobs = [(list(policies), params, model, seeds[k:k + size]) for k in range(0, len(seeds), size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(tqdm(pool.map(_evaluate_paths, jobs), total=len(jobs), disable=not progress))
    return np.concatenate(parts, axis=1)


def check_offline_dominance(costs: np.ndarray, policies: Sequence[Policy], seed: int,
                            tol: float = Tolerances.DOMINANCE) -> None:
    """
    Raise if any causal policy beats the offline replay on some path.

    Raises:
        DominanceError: Naming the path seed and the policy
    """
    names = [p.name for p in policies]
    if PolicyNames.OFFLINE not in names:
        return
    offline = costs[names.index(PolicyNames.OFFLINE)]
    for j, policy in enumerate(policies):
        if not policy.causal:
            continue
        worse = np.flatnonzero(offline > costs[j] + tol)
        if worse.size:
            k = int(worse[0])
            raise DominanceError(
                f"offline cost {offline[k]:.9f} exceeds {policy.name} cost {costs[j, k]:.9f} "
                f"on path seed {seed + k}"
            )


def build_policies(
    names: Sequence[str],
    params: SystemParams,
    model: StochasticModel,
    cfg: Optional[ExperimentConfig] = None,
    progress: bool = False,
) -> List[Policy]:
    """Construct the named policies, solving and training what they need."""
    cfg = cfg or ExperimentConfig(params=params)
    policies: List[Policy] = []
    for name in names:
        if name == PolicyNames.MDP:
            _, table = MdpService(params, model, cfg.discretization(model)).solve(monotone=True)
            policies.append(MdpPolicy(table))
        elif name == PolicyNames.GREEDY:
            policies.append(GreedyPolicy(params, cfg.greedy_ktol))
        elif name == PolicyNames.NN:
            dataset = generate_dataset(model, params, cfg.num_paths,
                                       seed=cfg.seed + DefaultValues.DATASET_SEED_OFFSET,
                                       workers=cfg.workers, ktol=cfg.ktol, progress=progress)
            policies.append(NnPolicy(train(dataset, cfg.training), params))
        elif name == PolicyNames.OFFLINE:
            policies.append(OfflineReplayPolicy(params, cfg.ktol))
        elif name == PolicyNames.ZERO:
            policies.append(ZeroPolicy())
        else:
            raise ConfigError("experiment.policies", f"unknown policy '{name}'")
    return policies


def run_experiment(cfg: ExperimentConfig, progress: bool = False) -> ExperimentResult:
    """
    Evaluate every configured policy at every sweep value on common paths.

    Raises:
        DominanceError: If a causal policy beats the offline oracle on a path
        EhmacError: Sub-module failures, prefixed with the sweep point
    """
    result = ExperimentResult()
    params = cfg.params
    for value in cfg.sweep_values:
        with ErrorContext(f"{cfg.sweep_param}={value}"):
            model = cfg.model.with_value(cfg.sweep_param, value).build(params.num_users)
            policies = build_policies(cfg.policies, params, model, cfg, progress)
            costs = evaluate_policies(policies, params, model, cfg.episodes, cfg.seed, cfg.workers, progress)
            if cfg.check_dominance:
                check_offline_dominance(costs, policies, cfg.seed)
        for j, policy in enumerate(policies):
            mean, stderr = summarize(costs[j].tolist())
            result.rows.append(
                ResultRow(cfg.sweep_param, float(value), policy.name, mean, stderr, cfg.episodes)
            )
            result.episode_costs[(float(value), policy.name)] = costs[j]
        logger.info(
            f"{cfg.sweep_param}={value}: "
            + ", ".join(f"{p.name}={summarize(costs[j].tolist())[0]:.4f}" for j, p in enumerate(policies))
        )
    return result


def export_results(result: ExperimentResult, destination: Union[str, Path]) -> Path:
    """Write the result rows as CSV with a fixed header; an empty result gives a header-only file."""
    destination = Path(destination)
    destination.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        [[getattr(row, column) for column in CsvColumns.RESULTS] for row in result.rows],
        columns=CsvColumns.RESULTS,
    )
    frame.to_csv(destination, index=False, lineterminator="\n", float_format="%.10g")
    logger.info(f"Wrote {len(result.rows)} result rows to {destination}")
    return destination


class SimulationService:
    """Episode evaluation for the CLI's simulate command."""

    def __init__(self, params: SystemParams, model: StochasticModel, workers: int = DefaultValues.WORKERS):
        self.params = params
        self.model = model
        self.workers = workers

    def evaluate(self, policies: Sequence[Policy], episodes: int, seed: int,
                 progress: bool = False) -> Dict[str, Tuple[float, float]]:
        """Mean and standard error per policy over common paths."""
        costs = evaluate_policies(policies, self.params, self.model, episodes, seed, self.workers, progress)
        check_offline_dominance(costs, policies, seed)
        return {p.name: summarize(costs[j].tolist()) for j, p in enumerate(policies)}
