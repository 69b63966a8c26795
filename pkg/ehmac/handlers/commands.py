"""Sub-command handlers exposed to the CLI and tests."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import List, Optional

from ..config import OUTPUT_DIR
from ..constants import DefaultValues, PolicyNames, SweepParameters
from ..adapters.policies import MdpPolicy, NnPolicy, Policy
from ..registry import services
from ..services.mdp_service import convexity_report, monotonicity_scan
from ..services.simulation_service import (
    ExperimentResult,
    ResultRow,
    build_policies,
    export_results,
    run_experiment,
)
from ..states.dataset import TrainingDataset
from ..templates.reports import ReportTemplates
from ..utils.error_handling import ConfigError, handle_errors, log_function_call

logger = logging.getLogger(__name__)


def _output(args: argparse.Namespace, default_name: str) -> Path:
    return Path(args.out) if getattr(args, "out", None) else Path(OUTPUT_DIR) / default_name


def _dataset_seed(args: argparse.Namespace) -> int:
    cfg = services.get_config()
    if args.seed is not None:
        return int(args.seed)
    return cfg.experiment.seed + DefaultValues.DATASET_SEED_OFFSET


@handle_errors()
def solve_mdp_command(args: argparse.Namespace) -> int:
    """Handle ``solve-mdp``: run the monotone recursion and persist both tables."""
    log_function_call("solve_mdp_command", out=args.out)
    service = services.get_mdp_service()
    values, policy = service.solve(monotone=not getattr(args, "full", False))
    for violation in convexity_report(values):
        logger.warning(f"discrete convexity: {violation}")
    coarse = [v for v in monotonicity_scan(policy) if v.magnitude > 1]
    if coarse:
        logger.warning(f"{len(coarse)} monotone-structure violations larger than one grid step")
    path = service.save(_output(args, "mdp_tables.npz"))
    print(
        ReportTemplates.mdp_summary(
            str(path), values.horizon, values.spec.table_shape, policy.stats.mode,
            policy.stats.action_evaluations, service.expected_cost(),
        )
    )
    return 0


@handle_errors()
def gen_offline_command(args: argparse.Namespace) -> int:
    """Handle ``gen-offline``: solve offline paths and write the training dataset."""
    cfg = services.get_config()
    seed = _dataset_seed(args)
    num_paths = args.paths or cfg.experiment.num_paths
    dataset = services.get_offline_service().generate(num_paths, seed, progress=args.progress)
    path = dataset.save_csv(_output(args, "offline_dataset.csv"))
    print(ReportTemplates.dataset_summary(str(path), len(dataset), num_paths, seed))
    return 0


@handle_errors()
def train_nn_command(args: argparse.Namespace) -> int:
    """Handle ``train-nn``: fit the network on a dataset file (generated when absent)."""
    cfg = services.get_config()
    if args.dataset:
        dataset = TrainingDataset.load_csv(args.dataset)
    else:
        dataset = services.get_offline_service().generate(
            cfg.experiment.num_paths, _dataset_seed(args), progress=args.progress
        )
    service = services.get_training_service()
    service.fit(dataset)
    path = service.save(_output(args, "nn_model.npz"))
    print(ReportTemplates.training_summary(str(path), service.summary()))
    return 0


def _simulation_policies(args: argparse.Namespace) -> List[Policy]:
    cfg = services.get_config()
    names = args.policy or list(PolicyNames.ALL)
    policies: List[Policy] = []
    for name in names:
        if name == PolicyNames.MDP and args.tables:
            policies.append(MdpPolicy(services.get_mdp_service().load(args.tables)))
        elif name == PolicyNames.NN and args.model:
            model = services.get_training_service().load(args.model)
            policies.append(NnPolicy(model, cfg.params))
        else:
            policies.extend(build_policies([name], cfg.params, cfg.model, cfg.experiment, args.progress))
    return policies


@handle_errors()
def simulate_command(args: argparse.Namespace) -> int:
    """Handle ``simulate``: evaluate policies on common sample paths at the configured model."""
    cfg = services.get_config()
    episodes = cfg.experiment.episodes if args.episodes is None else args.episodes
    if episodes < 1:
        raise ConfigError("experiment.episodes", "must be at least 1")
    seed = cfg.experiment.seed if args.seed is None else args.seed
    policies = _simulation_policies(args)
    results = services.get_simulation_service().evaluate(policies, episodes, seed, progress=args.progress)
    print(ReportTemplates.policy_table(results, episodes, seed))
    if args.out:
        rows = [ResultRow("none", 0.0, name, mean, stderr, episodes)
                for name, (mean, stderr) in results.items()]
        path = export_results(ExperimentResult(rows=rows), args.out)
        print(ReportTemplates.results_written(str(path), len(rows)))
    return 0


@handle_errors()
def experiment_command(args: argparse.Namespace) -> int:
    """Handle ``experiment``: run the configured sweep and export the result table."""
    cfg = services.get_config().with_overrides(
        seed=args.seed,
        episodes=args.episodes,
        policies=tuple(args.policy) if args.policy else None,
        workers=services.workers,
    )
    result = run_experiment(cfg.experiment, progress=args.progress)
    path = export_results(result, _output(args, "results.csv"))
    table = result.table()
    print(ReportTemplates.sweep_table(cfg.experiment.sweep_param, table, cfg.experiment.policies))
    print(ReportTemplates.results_written(str(path), len(result.rows)))
    if cfg.experiment.sweep_param == SweepParameters.I_PROB:
        for line in ReportTemplates.reference_deviation(table):
            logger.warning(f"outside reference tolerance: {line}")
    return 0


COMMANDS = {
    "solve-mdp": solve_mdp_command,
    "gen-offline": gen_offline_command,
    "train-nn": train_nn_command,
    "simulate": simulate_command,
    "experiment": experiment_command,
}


def dispatch(args: argparse.Namespace) -> Optional[int]:
    handler = COMMANDS.get(args.command)
    if handler is None:
        return None
    return handler(args)
