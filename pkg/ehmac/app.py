"""
Command-line entry point.

Sub-commands: solve-mdp, gen-offline, train-nn, simulate, experiment.
Exit code 0 on success; on failure one line
``error code=<code> message="<text>"`` is printed to stderr and the exit
code is 1.
"""

import argparse
import logging
import sys
from typing import List, Optional

from . import __version__
from .config import CONFIG_FILE, LOG_FILE, LOG_LEVEL, WORKERS
from .constants import Logging, PolicyNames
from .handlers import commands
from .registry import services
from .utils.config_loader import load_config
from .utils.error_handling import ConfigError, format_error_line, handle_errors

logger = logging.getLogger(__name__)


def setup_logging(level: str = LOG_LEVEL, log_file: str = LOG_FILE) -> None:
    """Configure root logging once; stderr always, plus ``log_file`` when set."""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=Logging.DEFAULT_FORMAT,
        handlers=handlers,
    )


class CommandParser(argparse.ArgumentParser):
    """Argument parser whose usage errors follow the one-line error format."""

    def error(self, message: str):
        print(format_error_line(ConfigError("cli", message)), file=sys.stderr)
        self.exit(2)


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one sub-parser per command."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=CONFIG_FILE or None, help="TOML experiment file")
    common.add_argument("--seed", type=int, default=None, help="first sample-path seed")
    common.add_argument("--episodes", type=int, default=None, help="episodes per policy")
    common.add_argument("--out", default=None, help="output file")
    common.add_argument(
        "--policy", action="append", choices=PolicyNames.CHOICES, default=None,
        help="policy to run (repeatable)",
    )
    common.add_argument("--workers", type=int, default=None, help="worker processes")
    common.add_argument("--progress", action="store_true", help="show progress bars")
    common.add_argument("--log-level", default=None, help="override LOG_LEVEL")

    parser = CommandParser(
        prog="ehmac",
        description="Version-update scheduling for energy-harvesting multiple-access users.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve-mdp", parents=[common], help="solve the discretized MDP")
    solve.add_argument("--full", action="store_true", help="disable monotone pruning")

    gen = sub.add_parser("gen-offline", parents=[common], help="generate the offline dataset")
    gen.add_argument("--paths", type=int, default=None, help="number of sample paths")

    train = sub.add_parser("train-nn", parents=[common], help="train the imitation network")
    train.add_argument("--dataset", default=None, help="dataset CSV (generated when omitted)")

    simulate = sub.add_parser("simulate", parents=[common], help="evaluate policies")
    simulate.add_argument("--tables", default=None, help="solved MDP tables to load")
    simulate.add_argument("--model", default=None, help="trained network to load")

    sub.add_parser("experiment", parents=[common], help="run the configured sweep")
    return parser


@handle_errors()
def _initialize(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    workers = args.workers or WORKERS or cfg.experiment.workers
    services.initialize(cfg, workers)
    logger.info(
        f"ehmac {__version__}: {args.command} with {cfg.params.num_users} users, T={cfg.params.horizon}"
    )
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, load the configuration and dispatch the sub-command."""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level or LOG_LEVEL)
    status = _initialize(args)
    if status != 0:
        return status
    return commands.dispatch(args) or 0


if __name__ == "__main__":
    sys.exit(main())
