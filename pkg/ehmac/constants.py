"""
Constants and defaults for the energy-harvesting MAC toolkit.

This module centralizes registry names, numerical tolerances, default
experiment values and file formats so that every module reads them from
one place.
"""

from typing import Dict, List, Tuple


class Tolerances:
    """Numerical tolerances shared by feasibility checks and solvers."""

    FEASIBILITY = 1e-9
    PROBABILITY_SUM = 1e-12
    SOLVER_KTOL = 1e-6
    GREEDY_KTOL = 1e-9
    GRID_MATCH = 1e-9
    CONVEXITY = 1e-6
    DOMINANCE = 1e-6


class RegistryNames:
    """Names accepted for the distortion (f) and rate (g) functions."""

    EXP_DISTORTION = "exp-distortion"
    QUADRATIC_DISTORTION = "quadratic-distortion"
    LOG_RATE = "log-rate"
    LOG2_RATE = "log2-rate"


class PolicyNames:
    """Policy identifiers used by the CLI and experiment configs."""

    MDP = "mdp"
    GREEDY = "greedy"
    NN = "nn"
    OFFLINE = "offline"
    ZERO = "zero"

    ALL: List[str] = [OFFLINE, NN, MDP, GREEDY]
    CHOICES: List[str] = [MDP, GREEDY, NN, OFFLINE, ZERO]


class SweepParameters:
    """Parameters an experiment may sweep."""

    E_PROB = "e_prob"
    P_PROB = "p_prob"
    I_PROB = "i_prob"

    ALL: List[str] = [E_PROB, P_PROB, I_PROB]


class DefaultValues:
    """Default values for the two-user setup and the tooling around it."""

    # System
    NUM_USERS = 2
    HORIZON = 10
    R_MAX = 4.0
    B_MAX = 4.0
    COST_FN = RegistryNames.EXP_DISTORTION
    RATE_FN = RegistryNames.LOG_RATE

    # Stochastic model
    E_PROB = 0.4
    P_PROB = 0.4
    I_PROB = 0.4
    ENERGY_UNIT = 1.0
    CHANNEL_SUPPORT: Tuple[float, ...] = (0.1, 1.0)
    CHANNEL_PROBS: Tuple[float, ...] = (0.4, 0.6)
    WEIGHT_SUPPORT: Tuple[float, ...] = (1.0, 2.0)

    # Discretization
    GRID_STEP = 1.0

    # Barrier solver
    BARRIER_T0 = 1.0
    BARRIER_MU = 10.0
    LINE_SEARCH_ALPHA = 0.25
    LINE_SEARCH_BETA = 0.5
    NEWTON_TOL = 1e-10
    MAX_NEWTON_ITERATIONS = 500
    MAX_OUTER_ITERATIONS = 60
    MIN_STEP = 1e-16

    # Offline oracle / dataset
    NUM_PATHS = 2000
    DATASET_SEED_OFFSET = 1_000_000

    # Neural network
    HIDDEN_LAYERS: Tuple[int, ...] = (64, 64)
    LEARNING_RATE = 1e-3
    MOMENTUM = 0.9
    BATCH_SIZE = 64
    EPOCHS = 200
    PATIENCE = 20
    VALIDATION_FRACTION = 0.1

    # Experiments
    EPISODES = 10000
    SEED = 0
    SWEEP_PARAM = SweepParameters.I_PROB
    SWEEP_VALUES: Tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    WORKERS = 1


class ReferenceCosts:
    """Expected costs for the importance-weight sweep at the default setup."""

    ACCEPTANCE_TOLERANCE = 0.15

    IPROB_TABLE: Dict[float, Dict[str, float]] = {
        0.0: {"offline": 0.52, "nn": 0.64, "mdp": 0.82, "greedy": 0.60},
        0.2: {"offline": 0.62, "nn": 0.76, "mdp": 0.96, "greedy": 0.71},
        0.4: {"offline": 0.73, "nn": 0.92, "mdp": 1.15, "greedy": 0.85},
        0.6: {"offline": 0.84, "nn": 1.03, "mdp": 1.24, "greedy": 0.98},
        0.8: {"offline": 0.94, "nn": 1.16, "mdp": 1.39, "greedy": 1.16},
        1.0: {"offline": 1.06, "nn": 1.25, "mdp": 1.44, "greedy": 1.38},
    }


class CsvColumns:
    """Column layouts for persisted CSV files."""

    RESULTS: List[str] = [
        "sweep_param",
        "sweep_value",
        "policy",
        "mean_cost",
        "stderr",
        "episodes",
    ]

    @staticmethod
    def dataset(num_users: int) -> List[str]:
        """Dataset columns for ``num_users`` users."""
        columns: List[str] = []
        for prefix in ("B", "r", "h", "w", "P", "rho"):
            columns.extend(f"{prefix}_{i + 1}" for i in range(num_users))
        columns.extend(["path_seed", "slot"])
        return columns


class FileFormats:
    """Artifact format tags."""

    TABLES_FORMAT = "ehmac-tables/1"
    MLP_FORMAT = "ehmac-mlp/1"


class ErrorCodes:
    """Machine-readable error codes printed by the CLI."""

    CONFIG = "config-error"
    ENERGY_CAUSALITY = "energy-causality"
    BIT_CAUSALITY = "bit-causality"
    DIMENSION = "dimension-mismatch"
    GRID_CLOSURE = "grid-closure"
    INFEASIBLE_START = "infeasible-start"
    MAX_ITERATIONS = "max-iterations"
    NON_FINITE_LOSS = "non-finite-loss"
    POLICY_INFEASIBLE = "policy-infeasible-action"
    DOMINANCE = "offline-dominance"
    PATH_SOLVE = "path-solve-failed"
    LINE_SEARCH = "line-search-failed"
    INFEASIBLE_RESULT = "infeasible-result"
    EPISODE_NOT_STARTED = "episode-not-started"
    IO = "io-error"
    INTERNAL = "internal-error"


class Logging:
    """Logging configuration constants."""

    DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    DEFAULT_LOG_FILE = ""
