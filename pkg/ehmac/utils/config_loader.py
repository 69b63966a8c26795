"""
TOML experiment-file loader.

A config file has the sections [system], [model], [discretization],
[solver], [training] and [experiment]; every section and key is optional
and falls back to ``DefaultValues``. Unknown sections or keys are rejected,
and every problem is reported as a ConfigError naming ``section.key``.
"""

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Union

from ..constants import DefaultValues, PolicyNames, Tolerances
from ..services.mdp_service import DiscretizationSpec, check_grid_closure
from ..services.simulation_service import ExperimentConfig
from ..services.training_service import TrainingConfig
from ..states.system import ModelSettings, StochasticModel, SystemParams
from .error_handling import ConfigError
from .validation import (
    validate_cost_name,
    validate_number_list,
    validate_policies,
    validate_positive_int,
    validate_positive_list,
    validate_positive_number,
    validate_probability,
    validate_rate_name,
    validate_sweep,
    validate_unknown_keys,
)

logger = logging.getLogger(__name__)

Validator = Callable[[Any], Dict[str, Any]]


def _flag(value: Any) -> Dict[str, Any]:
    if not isinstance(value, bool):
        return {"valid": False, "error": f"expected true or false, got {value!r}"}
    return {"valid": True, "error": "", "value": value}


def _layers(value: Any) -> Dict[str, Any]:
    if not isinstance(value, (list, tuple)):
        return {"valid": False, "error": f"expected a list of layer widths, got {value!r}"}
    for width in value:
        result = validate_positive_int(width)
        if not result["valid"]:
            return result
    return {"valid": True, "error": "", "value": tuple(int(w) for w in value)}


def _fraction(value: Any) -> Dict[str, Any]:
    result = validate_probability(value)
    if result["valid"] and result["value"] >= 1.0:
        return {"valid": False, "error": "must lie in [0, 1)"}
    return result


def _seed(value: Any) -> Dict[str, Any]:
    return validate_positive_int(value, minimum=0)


def _positive(value: Any) -> Dict[str, Any]:
    return validate_positive_number(value)


def _non_negative(value: Any) -> Dict[str, Any]:
    return validate_positive_number(value, allow_zero=True)


SCHEMA: Dict[str, Dict[str, Validator]] = {
    "system": {
        "num_users": validate_positive_int,
        "horizon": validate_positive_int,
        "r_max": _positive,
        "b_max": _positive,
        "cost_fn": validate_cost_name,
        "rate_fn": validate_rate_name,
    },
    "model": {
        "e_prob": validate_probability,
        "p_prob": validate_probability,
        "i_prob": validate_probability,
        "energy_unit": _non_negative,
        "channel_support": validate_positive_list,
        "channel_probs": validate_number_list,
        "weight_support": validate_number_list,
    },
    "discretization": {
        "step": _positive,
        "power_step": _positive,
        "rate_step": _positive,
    },
    "solver": {
        "ktol": _positive,
        "greedy_ktol": _positive,
    },
    "training": {
        "hidden_layers": _layers,
        "learning_rate": _positive,
        "momentum": _fraction,
        "batch_size": validate_positive_int,
        "epochs": validate_positive_int,
        "patience": validate_positive_int,
        "validation_fraction": _fraction,
        "seed": _seed,
        "num_paths": validate_positive_int,
    },
    "experiment": {
        "sweep_param": lambda v: {"valid": True, "error": "", "value": v},
        "sweep_values": validate_number_list,
        "episodes": validate_positive_int,
        "seed": _seed,
        "policies": validate_policies,
        "workers": validate_positive_int,
        "check_dominance": _flag,
    },
}


@dataclass(frozen=True)
class EhmacConfig:
    """Parsed configuration: the experiment plus the pieces single commands need."""

    experiment: ExperimentConfig
    source: Optional[Path] = None

    @property
    def params(self) -> SystemParams:
        return self.experiment.params

    @property
    def settings(self) -> ModelSettings:
        return self.experiment.model

    @property
    def model(self) -> StochasticModel:
        """Stochastic model at the configured (unswept) probabilities."""
        return self.settings.build(self.params.num_users)

    @property
    def training(self) -> TrainingConfig:
        return self.experiment.training

    def discretization(self) -> DiscretizationSpec:
        return self.experiment.discretization(self.model)

    def with_overrides(self, **overrides: Any) -> "EhmacConfig":
        """Copy with experiment fields replaced; ``None`` values are ignored."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        if not changes:
            return self
        return replace(self, experiment=replace(self.experiment, **changes))


def _validated_section(raw: Dict[str, Any], section: str) -> Dict[str, Any]:
    data = raw.get(section, {})
    if not isinstance(data, dict):
        raise ConfigError(section, "expected a table")
    unknown = validate_unknown_keys(section, data, SCHEMA[section])
    if unknown:
        raise ConfigError(unknown, "unknown key")
    values: Dict[str, Any] = {}
    for key, value in data.items():
        result = SCHEMA[section][key](value)
        if not result["valid"]:
            raise ConfigError(f"{section}.{key}", result["error"])
        values[key] = result["value"]
    return values


def parse_config(
    raw: Dict[str, Any], source: Optional[Path] = None, check_closure: bool = True
) -> EhmacConfig:
    """
    Build a validated configuration from a parsed TOML document.

    Args:
        raw: Mapping of section name to key/value table
        source: File the mapping came from, for logging only
        check_closure: Verify the MDP grid when the mdp policy is configured

    Returns:
        Validated configuration

    Raises:
        ConfigError: Naming the offending ``section.key``
        GridClosureError: If the MDP grid is not closed under the dynamics
    """
    unknown = validate_unknown_keys("", raw, SCHEMA)
    if unknown:
        raise ConfigError(unknown, "unknown section")
    system = _validated_section(raw, "system")
    model = _validated_section(raw, "model")
    grid = _validated_section(raw, "discretization")
    solver = _validated_section(raw, "solver")
    training = _validated_section(raw, "training")
    experiment = _validated_section(raw, "experiment")

    params = SystemParams.from_names(
        num_users=system.get("num_users", DefaultValues.NUM_USERS),
        horizon=system.get("horizon", DefaultValues.HORIZON),
        r_max=system.get("r_max", DefaultValues.R_MAX),
        b_max=system.get("b_max", DefaultValues.B_MAX),
        cost_fn=system.get("cost_fn", DefaultValues.COST_FN),
        rate_fn=system.get("rate_fn", DefaultValues.RATE_FN),
    )
    settings = ModelSettings(**model)
    settings.build(params.num_users)

    sweep = validate_sweep(
        experiment.get("sweep_param", DefaultValues.SWEEP_PARAM),
        list(experiment.get("sweep_values", DefaultValues.SWEEP_VALUES)),
    )
    if not sweep["valid"]:
        key = "sweep_param" if sweep.get("field") == "param" else "sweep_values"
        raise ConfigError(f"experiment.{key}", sweep["error"])

    num_paths = training.pop("num_paths", DefaultValues.NUM_PATHS)
    cfg = ExperimentConfig(
        params=params,
        model=settings,
        sweep_param=sweep["param"],
        sweep_values=sweep["values"],
        episodes=experiment.get("episodes", DefaultValues.EPISODES),
        seed=experiment.get("seed", DefaultValues.SEED),
        policies=experiment.get("policies", tuple(PolicyNames.ALL)),
        num_paths=num_paths,
        training=TrainingConfig(**training),
        grid_step=grid.get("step", DefaultValues.GRID_STEP),
        power_step=grid.get("power_step"),
        rate_step=grid.get("rate_step"),
        ktol=solver.get("ktol", Tolerances.SOLVER_KTOL),
        greedy_ktol=solver.get("greedy_ktol", Tolerances.GREEDY_KTOL),
        workers=experiment.get("workers", DefaultValues.WORKERS),
        check_dominance=experiment.get("check_dominance", True),
    )
    loaded = EhmacConfig(experiment=cfg, source=source)
    if check_closure and PolicyNames.MDP in cfg.policies:
        for value in cfg.sweep_values:
            swept = settings.with_value(cfg.sweep_param, value).build(params.num_users)
            check_grid_closure(cfg.discretization(swept), params, swept)
    logger.debug(f"Loaded configuration from {source or '<defaults>'}")
    return loaded


def load_config(path: Optional[Union[str, Path]] = None, check_closure: bool = True) -> EhmacConfig:
    """
    Read and validate a TOML experiment file; defaults when ``path`` is empty.

    Raises:
        ConfigError: If the file is unreadable, not TOML, or holds invalid values
    """
    if not path:
        return parse_config({}, check_closure=check_closure)
    path = Path(path)
    try:
        with path.open("rb") as handle:
            raw = tomllib.load(handle)
    except OSError as e:
        raise ConfigError("config", f"cannot read {path}: {e.strerror or e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError("config", f"{path} is not valid TOML: {e}") from e
    logger.info(f"Loading configuration from {path}")
    return parse_config(raw, source=path, check_closure=check_closure)
