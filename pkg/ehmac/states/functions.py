"""
Registry of distortion (f) and rate (g) functions.

Each member is a small frozen dataclass exposing the value and its first
two derivatives, vectorized over numpy arrays. Members are selected by
name from configuration files so experiments stay declarative.
"""

from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np

from ..constants import RegistryNames
from ..utils.error_handling import ConfigError


@dataclass(frozen=True)
class ScalarFunction:
    """Base for registry members: value, first and second derivative."""

    name: str = ""

    def __call__(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def second_derivative(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class ExpDistortion(ScalarFunction):
    """f(x) = exp(x - r_max); f(r_max) = 1 and f(0) = exp(-r_max)."""

    name: str = RegistryNames.EXP_DISTORTION
    r_max: float = 4.0

    def __call__(self, x):
        return np.exp(np.asarray(x, dtype=float) - self.r_max)

    def derivative(self, x):
        return self(x)

    def second_derivative(self, x):
        return self(x)


@dataclass(frozen=True)
class QuadraticDistortion(ScalarFunction):
    """f(x) = (x / r_max)^2."""

    name: str = RegistryNames.QUADRATIC_DISTORTION
    r_max: float = 4.0

    def __call__(self, x):
        return (np.asarray(x, dtype=float) / self.r_max) ** 2

    def derivative(self, x):
        return 2.0 * np.asarray(x, dtype=float) / self.r_max**2

    def second_derivative(self, x):
        return np.full_like(np.asarray(x, dtype=float), 2.0 / self.r_max**2)


@dataclass(frozen=True)
class LogRate(ScalarFunction):
    """g(x) = ln(1 + x)."""

    name: str = RegistryNames.LOG_RATE

    def __call__(self, x):
        return np.log1p(np.asarray(x, dtype=float))

    def derivative(self, x):
        return 1.0 / (1.0 + np.asarray(x, dtype=float))

    def second_derivative(self, x):
        return -1.0 / (1.0 + np.asarray(x, dtype=float)) ** 2


@dataclass(frozen=True)
class Log2Rate(ScalarFunction):
    """g(x) = log2(1 + x)."""

    name: str = RegistryNames.LOG2_RATE

    def __call__(self, x):
        return np.log1p(np.asarray(x, dtype=float)) / np.log(2.0)

    def derivative(self, x):
        return 1.0 / ((1.0 + np.asarray(x, dtype=float)) * np.log(2.0))

    def second_derivative(self, x):
        return -1.0 / ((1.0 + np.asarray(x, dtype=float)) ** 2 * np.log(2.0))


_COST_FUNCTIONS: Dict[str, Callable[[float], ScalarFunction]] = {
    RegistryNames.EXP_DISTORTION: lambda r_max: ExpDistortion(r_max=r_max),
    RegistryNames.QUADRATIC_DISTORTION: lambda r_max: QuadraticDistortion(r_max=r_max),
}

_RATE_FUNCTIONS: Dict[str, Callable[[], ScalarFunction]] = {
    RegistryNames.LOG_RATE: LogRate,
    RegistryNames.LOG2_RATE: Log2Rate,
}


def cost_function(name: str, r_max: float) -> ScalarFunction:
    """
    Look up a distortion function by registry name.

    Args:
        name: Registry name, e.g. "exp-distortion"
        r_max: Bits per version; the function is normalized so f(r_max) = 1

    Returns:
        Distortion function instance

    Raises:
        ConfigError: If the name is unknown
    """
    if name not in _COST_FUNCTIONS:
        raise ConfigError(
            "system.cost_fn",
            f"unknown distortion '{name}', expected one of {sorted(_COST_FUNCTIONS)}",
        )
    return _COST_FUNCTIONS[name](float(r_max))


def rate_function(name: str) -> ScalarFunction:
    """
    Look up a rate function by registry name.

    Raises:
        ConfigError: If the name is unknown
    """
    if name not in _RATE_FUNCTIONS:
        raise ConfigError(
            "system.rate_fn",
            f"unknown rate function '{name}', expected one of {sorted(_RATE_FUNCTIONS)}",
        )
    return _RATE_FUNCTIONS[name]()


def available_cost_functions() -> list:
    return sorted(_COST_FUNCTIONS)


def available_rate_functions() -> list:
    return sorted(_RATE_FUNCTIONS)
