"""
Domain types for the energy-harvesting multiple-access system.

All types are immutable value objects: numpy fields are copied and marked
read-only on construction, so instances can be shared across threads and
worker processes.
"""

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from ..constants import DefaultValues, Tolerances
from ..utils.error_handling import ConfigError, DimensionError
from .functions import ScalarFunction, cost_function, rate_function


def _frozen_array(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class SystemParams:
    """Static problem description: users, horizon, capacities and f, g."""

    num_users: int
    horizon: int
    r_max: float
    b_max: float
    cost_fn: ScalarFunction
    rate_fn: ScalarFunction

    def __post_init__(self):
        if int(self.num_users) < 1:
            raise ConfigError("system.num_users", "must be a positive integer")
        if int(self.horizon) < 1:
            raise ConfigError("system.horizon", "must be a positive integer")
        if not self.r_max > 0:
            raise ConfigError("system.r_max", "must be positive")
        if not self.b_max > 0:
            raise ConfigError("system.b_max", "must be positive")

        if abs(float(self.rate_fn(0.0))) > Tolerances.FEASIBILITY:
            raise ConfigError("system.rate_fn", "g(0) must equal 0")
        if abs(float(self.cost_fn(self.r_max)) - 1.0) > Tolerances.FEASIBILITY:
            raise ConfigError("system.cost_fn", "f(r_max) must equal 1")
        if float(self.cost_fn(0.0)) < 0:
            raise ConfigError("system.cost_fn", "f(0) must be non-negative")

        grid = np.linspace(0.0, self.r_max, 65)
        f_vals = self.cost_fn(grid)
        if np.any(np.diff(f_vals) < -Tolerances.FEASIBILITY):
            raise ConfigError("system.cost_fn", "f must be non-decreasing")
        if np.any(f_vals[1:-1] > 0.5 * (f_vals[:-2] + f_vals[2:]) + Tolerances.FEASIBILITY):
            raise ConfigError("system.cost_fn", "f must be convex")
        g_vals = self.rate_fn(np.linspace(0.0, 4.0 * max(self.b_max, 1.0), 65))
        if np.any(np.diff(g_vals) < -Tolerances.FEASIBILITY):
            raise ConfigError("system.rate_fn", "g must be non-decreasing")

    @classmethod
    def from_names(
        cls,
        num_users: int = DefaultValues.NUM_USERS,
        horizon: int = DefaultValues.HORIZON,
        r_max: float = DefaultValues.R_MAX,
        b_max: float = DefaultValues.B_MAX,
        cost_fn: str = DefaultValues.COST_FN,
        rate_fn: str = DefaultValues.RATE_FN,
    ) -> "SystemParams":
        """Build parameters with f and g resolved from the registry."""
        return cls(
            num_users=int(num_users),
            horizon=int(horizon),
            r_max=float(r_max),
            b_max=float(b_max),
            cost_fn=cost_function(cost_fn, r_max),
            rate_fn=rate_function(rate_fn),
        )


def _check_distribution(support_key: str, probs_key: str, support, probs, positive: bool = False) -> None:
    support = np.asarray(support, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if support.ndim != 1 or support.size == 0:
        raise ConfigError(support_key, "support must be a non-empty list")
    if support.shape != probs.shape:
        raise ConfigError(probs_key, "support and probabilities differ in length")
    if positive and np.any(support <= 0):
        raise ConfigError(support_key, "support values must be positive")
    if np.any(support < 0):
        raise ConfigError(support_key, "support values must be non-negative")
    if np.any(probs < 0):
        raise ConfigError(probs_key, "probabilities must be non-negative")
    if abs(probs.sum() - 1.0) > Tolerances.PROBABILITY_SUM:
        raise ConfigError(probs_key, f"probabilities sum to {probs.sum()!r}, expected 1")


@dataclass(frozen=True)
class StochasticModel:
    """
    Per-user i.i.d. models of energy, channel gain and version arrivals.

    ``energy_support[i]`` / ``energy_probs[i]`` describe E_i, likewise for the
    channel. ``arrival_probs[i]`` is P(A_i = 1). The importance weight W is
    shared by all users.
    """

    energy_support: Tuple[Tuple[float, ...], ...]
    energy_probs: Tuple[Tuple[float, ...], ...]
    channel_support: Tuple[Tuple[float, ...], ...]
    channel_probs: Tuple[Tuple[float, ...], ...]
    arrival_probs: Tuple[float, ...]
    weight_support: Tuple[float, ...]
    weight_probs: Tuple[float, ...]

    def __post_init__(self):
        m = len(self.arrival_probs)
        for name in ("energy_support", "energy_probs", "channel_support", "channel_probs"):
            if len(getattr(self, name)) != m:
                raise ConfigError(f"model.{name}", f"expected {m} per-user entries")
        for i in range(m):
            _check_distribution("model.energy_unit", "model.e_prob",
                                self.energy_support[i], self.energy_probs[i])
            _check_distribution("model.channel_support", "model.channel_probs",
                                self.channel_support[i], self.channel_probs[i], positive=True)
            if not 0.0 <= self.arrival_probs[i] <= 1.0:
                raise ConfigError("model.p_prob", "must lie in [0, 1]")
        _check_distribution("model.weight_support", "model.i_prob", self.weight_support, self.weight_probs)

    @property
    def num_users(self) -> int:
        return len(self.arrival_probs)

    @classmethod
    def symmetric(
        cls,
        num_users: int,
        energy_support: Sequence[float],
        energy_probs: Sequence[float],
        channel_support: Sequence[float],
        channel_probs: Sequence[float],
        p_prob: float,
        weight_support: Sequence[float],
        weight_probs: Sequence[float],
    ) -> "StochasticModel":
        """Build a model where every user shares the same distributions."""
        return cls(
            energy_support=tuple(tuple(map(float, energy_support)) for _ in range(num_users)),
            energy_probs=tuple(tuple(map(float, energy_probs)) for _ in range(num_users)),
            channel_support=tuple(tuple(map(float, channel_support)) for _ in range(num_users)),
            channel_probs=tuple(tuple(map(float, channel_probs)) for _ in range(num_users)),
            arrival_probs=tuple(float(p_prob) for _ in range(num_users)),
            weight_support=tuple(map(float, weight_support)),
            weight_probs=tuple(map(float, weight_probs)),
        )

    @classmethod
    def from_probabilities(
        cls,
        num_users: int = DefaultValues.NUM_USERS,
        e_prob: float = DefaultValues.E_PROB,
        p_prob: float = DefaultValues.P_PROB,
        i_prob: float = DefaultValues.I_PROB,
        energy_unit: float = DefaultValues.ENERGY_UNIT,
        channel_support: Sequence[float] = DefaultValues.CHANNEL_SUPPORT,
        channel_probs: Sequence[float] = DefaultValues.CHANNEL_PROBS,
        weight_support: Sequence[float] = DefaultValues.WEIGHT_SUPPORT,
    ) -> "StochasticModel":
        """
        Two-point energy and weight model used throughout the experiments.

        A unit of energy arrives w.p. ``e_prob``; a version arrives w.p.
        ``p_prob``; its weight is the larger support value w.p. ``i_prob``.
        """
        low, high = float(weight_support[0]), float(weight_support[-1])
        return cls.symmetric(
            num_users=num_users,
            energy_support=(0.0, energy_unit),
            energy_probs=(1.0 - e_prob, e_prob),
            channel_support=channel_support,
            channel_probs=channel_probs,
            p_prob=p_prob,
            weight_support=(low, high),
            weight_probs=(1.0 - i_prob, i_prob),
        )


@dataclass(frozen=True, eq=False)
class SystemState:
    """Per-slot state s(t) = (B, r, h, w) across users."""

    B: np.ndarray
    r: np.ndarray
    h: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        for name in ("B", "r", "h", "w"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        m = self.B.shape
        if self.r.shape != m or self.h.shape != m or self.w.shape != m or len(m) != 1:
            raise DimensionError("state vectors B, r, h, w must share one dimension")

    @property
    def num_users(self) -> int:
        return int(self.B.shape[0])

    def validate(self, params: SystemParams) -> None:
        """Check 0 <= B <= B_max and 0 <= r <= r_max."""
        tol = Tolerances.FEASIBILITY
        if self.num_users != params.num_users:
            raise DimensionError(f"state has {self.num_users} users, expected {params.num_users}")
        if np.any(self.B < -tol) or np.any(self.B > params.b_max + tol):
            raise ConfigError("state.B", "battery outside [0, B_max]")
        if np.any(self.r < -tol) or np.any(self.r > params.r_max + tol):
            raise ConfigError("state.r", "remaining bits outside [0, r_max]")

    def as_vector(self) -> np.ndarray:
        """Concatenate (B, r, h, w) into one 4M feature vector."""
        return np.concatenate([self.B, self.r, self.h, self.w])

    @classmethod
    def initial(cls, num_users: int) -> "SystemState":
        """State before slot 1: empty batteries, no bits, no weight."""
        zeros = np.zeros(num_users)
        return cls(B=zeros, r=zeros, h=zeros, w=zeros)


@dataclass(frozen=True, eq=False)
class Action:
    """Per-slot action a(t) = (P, rho) across users."""

    P: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "P", _frozen_array(self.P))
        object.__setattr__(self, "rho", _frozen_array(self.rho))
        if self.P.shape != self.rho.shape or self.P.ndim != 1:
            raise DimensionError("action vectors P and rho must share one dimension")
        if np.any(self.P < 0) or np.any(self.rho < 0):
            raise ValueError("transmit power and bits must be non-negative")

    @classmethod
    def zeros(cls, num_users: int) -> "Action":
        return cls(P=np.zeros(num_users), rho=np.zeros(num_users))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.P, self.rho])


@dataclass(frozen=True, eq=False)
class SamplePath:
    """A full realization of (E, h, A, W) for t = 1..T (rows) and users (columns)."""

    energy: np.ndarray
    channel: np.ndarray
    arrivals: np.ndarray
    weights: np.ndarray
    seed: Optional[int] = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "energy", _frozen_array(self.energy))
        object.__setattr__(self, "channel", _frozen_array(self.channel))
        object.__setattr__(self, "arrivals", _frozen_array(self.arrivals, dtype=np.int8))
        object.__setattr__(self, "weights", _frozen_array(self.weights))
        shape = self.energy.shape
        if len(shape) != 2:
            raise DimensionError("sample path arrays must be T x M")
        for name in ("channel", "arrivals", "weights"):
            if getattr(self, name).shape != shape:
                raise DimensionError(f"sample path field {name} has shape "
                                     f"{getattr(self, name).shape}, expected {shape}")
        if not np.all(np.isin(self.arrivals, (0, 1))):
            raise ValueError("arrival indicators must be 0 or 1")

    @property
    def horizon(self) -> int:
        return int(self.energy.shape[0])

    @property
    def num_users(self) -> int:
        return int(self.energy.shape[1])


@dataclass(frozen=True)
class ModelSettings:
    """
    Scalar knobs of the two-point stochastic model, as read from config files.

    ``with_value`` returns a copy with one probability replaced, which is
    how experiments sweep e_prob, p_prob or i_prob.
    """

    e_prob: float = DefaultValues.E_PROB
    p_prob: float = DefaultValues.P_PROB
    i_prob: float = DefaultValues.I_PROB
    energy_unit: float = DefaultValues.ENERGY_UNIT
    channel_support: Tuple[float, ...] = DefaultValues.CHANNEL_SUPPORT
    channel_probs: Tuple[float, ...] = DefaultValues.CHANNEL_PROBS
    weight_support: Tuple[float, ...] = DefaultValues.WEIGHT_SUPPORT

    def __post_init__(self):
        for name in ("e_prob", "p_prob", "i_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"model.{name}", f"{value} is outside [0, 1]")
        if self.energy_unit < 0:
            raise ConfigError("model.energy_unit", "must be non-negative")

    def with_value(self, name: str, value: float) -> "ModelSettings":
        if name not in ("e_prob", "p_prob", "i_prob"):
            raise ConfigError("experiment.sweep_param", f"cannot sweep '{name}'")
        return replace(self, **{name: float(value)})

    def build(self, num_users: int) -> StochasticModel:
        return StochasticModel.from_probabilities(
            num_users=num_users,
            e_prob=self.e_prob,
            p_prob=self.p_prob,
            i_prob=self.i_prob,
            energy_unit=self.energy_unit,
            channel_support=self.channel_support,
            channel_probs=self.channel_probs,
            weight_support=self.weight_support,
        )
