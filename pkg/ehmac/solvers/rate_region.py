"""
Multiple-access achievable rate region.

A rate tuple rho is achievable for gains h and powers P when, for every
non-empty subset S of users, sum_{i in S} rho_i <= g(sum_{i in S} h_i P_i).
Subsets are enumerated explicitly as bitmasks; M stays small.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..constants import Tolerances
from ..states.functions import ScalarFunction
from ..utils.error_handling import DimensionError


@lru_cache(maxsize=32)
def subset_matrix(num_users: int) -> np.ndarray:
    """
    Indicator matrix of all non-empty subsets, one row per bitmask 1..2^M-1.

    Args:
        num_users: Number of users M

    Returns:
        Read-only (2^M - 1, M) array of 0/1 floats
    """
    masks = np.arange(1, 2**num_users)
    matrix = ((masks[:, None] >> np.arange(num_users)[None, :]) & 1).astype(float)
    matrix.setflags(write=False)
    return matrix


@dataclass(frozen=True, eq=False)
class RateRegionInstance:
    """Channel gains and powers defining one slot's rate region."""

    h: np.ndarray
    P: np.ndarray
    g: ScalarFunction

    def __post_init__(self):
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float))
        object.__setattr__(self, "P", np.asarray(self.P, dtype=float))
        if self.h.shape != self.P.shape or self.h.ndim != 1:
            raise DimensionError("h and P must be vectors of the same length")

    @property
    def num_users(self) -> int:
        return int(self.h.shape[0])

    def capacities(self) -> np.ndarray:
        """g(sum_{i in S} h_i P_i) for every subset S, ordered by bitmask."""
        return self.g(subset_matrix(self.num_users) @ (self.h * self.P))


def _check_rho(inst: RateRegionInstance, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.shape != inst.h.shape:
        raise DimensionError(f"rho has shape {rho.shape}, expected {inst.h.shape}")
    return rho


def is_rate_feasible(
    inst: RateRegionInstance, rho, tol: float = Tolerances.FEASIBILITY
) -> bool:
    """
    Check every subset-sum constraint of the region.

    Raises:
        DimensionError: If rho does not match the instance dimension
    """
    rho = _check_rho(inst, rho)
    loads = subset_matrix(inst.num_users) @ rho
    return bool(np.all(loads <= inst.capacities() + tol))


def max_single_user_rate(h_i: float, P_i: float, g: ScalarFunction) -> float:
    """Largest rate user i supports alone: g(h_i P_i)."""
    return float(g(h_i * P_i))


def max_feasible_scaling(inst: RateRegionInstance, rho) -> float:
    """
    Largest alpha in [0, 1] such that alpha * rho lies in the region.

    Equals min(1, min_S capacity(S) / load(S)) over subsets with positive load.
    """
    rho = _check_rho(inst, rho)
    loads = subset_matrix(inst.num_users) @ rho
    active = loads > 0
    if not np.any(active):
        return 1.0
    ratios = inst.capacities()[active] / loads[active]
    return float(min(1.0, max(0.0, ratios.min())))


def binding_subsets(inst: RateRegionInstance, rho, tol: float = 1e-6) -> np.ndarray:
    """Bitmasks of the subset constraints that hold with equality within ``tol``."""
    rho = _check_rho(inst, rho)
    slack = inst.capacities() - subset_matrix(inst.num_users) @ rho
    return np.flatnonzero(np.abs(slack) <= tol) + 1
