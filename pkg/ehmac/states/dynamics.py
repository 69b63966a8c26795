"""
Per-slot dynamics: battery, remaining bits, importance weight and stage cost.

Timing within slot t: arrivals E(t), A(t), W(t) and the channel h(t) are
revealed and the state is updated, then the action is chosen, then the
stage cost is charged.
"""

import logging
from typing import Union

import numpy as np

from ..constants import ErrorCodes, Tolerances
from ..utils.error_handling import CausalityError, DimensionError
from .system import Action, SamplePath, StochasticModel, SystemParams, SystemState

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def evolve_battery(B_prev: ArrayLike, P_prev: ArrayLike, E_new: ArrayLike, B_max: float):
    """
    Battery update B(t) = min(B(t-1) - P(t-1) + E(t), B_max).

    Raises:
        CausalityError: If P(t-1) exceeds B(t-1)
    """
    B_prev = np.asarray(B_prev, dtype=float)
    P_prev = np.asarray(P_prev, dtype=float)
    if np.any(P_prev > B_prev + Tolerances.FEASIBILITY):
        raise CausalityError(
            f"transmit power {P_prev} exceeds stored energy {B_prev}",
            ErrorCodes.ENERGY_CAUSALITY,
        )
    result = np.clip(np.minimum(B_prev - P_prev + np.asarray(E_new, dtype=float), B_max), 0.0, None)
    return float(result) if result.ndim == 0 else result


def evolve_bits(r_prev: ArrayLike, rho_prev: ArrayLike, A_new: ArrayLike, r_max: float):
    """
    Remaining-bits update: r(t-1) - rho(t-1) without arrival, r_max on arrival.

    Raises:
        CausalityError: If rho(t-1) exceeds r(t-1)
    """
    r_prev = np.asarray(r_prev, dtype=float)
    rho_prev = np.asarray(rho_prev, dtype=float)
    if np.any(rho_prev > r_prev + Tolerances.FEASIBILITY):
        raise CausalityError(
            f"transmitted bits {rho_prev} exceed remaining bits {r_prev}",
            ErrorCodes.BIT_CAUSALITY,
        )
    remaining = np.clip(r_prev - rho_prev, 0.0, None)
    result = np.where(np.asarray(A_new) == 1, r_max, remaining)
    return float(result) if result.ndim == 0 else result


def evolve_weight(w_prev: ArrayLike, A_new: ArrayLike, W_new: ArrayLike):
    """Weight update w(t) = w(t-1)(1 - A(t)) + W A(t)."""
    result = np.where(np.asarray(A_new) == 1, np.asarray(W_new, dtype=float),
                      np.asarray(w_prev, dtype=float))
    return float(result) if result.ndim == 0 else result


def is_energy_feasible(state: SystemState, action: Action, tol: float = Tolerances.FEASIBILITY) -> bool:
    """True when 0 <= P_i <= B_i for every user."""
    return bool(np.all(action.P <= state.B + tol))


def is_bit_feasible(state: SystemState, action: Action, tol: float = Tolerances.FEASIBILITY) -> bool:
    """True when 0 <= rho_i <= r_i for every user."""
    return bool(np.all(action.rho <= state.r + tol))


def stage_cost(state: SystemState, action: Action, params: SystemParams) -> float:
    """
    Weighted distortion of the bits left after this slot: sum_i w_i f(r_i - rho_i).

    Raises:
        CausalityError: If the action is not bit-feasible
        DimensionError: If state and action sizes differ
    """
    if action.P.shape != state.B.shape:
        raise DimensionError("state and action have different numbers of users")
    if not is_bit_feasible(state, action):
        raise CausalityError(
            f"transmitted bits {action.rho} exceed remaining bits {state.r}",
            ErrorCodes.BIT_CAUSALITY,
        )
    leftover = np.clip(state.r - action.rho, 0.0, None)
    return float(np.sum(state.w * params.cost_fn(leftover)))


def advance_state(
    state: SystemState, action: Action, path: SamplePath, slot: int, params: SystemParams
) -> SystemState:
    """
    Apply the arrivals of ``slot`` (0-based) to the previous state and action.

    Use ``SystemState.initial`` with ``Action.zeros`` for the first slot.
    """
    return SystemState(
        B=evolve_battery(state.B, action.P, path.energy[slot], params.b_max),
        r=evolve_bits(state.r, action.rho, path.arrivals[slot], params.r_max),
        h=path.channel[slot],
        w=evolve_weight(state.w, path.arrivals[slot], path.weights[slot]),
    )


def _draw(rng: np.random.Generator, support, probs, size: int) -> np.ndarray:
    return np.asarray(support, dtype=float)[rng.choice(len(support), size=size, p=probs)]


def sample_path(model: StochasticModel, params: SystemParams, seed: int) -> SamplePath:
    """
    Realize the i.i.d. energy, channel, arrival and weight processes.

    Deterministic for a fixed seed; each (process, user) column is drawn
    from its own distribution in a fixed order.
    """
    if model.num_users != params.num_users:
        raise DimensionError(
            f"model describes {model.num_users} users, params {params.num_users}"
        )
    rng = np.random.default_rng(seed)
    T, M = params.horizon, params.num_users
    energy = np.empty((T, M))
    channel = np.empty((T, M))
    arrivals = np.empty((T, M), dtype=np.int8)
    weights = np.empty((T, M))
    for i in range(M):
        energy[:, i] = _draw(rng, model.energy_support[i], model.energy_probs[i], T)
        channel[:, i] = _draw(rng, model.channel_support[i], model.channel_probs[i], T)
        arrivals[:, i] = rng.random(T) < model.arrival_probs[i]
        weights[:, i] = _draw(rng, model.weight_support, model.weight_probs, T)
    return SamplePath(energy=energy, channel=channel, arrivals=arrivals, weights=weights, seed=seed)
