"""
Finite-horizon dynamic programming over a discretized state/action grid.

Per-user state index: ((b * n_r + r) * n_h + h) * n_w + w over the battery,
remaining-bits, channel and weight grids. The value table of slot t has one
axis per user. Joint actions are enumerated lexicographically in
(P_1..P_M, rho_1..rho_M) grid order, so ``argmin`` yields the
lexicographically smallest minimizer.

The expectation over next-slot randomness is applied per user through a
post-decision kernel: after the action, user i sits in (B - P, r - rho, w);
its next state then depends only on that user's energy, arrival, weight and
channel draws. The continuation of slot t is V_{t+1} contracted with each
user's kernel along that user's axis.
"""

import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..constants import DefaultValues, FileFormats, Tolerances
from ..solvers.rate_region import subset_matrix
from ..states.system import Action, StochasticModel, SystemParams, SystemState
from ..utils.error_handling import ConfigError, GridClosureError, log_function_call

logger = logging.getLogger(__name__)


def _uniform_grid(top: float, step: float, key: str) -> Tuple[float, ...]:
    count = top / step
    if step <= 0 or abs(count - round(count)) > 1e-9:
        raise ConfigError(key, f"step {step} does not divide {top}")
    return tuple(float(v) for v in np.linspace(0.0, top, int(round(count)) + 1))


def _grid_lookup(grid: np.ndarray, values) -> np.ndarray:
    """Index of each value on ``grid`` or -1 when it is off-grid."""
    values = np.asarray(values, dtype=float)
    idx = np.clip(np.searchsorted(grid, values - Tolerances.GRID_MATCH), 0, len(grid) - 1)
    on_grid = np.abs(grid[idx] - values) <= Tolerances.GRID_MATCH
    return np.where(on_grid, idx, -1)


def _floor_index(grid: np.ndarray, value: float) -> int:
    return int(max(np.searchsorted(grid, value + Tolerances.GRID_MATCH, side="right") - 1, 0))


@dataclass(frozen=True)
class DiscretizationSpec:
    """
    Grids of the dynamic program.

    ``channel_support`` holds one tuple per user; ``weight_grid`` must
    contain 0 for users that have not received a version yet.
    """

    battery_grid: Tuple[float, ...]
    bits_grid: Tuple[float, ...]
    power_grid: Tuple[float, ...]
    rate_grid: Tuple[float, ...]
    channel_support: Tuple[Tuple[float, ...], ...]
    weight_grid: Tuple[float, ...]

    def __post_init__(self):
        for name in ("battery_grid", "bits_grid", "power_grid", "rate_grid", "weight_grid"):
            grid = np.asarray(getattr(self, name), dtype=float)
            if grid.ndim != 1 or grid.size == 0:
                raise ConfigError(f"discretization.{name}", "must be a non-empty list")
            if np.any(np.diff(grid) <= 0):
                raise ConfigError(f"discretization.{name}", "must be strictly ascending")
            if grid[0] != 0.0:
                raise ConfigError(f"discretization.{name}", "must start at 0")
        for support in self.channel_support:
            if len(support) == 0 or np.any(np.diff(support) <= 0) or min(support) <= 0:
                raise ConfigError(
                    "discretization.channel_support", "must be positive and strictly ascending"
                )

    @classmethod
    def uniform(
        cls,
        params: SystemParams,
        model: StochasticModel,
        step: float = DefaultValues.GRID_STEP,
        power_step: Optional[float] = None,
        rate_step: Optional[float] = None,
    ) -> "DiscretizationSpec":
        """Evenly spaced grids on [0, B_max] and [0, r_max]; supports taken from the model."""
        battery = _uniform_grid(params.b_max, step, "discretization.step")
        bits = _uniform_grid(params.r_max, step, "discretization.step")
        return cls(
            battery_grid=battery,
            bits_grid=bits,
            power_grid=_uniform_grid(params.b_max, power_step or step, "discretization.power_step"),
            rate_grid=_uniform_grid(params.r_max, rate_step or step, "discretization.rate_step"),
            channel_support=tuple(tuple(map(float, s)) for s in model.channel_support),
            weight_grid=tuple(sorted({0.0, *map(float, model.weight_support)})),
        )

    @property
    def num_users(self) -> int:
        return len(self.channel_support)

    def user_state_shape(self, user: int) -> Tuple[int, int, int, int]:
        return (
            len(self.battery_grid),
            len(self.bits_grid),
            len(self.channel_support[user]),
            len(self.weight_grid),
        )

    def user_state_count(self, user: int) -> int:
        return int(np.prod(self.user_state_shape(user)))

    @property
    def table_shape(self) -> Tuple[int, ...]:
        return tuple(self.user_state_count(i) for i in range(self.num_users))

    def state_index(self, state: SystemState, snap: bool = False) -> Tuple[int, ...]:
        """
        Per-user grid indices of a state.

        With ``snap`` the battery, bits and channel are floored to the grid
        (never certifying more than is available) and the weight is taken
        to the nearest grid value. Without it an off-grid state raises
        GridClosureError.
        """
        battery = np.asarray(self.battery_grid)
        bits = np.asarray(self.bits_grid)
        weights = np.asarray(self.weight_grid)
        indices = []
        for i in range(state.num_users):
            channel = np.asarray(self.channel_support[i])
            if snap:
                b = _floor_index(battery, state.B[i])
                r = _floor_index(bits, state.r[i])
                h = _floor_index(channel, state.h[i])
                w = int(np.argmin(np.abs(weights - state.w[i])))
            else:
                b, r, h, w = (
                    int(_grid_lookup(grid, value))
                    for grid, value in (
                        (battery, state.B[i]),
                        (bits, state.r[i]),
                        (channel, state.h[i]),
                        (weights, state.w[i]),
                    )
                )
                if min(b, r, h, w) < 0:
                    raise GridClosureError(f"state of user {i + 1} is not on the grid")
            _, n_r, n_h, n_w = self.user_state_shape(i)
            indices.append(((b * n_r + r) * n_h + h) * n_w + w)
        return tuple(indices)

    def state_at(self, indices: Sequence[int]) -> SystemState:
        """Inverse of ``state_index`` for on-grid states."""
        columns = []
        for i, s in enumerate(indices):
            b, r, h, w = np.unravel_index(int(s), self.user_state_shape(i))
            columns.append(
                (self.battery_grid[b], self.bits_grid[r], self.channel_support[i][h], self.weight_grid[w])
            )
        B, r, h, w = (np.array(col) for col in zip(*columns))
        return SystemState(B=B, r=r, h=h, w=w)

    def to_dict(self) -> Dict[str, list]:
        return {
            "battery_grid": list(self.battery_grid),
            "bits_grid": list(self.bits_grid),
            "power_grid": list(self.power_grid),
            "rate_grid": list(self.rate_grid),
            "channel_support": [list(s) for s in self.channel_support],
            "weight_grid": list(self.weight_grid),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, list]) -> "DiscretizationSpec":
        return cls(
            battery_grid=tuple(data["battery_grid"]),
            bits_grid=tuple(data["bits_grid"]),
            power_grid=tuple(data["power_grid"]),
            rate_grid=tuple(data["rate_grid"]),
            channel_support=tuple(tuple(s) for s in data["channel_support"]),
            weight_grid=tuple(data["weight_grid"]),
        )


def check_grid_closure(spec: DiscretizationSpec, params: SystemParams, model: StochasticModel) -> None:
    """
    Verify every reachable transition stays on the grid.

    Raises:
        GridClosureError: Naming the first transition that leaves the grid
    """
    if spec.num_users != params.num_users or model.num_users != params.num_users:
        raise GridClosureError("grid, model and params disagree on the number of users")
    battery = np.asarray(spec.battery_grid)
    bits = np.asarray(spec.bits_grid)
    if battery[-1] > params.b_max + Tolerances.GRID_MATCH:
        raise GridClosureError("battery grid exceeds B_max")
    if _grid_lookup(bits, params.r_max) < 0:
        raise GridClosureError("r_max is not on the remaining-bits grid")
    if bits[-1] > params.r_max + Tolerances.GRID_MATCH:
        raise GridClosureError("remaining-bits grid exceeds r_max")

    for b in battery:
        for p in spec.power_grid:
            if p <= b + Tolerances.GRID_MATCH and _grid_lookup(battery, b - p) < 0:
                raise GridClosureError(f"battery {b} minus power {p} leaves the grid")
    for r in bits:
        for rho in spec.rate_grid:
            if rho <= r + Tolerances.GRID_MATCH and _grid_lookup(bits, r - rho) < 0:
                raise GridClosureError(f"bits {r} minus rate {rho} leave the grid")

    for i in range(model.num_users):
        for e, prob in zip(model.energy_support[i], model.energy_probs[i]):
            if prob == 0:
                continue
            landing = _grid_lookup(battery, np.minimum(battery + e, params.b_max))
            if np.any(landing < 0):
                raise GridClosureError(f"energy arrival {e} of user {i + 1} leaves the battery grid")
        if len(model.channel_support[i]) != len(spec.channel_support[i]) or not np.allclose(
            model.channel_support[i], spec.channel_support[i]
        ):
            raise GridClosureError(f"channel support of user {i + 1} differs from the grid")
    if np.any(_grid_lookup(np.asarray(spec.weight_grid), model.weight_support) < 0):
        raise GridClosureError("weight support is not contained in the weight grid")
    if _grid_lookup(np.asarray(spec.weight_grid), 0.0) < 0:
        raise GridClosureError("weight grid must contain 0")


@dataclass
class RecursionStats:
    """Work counters of one backward recursion."""

    mode: str = "full"
    action_evaluations: int = 0
    fallback_states: int = 0
    states_per_layer: int = 0
    layers: int = 0


@dataclass(frozen=True, eq=False)
class ValueTable:
    """V_t for t = 1..T; ``values[t - 1]`` has one axis per user."""

    spec: DiscretizationSpec
    values: np.ndarray

    @property
    def horizon(self) -> int:
        return int(self.values.shape[0])

    def layer(self, t: int) -> np.ndarray:
        return self.values[t - 1]

    def value(self, t: int, state: SystemState) -> float:
        return float(self.values[t - 1][self.spec.state_index(state)])


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """
    Argmin joint-action index per state and slot.

    ``power_choices[a]`` and ``rate_choices[a]`` decode joint action ``a``.
    """

    spec: DiscretizationSpec
    actions: np.ndarray
    power_choices: np.ndarray
    rate_choices: np.ndarray
    stats: RecursionStats = field(default_factory=RecursionStats)

    @property
    def horizon(self) -> int:
        return int(self.actions.shape[0])

    def action_at(self, t: int, indices: Sequence[int]) -> Action:
        a = int(self.actions[t - 1][tuple(indices)])
        return Action(P=self.power_choices[a], rho=self.rate_choices[a])

    def action(self, t: int, state: SystemState) -> Action:
        return self.action_at(t, self.spec.state_index(state))


class _UserTables:
    """Per-user feasibility, stage cost, post-decision index and next-state kernel."""

    def __init__(self, user: int, spec: DiscretizationSpec, params: SystemParams, model: StochasticModel):
        self.user = user
        battery = np.asarray(spec.battery_grid)
        bits = np.asarray(spec.bits_grid)
        weights = np.asarray(spec.weight_grid)
        power = np.asarray(spec.power_grid)
        rate = np.asarray(spec.rate_grid)
        n_b, n_r, n_h, n_w = spec.user_state_shape(user)
        self.shape = (n_b, n_r, n_h, n_w)
        self.num_states = n_b * n_r * n_h * n_w
        self.num_post = n_b * n_r * n_w

        b_idx, r_idx, h_idx, w_idx = (a.ravel() for a in np.indices(self.shape))
        p_idx, q_idx = (a.ravel() for a in np.indices((len(power), len(rate))))
        B = battery[b_idx][:, None]
        r = bits[r_idx][:, None]
        w = weights[w_idx][:, None]
        P = power[p_idx][None, :]
        rho = rate[q_idx][None, :]

        tol = Tolerances.FEASIBILITY
        self.feasible = (P <= B + tol) & (rho <= r + tol)
        leftover = np.clip(r - rho, 0.0, None)
        self.stage = np.where(self.feasible, w * params.cost_fn(leftover), 0.0)

        b_post = _grid_lookup(battery, np.clip(B - P, 0.0, None))
        r_post = _grid_lookup(bits, leftover)
        if np.any(self.feasible & ((b_post < 0) | (r_post < 0))):
            raise GridClosureError(f"post-decision state of user {user + 1} leaves the grid")
        post = (b_post * n_r + r_post) * n_w + w_idx[:, None]
        self.post = np.where(self.feasible, post, -1)
        self.kernel = self._build_kernel(battery, bits, weights, params, model)

    def _build_kernel(self, battery, bits, weights, params, model) -> np.ndarray:
        i = self.user
        n_b, n_r, n_h, n_w = self.shape
        kernel = np.zeros((self.num_post, self.num_states))
        bp, rp, wp = (a.ravel() for a in np.indices((n_b, n_r, n_w)))
        rows = np.arange(self.num_post)
        r_full = int(_grid_lookup(bits, params.r_max))
        arrival = ((0, 1.0 - model.arrival_probs[i]), (1, model.arrival_probs[i]))
        for (e, pe), (a, pa), (W, pw), (h, ph) in itertools.product(
            zip(model.energy_support[i], model.energy_probs[i]),
            arrival,
            zip(model.weight_support, model.weight_probs),
            enumerate(model.channel_probs[i]),
        ):
            prob = pe * pa * pw * ph
            if prob == 0:
                continue
            b_next = _grid_lookup(battery, np.minimum(battery[bp] + e, params.b_max))
            if np.any(b_next < 0):
                raise GridClosureError(f"energy arrival {e} of user {i + 1} leaves the battery grid")
            r_next = np.full_like(rp, r_full) if a else rp
            w_next = np.full_like(wp, int(_grid_lookup(weights, W))) if a else wp
            cols = ((b_next * n_r + r_next) * n_h + h) * n_w + w_next
            np.add.at(kernel, (rows, cols), prob)
        return kernel


class _RecursionPlan:
    """Joint action enumeration and per-chunk array assembly."""

    def __init__(self, spec: DiscretizationSpec, params: SystemParams, model: StochasticModel):
        self.spec = spec
        self.params = params
        self.M = params.num_users
        self.users = [_UserTables(i, spec, params, model) for i in range(self.M)]
        n_p, n_q = len(spec.power_grid), len(spec.rate_grid)
        joint = np.array(
            list(itertools.product(*([range(n_p)] * self.M + [range(n_q)] * self.M))),
            dtype=np.int64,
        ).reshape(-1, 2 * self.M)
        self.power_idx = joint[:, : self.M]
        self.rate_idx = joint[:, self.M:]
        self.user_action = self.power_idx * n_q + self.rate_idx
        self.power_choices = np.asarray(spec.power_grid)[self.power_idx]
        self.rate_choices = np.asarray(spec.rate_grid)[self.rate_idx]
        self.num_actions = joint.shape[0]

    def rate_masks(self):
        """Yield (channel index combo, rate-feasible mask over joint actions)."""
        subsets = subset_matrix(self.M)
        loads = self.rate_choices @ subsets.T
        for combo in itertools.product(*(range(len(s)) for s in self.spec.channel_support)):
            h = np.array([self.spec.channel_support[i][c] for i, c in enumerate(combo)])
            capacity = self.params.rate_fn((self.power_choices * h) @ subsets.T)
            yield combo, np.all(loads <= capacity + Tolerances.FEASIBILITY, axis=1)

    def chunk_states(self, combo: Tuple[int, ...], b0: int) -> List[np.ndarray]:
        """State indices of user 0 at battery ``b0`` and of the others, all at channel ``combo``."""
        lists = []
        for i, user in enumerate(self.users):
            n_b, n_r, n_h, n_w = user.shape
            b = np.array([b0]) if i == 0 else np.arange(n_b)
            bb, rr, ww = np.meshgrid(b, np.arange(n_r), np.arange(n_w), indexing="ij")
            lists.append((((bb * n_r + rr) * n_h + combo[i]) * n_w + ww).ravel())
        return lists

    def _spread(self, table: np.ndarray, i: int, states: np.ndarray) -> np.ndarray:
        part = table[states][:, self.user_action[:, i]]
        shape = [1] * self.M + [self.num_actions]
        shape[i] = len(states)
        return part.reshape(shape)

    def chunk_arrays(self, lists: List[np.ndarray], rate_ok: np.ndarray):
        stage = self._spread(self.users[0].stage, 0, lists[0])
        feasible = self._spread(self.users[0].feasible, 0, lists[0]) & rate_ok
        for i in range(1, self.M):
            stage = stage + self._spread(self.users[i].stage, i, lists[i])
            feasible = feasible & self._spread(self.users[i].feasible, i, lists[i])
        posts = [user.post[states][:, self.user_action[:, i]]
                 for i, (user, states) in enumerate(zip(self.users, lists))]
        shape = tuple(len(s) for s in lists) + (self.num_actions,)
        return np.broadcast_to(stage, shape), np.broadcast_to(feasible, shape), posts

    def continuation(self, next_values: Optional[np.ndarray]) -> np.ndarray:
        """E[V_{t+1}] indexed by the users' post-decision states."""
        if next_values is None:
            return np.zeros(tuple(user.num_post for user in self.users))
        C = next_values
        for i, user in enumerate(self.users):
            C = np.moveaxis(np.tensordot(user.kernel, C, axes=([1], [i])), 0, i)
        return C


def _evaluate(Q, mask, stage, posts, C, stats: RecursionStats) -> None:
    idx = np.nonzero(mask)
    if idx[0].size == 0:
        return
    post_index = tuple(posts[i][idx[i], idx[-1]] for i in range(len(posts)))
    Q[idx] = stage[idx] + C[post_index]
    stats.action_evaluations += int(idx[0].size)


def _solve_layer(plan: _RecursionPlan, C: np.ndarray, value_layer, policy_layer,
                 monotone: bool, stats: RecursionStats) -> None:
    c_min = float(C.min())
    P0 = plan.power_idx[:, 0]
    R0 = plan.rate_idx[:, 0]
    for combo, rate_ok in plan.rate_masks():
        previous = None
        for b0 in range(plan.users[0].shape[0]):
            lists = plan.chunk_states(combo, b0)
            stage, feasible, posts = plan.chunk_arrays(lists, rate_ok)
            Q = np.full(stage.shape, np.inf)
            if monotone and previous is not None:
                keep = (P0 >= P0[previous][..., None]) & (R0 >= R0[previous][..., None])
                _evaluate(Q, feasible & keep, stage, posts, C, stats)
                excluded = feasible & ~keep
                bound = np.where(excluded, stage, np.inf).min(axis=-1) + c_min
                fallback = Q.min(axis=-1) >= bound
                if np.any(fallback):
                    stats.fallback_states += int(fallback.sum())
                    _evaluate(Q, excluded & fallback[..., None], stage, posts, C, stats)
            else:
                _evaluate(Q, feasible, stage, posts, C, stats)
            choice = Q.argmin(axis=-1)
            block = np.ix_(*lists)
            value_layer[block] = np.take_along_axis(Q, choice[..., None], axis=-1)[..., 0]
            policy_layer[block] = choice
            previous = choice


def _recursion(params, model, spec, monotone: bool) -> Tuple[ValueTable, PolicyTable]:
    check_grid_closure(spec, params, model)
    plan = _RecursionPlan(spec, params, model)
    T = params.horizon
    shape = spec.table_shape
    values = np.empty((T,) + shape)
    actions = np.empty((T,) + shape, dtype=np.int32)
    stats = RecursionStats(mode="monotone" if monotone else "full",
                           states_per_layer=int(np.prod(shape)), layers=T)
    next_values = None
    for t in range(T, 0, -1):
        C = plan.continuation(next_values)
        _solve_layer(plan, C, values[t - 1], actions[t - 1], monotone, stats)
        next_values = values[t - 1]
        logger.debug(f"Solved layer t={t} ({stats.mode}), evaluations so far {stats.action_evaluations}")
    logger.info(
        f"Backward recursion ({stats.mode}) finished: T={T}, states/layer={stats.states_per_layer}, "
        f"joint actions={plan.num_actions}, evaluations={stats.action_evaluations}, "
        f"fallbacks={stats.fallback_states}"
    )
    values.setflags(write=False)
    actions.setflags(write=False)
    return (
        ValueTable(spec=spec, values=values),
        PolicyTable(spec=spec, actions=actions, power_choices=plan.power_choices,
                    rate_choices=plan.rate_choices, stats=stats),
    )


def backward_recursion(
    params: SystemParams, model: StochasticModel, spec: DiscretizationSpec
) -> Tuple[ValueTable, PolicyTable]:
    """
    Exact backward recursion evaluating every feasible joint action.

    Raises:
        GridClosureError: If the grids are not closed under the dynamics
    """
    log_function_call("backward_recursion", M=params.num_users, T=params.horizon)
    return _recursion(params, model, spec, monotone=False)


def monotone_backward_recursion(
    params: SystemParams, model: StochasticModel, spec: DiscretizationSpec
) -> Tuple[ValueTable, PolicyTable]:
    """
    Backward recursion with candidate pruning along user 1's battery axis.

    Walking the battery grid upward, only actions whose (P_1, rho_1) are at
    least the previous state's argmin are evaluated. A state falls back to
    the excluded actions whenever the pruned minimum is not strictly below
    their lower bound (stage cost plus the smallest continuation), so
    values and argmins equal those of ``backward_recursion``.
    """
    log_function_call("monotone_backward_recursion", M=params.num_users, T=params.horizon)
    return _recursion(params, model, spec, monotone=True)


def enumerate_feasible_actions(
    state: SystemState, spec: DiscretizationSpec, params: SystemParams
) -> List[Action]:
    """Grid actions with P <= B, rho <= r and rho in the rate region, lexicographically ordered."""
    M = state.num_users
    n_p, n_q = len(spec.power_grid), len(spec.rate_grid)
    joint = np.array(list(itertools.product(*([range(n_p)] * M + [range(n_q)] * M)))).reshape(-1, 2 * M)
    P = np.asarray(spec.power_grid)[joint[:, :M]]
    rho = np.asarray(spec.rate_grid)[joint[:, M:]]
    tol = Tolerances.FEASIBILITY
    subsets = subset_matrix(M)
    capacity = params.rate_fn((P * state.h) @ subsets.T)
    ok = (
        np.all(P <= state.B + tol, axis=1)
        & np.all(rho <= state.r + tol, axis=1)
        & np.all(rho @ subsets.T <= capacity + tol, axis=1)
    )
    return [Action(P=P[k], rho=rho[k]) for k in np.flatnonzero(ok)]


def _user_outcomes(i, post_b, post_r, w, spec, params, model):
    """Next-state (probability, b, r, h, w) grid indices of one user from a post-decision state."""
    battery = np.asarray(spec.battery_grid)
    bits = np.asarray(spec.bits_grid)
    weights = np.asarray(spec.weight_grid)
    outcomes = []
    arrival = ((0, 1.0 - model.arrival_probs[i]), (1, model.arrival_probs[i]))
    for (e, pe), (a, pa), (W, pw), (h, ph) in itertools.product(
        zip(model.energy_support[i], model.energy_probs[i]),
        arrival,
        zip(model.weight_support, model.weight_probs),
        enumerate(model.channel_probs[i]),
    ):
        prob = pe * pa * pw * ph
        if prob == 0:
            continue
        b = int(_grid_lookup(battery, min(post_b + e, params.b_max)))
        r = int(_grid_lookup(bits, params.r_max if a else post_r))
        wi = int(_grid_lookup(weights, W if a else w))
        if min(b, r, wi) < 0:
            raise GridClosureError(f"next state of user {i + 1} leaves the grid")
        outcomes.append((prob, b, r, h, wi))
    return outcomes


def transition_expectation(
    state: SystemState,
    action: Action,
    next_values: Optional[np.ndarray],
    model: StochasticModel,
    spec: DiscretizationSpec,
    params: SystemParams,
) -> float:
    """
    Stage cost plus the expected next-slot value of one state-action pair.

    Enumerates the product of every user's (E, A, W, h) outcomes with
    factorized probabilities. ``next_values`` is None in the last slot.

    Raises:
        GridClosureError: If an evolved state leaves the grid
    """
    from ..states.dynamics import stage_cost

    cost = stage_cost(state, action, params)
    if next_values is None:
        return cost
    per_user = [
        _user_outcomes(i, state.B[i] - action.P[i], state.r[i] - action.rho[i], state.w[i],
                       spec, params, model)
        for i in range(state.num_users)
    ]
    expectation = 0.0
    for combo in itertools.product(*per_user):
        prob = 1.0
        index = []
        for i, (p, b, r, h, w) in enumerate(combo):
            _, n_r, n_h, n_w = spec.user_state_shape(i)
            prob *= p
            index.append(((b * n_r + r) * n_h + h) * n_w + w)
        expectation += prob * float(next_values[tuple(index)])
    return cost + expectation


def mdp_act(state: SystemState, t: int, policy: PolicyTable) -> Action:
    """Look up the stored action of slot ``t`` (1-based) at the floor-snapped state."""
    return policy.action_at(t, policy.spec.state_index(state, snap=True))


def expected_initial_value(
    values: ValueTable, params: SystemParams, model: StochasticModel
) -> float:
    """
    Expected optimal objective from the all-zero initial condition, normalized by 1/(TM).

    The first slot's state is the zero state after one round of arrivals,
    which is the post-decision state (0, 0, 0) of every user.
    """
    plan_users = [_UserTables(i, values.spec, params, model) for i in range(params.num_users)]
    result = values.layer(1)
    for user in reversed(plan_users):
        result = result @ user.kernel[0]
    return float(result) / (params.horizon * params.num_users)


@dataclass(frozen=True)
class StructureViolation:
    """A grid position where a table breaks an expected shape property."""

    t: int
    user: int
    axis: str
    quantity: str
    position: Tuple[int, ...]
    magnitude: float


def _user_axes(spec: DiscretizationSpec) -> Tuple[int, ...]:
    shape: Tuple[int, ...] = ()
    for i in range(spec.num_users):
        shape += spec.user_state_shape(i)
    return shape


def convexity_report(values: ValueTable, tol: float = Tolerances.CONVEXITY) -> List[StructureViolation]:
    """
    Discrete midpoint-convexity violations of V_t along each battery and bits axis.

    Only uniform grids are checked. Violations are logged, never raised.
    """
    spec = values.spec
    expanded = _user_axes(spec)
    violations: List[StructureViolation] = []
    for t in range(1, values.horizon + 1):
        V = values.layer(t).reshape(expanded)
        for i in range(spec.num_users):
            for axis_name, offset, grid in (("B", 0, spec.battery_grid), ("r", 1, spec.bits_grid)):
                if len(grid) < 3 or not np.allclose(np.diff(grid), grid[1] - grid[0]):
                    continue
                axis = 4 * i + offset
                V_axis = np.moveaxis(V, axis, 0)
                second = V_axis[:-2] + V_axis[2:] - 2.0 * V_axis[1:-1]
                for pos in zip(*np.nonzero(second < -tol)):
                    position = list(pos[1:])
                    position.insert(axis, int(pos[0]) + 1)
                    violations.append(StructureViolation(
                        t=t, user=i, axis=axis_name, quantity="V",
                        position=tuple(int(p) for p in position),
                        magnitude=float(-second[pos]),
                    ))
    if violations:
        logger.warning(f"Value table has {len(violations)} discrete convexity violations")
    return violations


def monotonicity_scan(policy: PolicyTable, tol: float = Tolerances.FEASIBILITY) -> List[StructureViolation]:
    """
    Positions where a user's argmin P or rho decreases along its own B or r axis.

    ``magnitude`` is the decrease measured in grid steps of that quantity.
    """
    spec = policy.spec
    expanded = _user_axes(spec)
    p_step = float(np.min(np.diff(spec.power_grid))) if len(spec.power_grid) > 1 else 1.0
    q_step = float(np.min(np.diff(spec.rate_grid))) if len(spec.rate_grid) > 1 else 1.0
    violations: List[StructureViolation] = []
    for t in range(1, policy.horizon + 1):
        chosen = policy.actions[t - 1].reshape(expanded)
        for i in range(spec.num_users):
            for quantity, table, step in (("P", policy.power_choices, p_step),
                                          ("rho", policy.rate_choices, q_step)):
                component = table[chosen, i]
                for axis_name, offset in (("B", 0), ("r", 1)):
                    axis = 4 * i + offset
                    drop = -np.diff(component, axis=axis)
                    for pos in zip(*np.nonzero(drop > tol)):
                        violations.append(StructureViolation(
                            t=t, user=i, axis=axis_name, quantity=quantity,
                            position=tuple(int(p) for p in pos),
                            magnitude=float(drop[pos] / step),
                        ))
    if violations:
        logger.warning(f"Policy table has {len(violations)} monotonicity violations")
    return violations


def save_tables(path: Union[str, Path], values: ValueTable, policy: PolicyTable,
                params: Optional[SystemParams] = None) -> Path:
    """Persist both tables as ``.npz`` keyed by (t, state index) with a JSON header."""
    path = Path(path)
    header = {
        "format": FileFormats.TABLES_FORMAT,
        "horizon": values.horizon,
        "discretization": values.spec.to_dict(),
        "recursion": policy.stats.mode,
        "action_evaluations": policy.stats.action_evaluations,
    }
    if params is not None:
        header["system"] = {
            "num_users": params.num_users, "horizon": params.horizon,
            "r_max": params.r_max, "b_max": params.b_max,
            "cost_fn": params.cost_fn.name, "rate_fn": params.rate_fn.name,
        }
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        np.savez(
            handle,
            header=np.array(json.dumps(header)),
            values=values.values,
            actions=policy.actions,
            power_choices=policy.power_choices,
            rate_choices=policy.rate_choices,
        )
    logger.info(f"Saved value/policy tables to {path}")
    return path


def load_tables(path: Union[str, Path]) -> Tuple[ValueTable, PolicyTable]:
    """
    Reload tables written by ``save_tables``.

    Raises:
        ConfigError: If the file carries another format tag
    """
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != FileFormats.TABLES_FORMAT:
            raise ConfigError("tables.format", f"unsupported table format {header.get('format')!r}")
        spec = DiscretizationSpec.from_dict(header["discretization"])
        stats = RecursionStats(mode=header.get("recursion", "full"),
                               action_evaluations=int(header.get("action_evaluations", 0)),
                               layers=int(header["horizon"]))
        return (
            ValueTable(spec=spec, values=data["values"].copy()),
            PolicyTable(spec=spec, actions=data["actions"].copy(),
                        power_choices=data["power_choices"].copy(),
                        rate_choices=data["rate_choices"].copy(), stats=stats),
        )


class MdpService:
    """
    Service owning the solved value and policy tables of one configuration.

    Tables are solved on first use and cached for later lookups.
    """

    def __init__(self, params: SystemParams, model: StochasticModel, spec: DiscretizationSpec):
        self.params = params
        self.model = model
        self.spec = spec
        self.values: Optional[ValueTable] = None
        self.policy: Optional[PolicyTable] = None

    def solve(self, monotone: bool = True) -> Tuple[ValueTable, PolicyTable]:
        """
        Solve (or return the cached) tables.

        Args:
            monotone: Use the pruned recursion

        Returns:
            Value table and policy table
        """
        if self.values is None or self.policy is None:
            solver = monotone_backward_recursion if monotone else backward_recursion
            self.values, self.policy = solver(self.params, self.model, self.spec)
        return self.values, self.policy

    def load(self, path: Union[str, Path]) -> PolicyTable:
        self.values, self.policy = load_tables(path)
        if self.policy.horizon != self.params.horizon:
            raise ConfigError("tables.horizon",
                              f"tables cover {self.policy.horizon} slots, config has {self.params.horizon}")
        return self.policy

    def save(self, path: Union[str, Path]) -> Path:
        values, policy = self.solve()
        return save_tables(path, values, policy, self.params)

    def act(self, state: SystemState, t: int) -> Action:
        _, policy = self.solve()
        return mdp_act(state, t, policy)

    def expected_cost(self) -> float:
        values, _ = self.solve()
        return expected_initial_value(values, self.params, self.model)
