"""
Policy adapters exposing every decision rule through one interface.

A policy is queried once per slot with the current state and the 1-based
slot index. ``begin_episode`` is called with the sample path before the
first slot; only the offline replay looks at it.
"""

from __future__ import annotations

import logging
from typing import Optional

from ..constants import ErrorCodes, PolicyNames, Tolerances
from ..services.greedy_service import greedy_act
from ..services.mdp_service import PolicyTable, mdp_act
from ..services.offline_service import OfflineSolution, solve_offline
from ..services.training_service import nn_act
from ..solvers.mlp import MlpModel
from ..states.system import Action, SamplePath, SystemParams, SystemState
from ..utils.error_handling import EhmacError

logger = logging.getLogger(__name__)


class Policy:
    """Base decision rule: (state, slot) -> action."""

    name = "policy"
    causal = True

    def begin_episode(self, path: SamplePath) -> None:
        """Hook called before slot 1 of every episode."""

    def act(self, state: SystemState, slot: int) -> Action:
        raise NotImplementedError


class ZeroPolicy(Policy):
    """Never transmits."""

    name = PolicyNames.ZERO

    def act(self, state: SystemState, slot: int) -> Action:
        return Action.zeros(state.num_users)


class MdpPolicy(Policy):
    """Executes a solved policy table on floor-snapped states."""

    name = PolicyNames.MDP

    def __init__(self, policy: PolicyTable):
        self.policy = policy

    def act(self, state: SystemState, slot: int) -> Action:
        return mdp_act(state, slot, self.policy)


class GreedyPolicy(Policy):
    """Solves each slot's myopic problem."""

    name = PolicyNames.GREEDY

    def __init__(self, params: SystemParams, ktol: float = Tolerances.GREEDY_KTOL):
        self.params = params
        self.ktol = ktol

    def act(self, state: SystemState, slot: int) -> Action:
        return greedy_act(state, self.params, self.ktol)


class NnPolicy(Policy):
    """Repaired output of a trained network."""

    name = PolicyNames.NN

    def __init__(self, model: MlpModel, params: SystemParams):
        self.model = model
        self.params = params

    def act(self, state: SystemState, slot: int) -> Action:
        return nn_act(state, self.model, self.params)


class OfflineReplayPolicy(Policy):
    """Replays the offline solution of the current path; solved once per episode."""

    name = PolicyNames.OFFLINE
    causal = False

    def __init__(self, params: SystemParams, ktol: float = Tolerances.SOLVER_KTOL):
        self.params = params
        self.ktol = ktol
        self._current: Optional[OfflineSolution] = None

    def begin_episode(self, path: SamplePath) -> None:
        self._current = solve_offline(path, self.params, self.ktol)

    def act(self, state: SystemState, slot: int) -> Action:
        if self._current is None:
            raise EhmacError("begin_episode must be called before act", code=ErrorCodes.EPISODE_NOT_STARTED)
        return Action(P=self._current.P[slot - 1], rho=self._current.rho[slot - 1])
