"""
Reference-table and sweep-trend checks at the default setup.

Runs every policy on the default two-user system and is therefore marked
slow; select it with ``pytest -m slow``.
"""

import math

import pytest

from ehmac.constants import PolicyNames, ReferenceCosts
from ehmac.services.simulation_service import ExperimentConfig, run_experiment
from ehmac.templates.reports import ReportTemplates
from tests.factories.test_data import TestDataFactory


@pytest.mark.slow
class TestImportanceSweep:
    """Compare sweep means with the reference costs."""

    @pytest.fixture(scope="class")
    def result(self):
        cfg = ExperimentConfig(
            params=TestDataFactory.create_params(),
            sweep_param="i_prob",
            sweep_values=tuple(sorted(ReferenceCosts.IPROB_TABLE)),
            episodes=2000,
            num_paths=1000,
            workers=4,
        )
        return run_experiment(cfg)

    def test_within_reference_tolerance(self, result):
        assert ReportTemplates.reference_deviation(result.table()) == []

    def test_policy_ordering(self, result):
        """The offline oracle is the cheapest and the learned policy beats the MDP."""
        for value, row in result.table().items():
            assert row["offline"] <= min(row["nn"], row["mdp"], row["greedy"])
            assert row["nn"] <= row["mdp"]

    def test_cost_grows_with_importance(self, result):
        table = result.table()
        values = sorted(table)
        for policy in ("offline", "greedy"):
            assert all(table[a][policy] <= table[b][policy] for a, b in zip(values, values[1:]))


def _within_two_stderr(result, low, high, policy, direction):
    """Mean cost moves in ``direction`` from ``low`` to ``high``, up to two standard errors."""
    a, b = result.row(low, policy), result.row(high, policy)
    slack = 2.0 * math.hypot(a.stderr, b.stderr)
    return direction * (b.mean_cost - a.mean_cost) >= -slack


@pytest.mark.slow
class TestSweepTrends:
    """Trend and ordering checks on a reduced grid of each sweep."""

    SWEEPS = {
        "e_prob": ((0.2, 0.6, 1.0), -1.0),
        "p_prob": ((0.2, 0.6, 1.0), 1.0),
        "i_prob": ((0.0, 0.5, 1.0), 1.0),
    }

    @pytest.fixture(scope="class")
    def results(self):
        return {
            name: run_experiment(ExperimentConfig(
                params=TestDataFactory.create_params(),
                sweep_param=name,
                sweep_values=values,
                episodes=1000,
                num_paths=300,
                workers=4,
            ))
            for name, (values, _) in self.SWEEPS.items()
        }

    @pytest.mark.parametrize("sweep_param", ["e_prob", "p_prob", "i_prob"])
    def test_cost_trend(self, results, sweep_param):
        values, direction = self.SWEEPS[sweep_param]
        result = results[sweep_param]
        for policy in PolicyNames.ALL:
            for low, high in zip(values, values[1:]):
                assert _within_two_stderr(result, low, high, policy, direction), (sweep_param, policy, low)

    def test_offline_is_cheapest(self, results):
        for result in results.values():
            for row in result.table().values():
                assert row["offline"] <= min(row["nn"], row["mdp"], row["greedy"])

    def test_grid_policy_trails_the_continuous_ones(self, results):
        """The coarse-grid MDP costs at least as much as greedy and the network at most sweep points."""
        points = [row for name in ("e_prob", "p_prob") for row in results[name].table().values()]
        behind = sum(row["mdp"] >= max(row["greedy"], row["nn"]) for row in points)
        assert behind >= 0.8 * len(points)
