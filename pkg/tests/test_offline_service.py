"""
Tests for the offline oracle and dataset generation.
"""

import itertools
import math

import numpy as np
import pytest

from ehmac.services.offline_service import (
    OfflineService,
    build_offline_program,
    clip_to_dynamics,
    generate_dataset,
    solve_offline,
)
from ehmac.solvers.rate_region import RateRegionInstance, is_rate_feasible
from ehmac.states.dataset import TrainingDataset
from ehmac.states.dynamics import sample_path
from tests.factories.test_data import TestDataFactory


def _grid_optimum(path, params, step=1.0):
    """Best objective over grid action sequences for M = 1 (rates on the grid or at capacity)."""
    T = path.horizon
    values = np.arange(0.0, params.b_max + 1e-9, step)
    best = math.inf
    for powers in itertools.product(values, repeat=T):
        rates_per_slot = []
        for t in range(T):
            cap = float(params.rate_fn(path.channel[t, 0] * powers[t]))
            rates_per_slot.append(sorted({*[v for v in values if v <= cap], cap}))
        for rates in itertools.product(*rates_per_slot):
            P, rho = np.array(powers)[:, None], np.array(rates)[:, None]
            try:
                _, _, objective = clip_to_dynamics(path, P, rho, params)
            except Exception:
                continue
            if _replay_is_exact(path, P, rho, params):
                best = min(best, objective)
    return best


def _replay_is_exact(path, P, rho, params):
    """True when clipping to the dynamics leaves the sequence unchanged."""
    clipped_P, clipped_rho, _ = clip_to_dynamics(path, P, rho, params)
    return np.allclose(clipped_P, P) and np.allclose(clipped_rho, rho)


class TestOfflineProgram:
    """Test the offline convex program on hand-checked paths."""

    def test_two_slot_analytic_split(self):
        """E = (4, 0), one arrival: P1 solves a^2 - 14a + 42 = 0 with a = 1 + P1."""
        params = TestDataFactory.create_params(num_users=1, horizon=2)
        path = TestDataFactory.create_path(energy=[[4.0], [0.0]], arrivals=[[1], [0]])
        solution = solve_offline(path, params)
        a = 7.0 - math.sqrt(7.0)
        assert solution.P[0, 0] == pytest.approx(a - 1.0, abs=1e-3)
        assert solution.P[1, 0] == pytest.approx(5.0 - a, abs=1e-3)
        assert solution.rho[0, 0] == pytest.approx(math.log(1.0 + solution.P[0, 0]), abs=1e-5)
        assert solution.objective == pytest.approx(0.369 / 2.0, abs=1e-3)
        assert solution.report.kkt_residual <= 1e-6

    def test_zero_energy_path(self):
        """Without energy nothing is sent and every backlog is charged in full."""
        params = TestDataFactory.create_params(num_users=2, horizon=3)
        path = TestDataFactory.create_path(
            energy=[[0, 0], [0, 0], [0, 0]], arrivals=[[1, 0], [0, 1], [0, 0]],
            weights=[[2, 1], [1, 1], [1, 1]],
        )
        solution = solve_offline(path, params)
        assert np.all(solution.P == 0.0)
        assert np.all(solution.rho == 0.0)
        assert solution.objective == pytest.approx((2.0 * 3 + 1.0 * 2) / 6.0)

    def test_no_arrivals(self):
        params = TestDataFactory.create_params(num_users=2, horizon=3)
        path = TestDataFactory.create_path(energy=[[1, 1]] * 3, arrivals=[[0, 0]] * 3)
        solution = solve_offline(path, params)
        assert solution.objective == 0.0
        assert np.all(solution.rho == 0.0)

    def test_program_start_is_strictly_feasible(self):
        params = TestDataFactory.create_params(num_users=2, horizon=4)
        path = sample_path(TestDataFactory.create_model(e_prob=0.8, p_prob=0.6), params, 5)
        prog, layout = build_offline_program(path, params)
        assert prog.dimension == layout.num_variables
        assert prog.dimension == 0 or prog.is_strictly_feasible(prog.x0)

    @pytest.mark.parametrize("seed", range(8))
    def test_solution_feasible_along_path(self, seed):
        """Replayed actions satisfy battery, bits and rate-region constraints every slot."""
        params = TestDataFactory.create_params(num_users=2, horizon=3)
        path = sample_path(TestDataFactory.create_model(e_prob=0.7, p_prob=0.7), params, seed)
        solution = solve_offline(path, params)
        for state, action in zip(solution.states(params), solution.actions()):
            assert np.all(action.P <= state.B + 1e-9)
            assert np.all(action.rho <= state.r + 1e-9)
            assert is_rate_feasible(RateRegionInstance(h=state.h, P=action.P, g=params.rate_fn), action.rho)

    @pytest.mark.parametrize("energy, arrivals", [
        ([[4.0], [0.0]], [[1], [0]]),
        ([[1.0], [1.0]], [[1], [0]]),
        ([[2.0], [2.0]], [[1], [1]]),
        ([[3.0], [0.0], [1.0]], [[1], [0], [0]]),
    ])
    def test_not_worse_than_grid(self, energy, arrivals):
        """The continuous optimum never loses to a grid-restricted action sequence."""
        params = TestDataFactory.create_params(num_users=1, horizon=len(energy))
        path = TestDataFactory.create_path(energy=energy, arrivals=arrivals, weights=[[2.0]] * len(energy))
        solution = solve_offline(path, params)
        assert solution.objective <= _grid_optimum(path, params) + 1e-4


class TestDatasetGeneration:
    """Test the offline training dataset."""

    def test_record_count_and_widths(self):
        """One path of T = 10 slots and M = 2 users gives 10 records of width 8 and 4."""
        params = TestDataFactory.create_params()
        dataset = generate_dataset(TestDataFactory.create_model(), params, num_paths=1, seed=0)
        assert len(dataset) == 10
        assert dataset.features.shape == (10, 8)
        assert dataset.targets.shape == (10, 4)
        assert dataset.slots.tolist() == list(range(1, 11))

    def test_zero_energy_targets(self):
        params = TestDataFactory.create_params(horizon=4)
        dataset = generate_dataset(TestDataFactory.create_model(e_prob=0.0), params, num_paths=3, seed=2)
        assert np.all(dataset.targets == 0.0)

    def test_states_within_bounds(self):
        params = TestDataFactory.create_params(horizon=5)
        dataset = generate_dataset(TestDataFactory.create_model(e_prob=0.9, p_prob=0.5), params,
                                   num_paths=3, seed=4)
        B, r = dataset.features[:, 0:2], dataset.features[:, 2:4]
        assert np.all((B >= 0) & (B <= 4.0 + 1e-9))
        assert np.all((r >= 0) & (r <= 4.0 + 1e-9))
        assert np.all(dataset.targets[:, 0:2] <= B + 1e-9)

    def test_csv_roundtrip(self, tmp_path):
        params = TestDataFactory.create_params(horizon=3)
        dataset = OfflineService(params, TestDataFactory.create_model(e_prob=0.8)).generate(2, seed=9)
        path = dataset.save_csv(tmp_path / "data.csv")
        loaded = TrainingDataset.load_csv(path)
        assert np.array_equal(loaded.features, dataset.features)
        assert np.array_equal(loaded.targets, dataset.targets)
        assert loaded.path_seeds.tolist() == [9, 9, 9, 10, 10, 10]

    def test_rejects_empty_request(self):
        with pytest.raises(ValueError):
            generate_dataset(TestDataFactory.create_model(), TestDataFactory.create_params(), num_paths=0)
