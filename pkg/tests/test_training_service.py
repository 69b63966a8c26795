"""
Tests for the MLP, its training loop and the action repair.
"""

import math

import numpy as np
import pytest

from ehmac.constants import ErrorCodes
from ehmac.services.simulation_service import audit_action
from ehmac.services.training_service import (
    TrainingConfig,
    TrainingService,
    nn_act,
    repair_action,
    train,
)
from ehmac.solvers.mlp import MlpModel
from ehmac.solvers.rate_region import RateRegionInstance, is_rate_feasible
from ehmac.utils.error_handling import ConfigError, DimensionError, TrainingError
from tests.factories.test_data import TestDataFactory


def _small_model(seed=0, sizes=(4, 8, 6, 2)):
    rng = np.random.default_rng(seed)
    return MlpModel.initialize(sizes, rng, input_mean=rng.normal(size=sizes[0]),
                               input_scale=rng.uniform(0.5, 2.0, size=sizes[0]))


class TestMlpModel:
    """Test the network arithmetic and persistence."""

    def test_gradients_match_finite_differences(self):
        model = _small_model()
        rng = np.random.default_rng(1)
        X, Y = rng.normal(size=(12, 4)), rng.normal(size=(12, 2))
        _, grad_w, grad_b = model.loss_and_gradients(X, Y)
        analytic = np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(grad_w, grad_b)])

        base = model.get_parameters()
        numeric = np.zeros_like(base)
        eps = 1e-6
        for k in range(base.size):
            shifted = base.copy()
            shifted[k] += eps
            model.set_parameters(shifted)
            up = model.mse(X, Y)
            shifted[k] -= 2 * eps
            model.set_parameters(shifted)
            down = model.mse(X, Y)
            numeric[k] = (up - down) / (2 * eps)
        model.set_parameters(base)
        assert np.max(np.abs(analytic - numeric)) <= 1e-4 * max(1.0, np.max(np.abs(numeric)))

    def test_predict_single_vector(self):
        model = _small_model()
        out = model.predict(np.ones(4))
        assert out.shape == (2,)
        assert np.allclose(out, model.forward(np.ones((1, 4)))[0])

    def test_wrong_input_width(self):
        with pytest.raises(DimensionError):
            _small_model().forward(np.ones((3, 5)))

    def test_mismatched_layers(self):
        with pytest.raises(DimensionError):
            MlpModel(layer_sizes=(2, 3), weights=[np.zeros((3, 2))], biases=[np.zeros(3)],
                     input_mean=np.zeros(2), input_scale=np.ones(2))

    def test_save_and_load(self, tmp_path):
        model = _small_model()
        model.metadata = {"note": "fixture"}
        path = model.save(tmp_path / "model.npz")
        loaded = MlpModel.load(path)
        assert loaded.layer_sizes == model.layer_sizes
        assert np.array_equal(loaded.get_parameters(), model.get_parameters())
        assert np.array_equal(loaded.input_scale, model.input_scale)
        assert loaded.metadata == {"note": "fixture"}

    def test_load_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "other.npz"
        np.savez(path, header=np.array('{"format": "weights-v0"}'))
        with pytest.raises(ConfigError):
            MlpModel.load(path)

    def test_load_rejects_non_finite_weights(self, tmp_path):
        model = _small_model()
        model.weights[0][0, 0] = np.nan
        path = model.save(tmp_path / "broken.npz")
        with pytest.raises(ConfigError) as exc:
            MlpModel.load(path)
        assert exc.value.key == "model.parameters"


class TestTraining:
    """Test the SGD loop."""

    def test_constant_target(self):
        """A constant target is learned to small error."""
        dataset = TestDataFactory.create_dataset(
            num_records=300, target_fn=lambda X: np.full((len(X), 2), 0.5)
        )
        config = TrainingConfig(hidden_layers=(16,), learning_rate=1e-2, epochs=100, patience=100)
        model = train(dataset, config)
        assert model.mse(dataset.features, dataset.targets) < 0.05

    def test_history_recorded(self):
        dataset = TestDataFactory.create_dataset(num_records=100)
        model = train(dataset, TrainingConfig(hidden_layers=(4,), epochs=5, patience=10))
        history = model.metadata["history"]
        assert len(history["validation_loss"]) == 5
        assert history["best_validation_loss"] == min(history["validation_loss"])
        assert model.metadata["train_records"] + model.metadata["validation_records"] == 100

    def test_validation_paths_are_held_out(self):
        """Records of one path never appear on both sides of the split."""
        dataset = TestDataFactory.create_dataset(num_records=200, records_per_path=10)
        train_set, validation_set = dataset.split_by_seed(0.2, np.random.default_rng(0))
        assert len(validation_set) == 40
        assert not set(train_set.path_seeds) & set(validation_set.path_seeds)

    def test_deterministic_for_seed(self):
        dataset = TestDataFactory.create_dataset(num_records=80)
        config = TrainingConfig(hidden_layers=(4,), epochs=3, seed=5)
        a, b = train(dataset, config), train(dataset, config)
        assert np.array_equal(a.get_parameters(), b.get_parameters())

    def test_non_finite_target_raises(self):
        dataset = TestDataFactory.create_dataset(
            num_records=40, target_fn=lambda X: np.full((len(X), 2), np.nan)
        )
        with pytest.raises(TrainingError) as exc:
            train(dataset, TrainingConfig(hidden_layers=(4,), epochs=2))
        assert exc.value.code == ErrorCodes.NON_FINITE_LOSS

    @pytest.mark.parametrize("kwargs", [{"learning_rate": 0.0}, {"momentum": 1.0}, {"batch_size": 0},
                                        {"validation_fraction": 1.0}, {"hidden_layers": (0,)}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigError):
            TrainingConfig(**kwargs)


class TestRepair:
    """Test the mapping of raw network outputs into the feasible set."""

    def test_uniform_scaling_to_sum_rate(self):
        """(1.5, 1.5) violates ln 9 and is scaled to ln 9 / 2 each."""
        params = TestDataFactory.create_params(num_users=2)
        state = TestDataFactory.create_state(B=(4, 4), r=(4, 4), h=(1, 1), w=(1, 1))
        action = repair_action(state, [4.0, 4.0], [1.5, 1.5], params)
        assert action.P.tolist() == [4.0, 4.0]
        assert action.rho == pytest.approx([math.log(9.0) / 2] * 2, abs=1e-9)

    def test_negative_power_sends_nothing(self):
        params = TestDataFactory.create_params(num_users=2)
        state = TestDataFactory.create_state(B=(4, 4), r=(4, 4), h=(1, 1), w=(1, 1))
        action = repair_action(state, [-1.0, -0.5], [2.0, 2.0], params)
        assert action.P.tolist() == [0.0, 0.0]
        assert action.rho.tolist() == [0.0, 0.0]

    def test_clips_to_battery_and_bits(self):
        params = TestDataFactory.create_params(num_users=1)
        state = TestDataFactory.create_state(B=(2.0,), r=(0.5,), h=(1.0,), w=(1.0,))
        action = repair_action(state, [3.0], [1.0], params)
        assert action.P[0] == 2.0
        assert action.rho[0] == 0.5

    def test_idempotent(self):
        params = TestDataFactory.create_params(num_users=2)
        state = TestDataFactory.create_state(B=(3, 1), r=(4, 2), h=(0.1, 1), w=(2, 1))
        once = repair_action(state, [2.5, 5.0], [3.0, -1.0], params)
        twice = repair_action(state, once.P, once.rho, params)
        assert np.allclose(twice.P, once.P)
        assert np.allclose(twice.rho, once.rho)

    @staticmethod
    def _repair_random_states(count, seed):
        """Repair heavy-tailed raw outputs on random two-user states; audit raises on any violation."""
        rng = np.random.default_rng(seed)
        params = TestDataFactory.create_params(num_users=2)
        B = rng.uniform(0, 4, (count, 2))
        B = np.where(rng.random((count, 2)) < 0.3, np.round(B), B)
        r = np.where(rng.random((count, 2)) < 0.2, 0.0, rng.uniform(0, 4, (count, 2)))
        h = rng.choice([0.1, 1.0], (count, 2))
        w = rng.choice([0.0, 1.0, 2.0], (count, 2))
        raw_P = rng.standard_t(2, (count, 2)) * 3 + 2
        raw_rho = rng.standard_t(2, (count, 2)) * 2 + 1
        for k in range(count):
            state = TestDataFactory.create_state(B=B[k], r=r[k], h=h[k], w=w[k])
            action = repair_action(state, raw_P[k], raw_rho[k], params)
            audit_action(state, action, params, slot=1)
            assert np.all(action.P >= 0) and np.all(action.rho >= 0)

    def test_random_outputs_become_feasible(self):
        self._repair_random_states(2000, seed=0)

    @pytest.mark.slow
    def test_hundred_thousand_random_states(self):
        self._repair_random_states(100_000, seed=1)


class TestTrainingService:
    """Test the service wrapper."""

    def test_act_requires_model(self):
        service = TrainingService(TestDataFactory.create_params(num_users=1))
        with pytest.raises(ConfigError):
            service.act(TestDataFactory.create_state())

    def test_fit_and_act(self):
        params = TestDataFactory.create_params(num_users=1)
        service = TrainingService(params, TrainingConfig(hidden_layers=(4,), epochs=3))
        service.fit(TestDataFactory.create_dataset(num_records=60))
        action = service.act(TestDataFactory.create_state())
        assert 0.0 <= action.P[0] <= 4.0
        assert service.summary()["layer_sizes"] == [4, 4, 2]

    def test_load_rejects_user_mismatch(self, tmp_path):
        path = _small_model(sizes=(8, 4, 4)).save(tmp_path / "model.npz")
        service = TrainingService(TestDataFactory.create_params(num_users=1))
        with pytest.raises(ConfigError):
            service.load(path)

    def test_nn_act_feasible(self):
        params = TestDataFactory.create_params(num_users=2)
        model = _small_model(sizes=(8, 6, 4))
        state = TestDataFactory.create_state(B=(1, 3), r=(2, 4), h=(1, 0.1), w=(1, 2))
        action = nn_act(state, model, params)
        assert np.all(action.P <= state.B)
        assert is_rate_feasible(RateRegionInstance(h=state.h, P=action.P, g=params.rate_fn), action.rho)
