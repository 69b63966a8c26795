"""
Tests for the discretized dynamic program.
"""

import functools
import itertools
import math

import numpy as np
import pytest

from ehmac.services.mdp_service import (
    DiscretizationSpec,
    MdpService,
    PolicyTable,
    ValueTable,
    backward_recursion,
    check_grid_closure,
    convexity_report,
    enumerate_feasible_actions,
    expected_initial_value,
    load_tables,
    mdp_act,
    monotone_backward_recursion,
    monotonicity_scan,
    save_tables,
    transition_expectation,
)
from ehmac.states.dynamics import stage_cost
from ehmac.states.system import SystemState
from ehmac.utils.error_handling import ConfigError, GridClosureError
from tests.factories.test_data import TestDataFactory


def _expectimin_oracle(params, model, spec):
    """Memoized single-user recursion over explicit states, independent of the table layout."""
    T = params.horizon

    @functools.lru_cache(maxsize=None)
    def value(t, B, r, h, w):
        if t > T:
            return 0.0
        state = TestDataFactory.create_state(B=(B,), r=(r,), h=(h,), w=(w,))
        best = math.inf
        for action in enumerate_feasible_actions(state, spec, params):
            P, rho = float(action.P[0]), float(action.rho[0])
            total = stage_cost(state, action, params)
            for (e, pe), a, (W, pw), (h_next, ph) in itertools.product(
                zip(model.energy_support[0], model.energy_probs[0]),
                (0, 1),
                zip(model.weight_support, model.weight_probs),
                zip(model.channel_support[0], model.channel_probs[0]),
            ):
                pa = model.arrival_probs[0] if a else 1.0 - model.arrival_probs[0]
                prob = pe * pa * pw * ph
                if prob == 0:
                    continue
                total += prob * value(
                    t + 1,
                    min(B - P + e, params.b_max),
                    params.r_max if a else r - rho,
                    h_next,
                    W if a else w,
                )
            best = min(best, total)
        return best

    return value


def _solve(num_users=1, horizon=2, step=1.0, monotone=True, **model_kwargs):
    params = TestDataFactory.create_params(num_users=num_users, horizon=horizon)
    model = TestDataFactory.create_model(num_users=num_users, **model_kwargs)
    spec = TestDataFactory.create_spec(params, model, step)
    solver = monotone_backward_recursion if monotone else backward_recursion
    values, policy = solver(params, model, spec)
    return params, model, spec, values, policy


class TestDiscretization:
    """Test grids, indexing and closure."""

    def test_uniform_grids(self):
        params = TestDataFactory.create_params(num_users=1)
        spec = TestDataFactory.create_spec(params, TestDataFactory.create_model(num_users=1))
        assert spec.battery_grid == (0.0, 1.0, 2.0, 3.0, 4.0)
        assert spec.weight_grid == (0.0, 1.0, 2.0)
        assert spec.table_shape == (5 * 5 * 2 * 3,)

    def test_state_index_roundtrip(self):
        params = TestDataFactory.create_params()
        spec = TestDataFactory.create_spec(params, TestDataFactory.create_model())
        state = TestDataFactory.create_state(B=(3, 0), r=(4, 2), h=(0.1, 1.0), w=(2, 0))
        restored = spec.state_at(spec.state_index(state))
        assert np.array_equal(restored.as_vector(), state.as_vector())

    def test_off_grid_state_raises(self):
        params = TestDataFactory.create_params(num_users=1)
        spec = TestDataFactory.create_spec(params, TestDataFactory.create_model(num_users=1))
        with pytest.raises(GridClosureError):
            spec.state_index(TestDataFactory.create_state(B=(2.5,)))

    def test_step_must_divide_range(self):
        params = TestDataFactory.create_params(num_users=1)
        with pytest.raises(ConfigError):
            TestDataFactory.create_spec(params, TestDataFactory.create_model(num_users=1), step=0.3)

    def test_energy_off_grid_fails_closure(self):
        """Half-unit harvests cannot land on a unit battery grid."""
        params = TestDataFactory.create_params(num_users=1)
        model = TestDataFactory.create_deterministic_model(energy=0.5)
        spec = TestDataFactory.create_spec(params, model)
        with pytest.raises(GridClosureError):
            check_grid_closure(spec, params, model)

    def test_recursion_checks_closure(self):
        params = TestDataFactory.create_params(num_users=1)
        model = TestDataFactory.create_deterministic_model(energy=0.5)
        spec = TestDataFactory.create_spec(params, model)
        with pytest.raises(GridClosureError):
            backward_recursion(params, model, spec)

    def test_spec_rejects_unsorted_grid(self):
        with pytest.raises(ConfigError):
            DiscretizationSpec(
                battery_grid=(0.0, 2.0, 1.0), bits_grid=(0.0, 1.0), power_grid=(0.0,),
                rate_grid=(0.0,), channel_support=((1.0,),), weight_grid=(0.0,),
            )


class TestFeasibleActions:
    """Test action enumeration."""

    def test_single_user_full_battery(self):
        """With B = r = 4 and h = 1 only rho in {0, 1} fits under ln(1 + P)."""
        params = TestDataFactory.create_params(num_users=1)
        spec = TestDataFactory.create_spec(params, TestDataFactory.create_model(num_users=1))
        actions = enumerate_feasible_actions(TestDataFactory.create_state(), spec, params)
        pairs = [(float(a.P[0]), float(a.rho[0])) for a in actions]
        assert pairs == [(0, 0), (1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (4, 0), (4, 1)]

    def test_empty_battery(self):
        params = TestDataFactory.create_params(num_users=1)
        spec = TestDataFactory.create_spec(params, TestDataFactory.create_model(num_users=1))
        actions = enumerate_feasible_actions(TestDataFactory.create_state(B=(0,)), spec, params)
        assert len(actions) == 1
        assert actions[0].P[0] == 0.0 and actions[0].rho[0] == 0.0

    def test_two_users_share_region(self):
        """Every enumerated pair respects the sum-rate constraint."""
        params = TestDataFactory.create_params(num_users=2)
        spec = TestDataFactory.create_spec(params, TestDataFactory.create_model(num_users=2))
        state = TestDataFactory.create_state(B=(4, 4), r=(4, 4), h=(1, 1), w=(1, 1))
        actions = enumerate_feasible_actions(state, spec, params)
        assert all(a.rho.sum() <= math.log(1 + a.P.sum()) + 1e-9 for a in actions)
        assert any(a.rho.tolist() == [1.0, 1.0] for a in actions)
        assert not any(a.rho.tolist() == [2.0, 1.0] for a in actions)


class TestBackwardRecursion:
    """Test values and policies of the recursion."""

    def test_last_slot_value(self):
        """T = 1, full battery, weight 2: the best grid rate is 1, so V = 2 e^-1."""
        params = TestDataFactory.create_params(num_users=1, horizon=1)
        model = TestDataFactory.create_deterministic_model(energy=4.0, arrival_prob=1.0, weight=2.0)
        spec = TestDataFactory.create_spec(params, model)
        values, policy = backward_recursion(params, model, spec)
        state = TestDataFactory.create_state()
        assert values.value(1, state) == pytest.approx(2.0 * math.exp(-1.0))
        assert policy.action(1, state).rho[0] == 1.0

    def test_expected_initial_value(self):
        """A deterministic first slot has state (4, 4, 1, 2) for sure."""
        params = TestDataFactory.create_params(num_users=1, horizon=1)
        model = TestDataFactory.create_deterministic_model(energy=4.0, arrival_prob=1.0, weight=2.0)
        values, _ = backward_recursion(params, model, TestDataFactory.create_spec(params, model))
        assert expected_initial_value(values, params, model) == pytest.approx(2.0 * math.exp(-1.0))

    def test_idle_system_costs_nothing(self):
        params = TestDataFactory.create_params(num_users=1, horizon=3)
        model = TestDataFactory.create_deterministic_model()
        service = MdpService(params, model, TestDataFactory.create_spec(params, model))
        assert service.expected_cost() == 0.0

    @pytest.mark.parametrize("horizon", [1, 2, 3])
    def test_matches_expectimin_oracle(self, horizon):
        """Every first-slot value equals an explicit memoized recursion."""
        params, model, spec, values, _ = _solve(horizon=horizon, e_prob=0.5, p_prob=0.3, i_prob=0.5)
        oracle = _expectimin_oracle(params, model, spec)
        for s in range(spec.table_shape[0]):
            state = spec.state_at((s,))
            expected = oracle(1, float(state.B[0]), float(state.r[0]), float(state.h[0]), float(state.w[0]))
            assert values.layer(1)[s] == pytest.approx(expected, abs=1e-9)

    def test_transition_expectation_agrees_with_table(self):
        """The stored argmin attains the value through the explicit expectation."""
        params, model, spec, values, policy = _solve(horizon=2, e_prob=0.4, p_prob=0.4)
        for s in range(0, spec.table_shape[0], 7):
            state = spec.state_at((s,))
            action = policy.action_at(1, (s,))
            total = transition_expectation(state, action, values.layer(2), model, spec, params)
            assert total == pytest.approx(values.layer(1)[s], abs=1e-12)

    def test_monotone_equals_full_single_user(self):
        _, _, _, v_full, p_full = _solve(horizon=3, monotone=False, e_prob=0.6)
        _, _, _, v_mono, p_mono = _solve(horizon=3, monotone=True, e_prob=0.6)
        assert np.array_equal(v_full.values, v_mono.values)
        assert np.array_equal(p_full.actions, p_mono.actions)
        assert p_mono.stats.action_evaluations <= p_full.stats.action_evaluations

    @pytest.mark.slow
    def test_monotone_equals_full_two_users(self):
        _, _, _, v_full, p_full = _solve(num_users=2, horizon=2, monotone=False)
        _, _, _, v_mono, p_mono = _solve(num_users=2, horizon=2, monotone=True)
        assert np.array_equal(v_full.values, v_mono.values)
        assert np.array_equal(p_full.actions, p_mono.actions)

    def test_value_shape_properties(self):
        """V_t does not increase with battery and does not decrease with backlog."""
        _, _, spec, values, _ = _solve(horizon=3)
        for t in range(1, 4):
            V = values.layer(t).reshape(spec.user_state_shape(0))
            assert np.all(np.diff(V, axis=0) <= 1e-12)
            assert np.all(np.diff(V, axis=1) >= -1e-12)

    @pytest.mark.slow
    def test_value_shape_properties_two_users(self):
        """Each user's own battery and backlog axes keep the single-user ordering."""
        _, _, spec, values, _ = _solve(num_users=2, horizon=2)
        expanded = spec.user_state_shape(0) + spec.user_state_shape(1)
        for t in range(1, 3):
            V = values.layer(t).reshape(expanded)
            for user in range(2):
                assert np.all(np.diff(V, axis=4 * user) <= 1e-12)
                assert np.all(np.diff(V, axis=4 * user + 1) >= -1e-12)

    def test_stored_actions_are_feasible(self):
        params, _, spec, _, policy = _solve(horizon=2)
        for s in range(spec.table_shape[0]):
            state = spec.state_at((s,))
            action = policy.action_at(1, (s,))
            assert action.P[0] <= state.B[0] + 1e-9
            assert action.rho[0] <= min(state.r[0], math.log(1 + state.h[0] * action.P[0])) + 1e-9


class TestPolicyLookup:
    """Test mdp_act, persistence and the service wrapper."""

    def test_floor_snapping(self):
        """B = 3.7 uses the stored action of B = 3, which never exceeds 3.7."""
        params, _, _, _, policy = _solve(horizon=2)
        snapped = mdp_act(TestDataFactory.create_state(B=(3.7,)), 1, policy)
        on_grid = policy.action(1, TestDataFactory.create_state(B=(3.0,)))
        assert snapped.P[0] == on_grid.P[0]
        assert snapped.rho[0] == on_grid.rho[0]

    def test_save_and_load(self, tmp_path):
        params, _, _, values, policy = _solve(horizon=2)
        path = save_tables(tmp_path / "tables.npz", values, policy, params)
        loaded_values, loaded_policy = load_tables(path)
        assert np.array_equal(loaded_values.values, values.values)
        assert np.array_equal(loaded_policy.actions, policy.actions)
        assert loaded_policy.spec == policy.spec
        assert loaded_policy.stats.mode == "monotone"

    def test_load_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "other.npz"
        np.savez(path, header=np.array('{"format": "something-else"}'))
        with pytest.raises(ConfigError):
            load_tables(path)

    def test_service_rejects_other_horizon(self, tmp_path):
        params, model, spec, values, policy = _solve(horizon=2)
        path = save_tables(tmp_path / "tables.npz", values, policy, params)
        service = MdpService(TestDataFactory.create_params(num_users=1, horizon=5), model, spec)
        with pytest.raises(ConfigError):
            service.load(path)

    def test_service_caches_solution(self):
        params = TestDataFactory.create_params(num_users=1, horizon=2)
        model = TestDataFactory.create_model(num_users=1)
        service = MdpService(params, model, TestDataFactory.create_spec(params, model))
        first = service.solve()
        assert service.solve()[0] is first[0]
        action = service.act(SystemState.initial(1), 1)
        assert action.P[0] == 0.0


class TestStructureDiagnostics:
    """Test the convexity and monotonicity reports on hand-built tables."""

    def _spec(self, battery=(0.0, 1.0)):
        return DiscretizationSpec(
            battery_grid=battery, bits_grid=(0.0,), power_grid=(0.0, 1.0), rate_grid=(0.0,),
            channel_support=((1.0,),), weight_grid=(0.0,),
        )

    def test_monotonicity_violation_detected(self):
        """P drops from 1 to 0 as the battery grows: one violation of one power step."""
        policy = PolicyTable(
            spec=self._spec(),
            actions=np.array([[1, 0]], dtype=np.int32),
            power_choices=np.array([[0.0], [1.0]]),
            rate_choices=np.array([[0.0], [0.0]]),
        )
        violations = monotonicity_scan(policy)
        assert len(violations) == 1
        assert violations[0].axis == "B"
        assert violations[0].quantity == "P"
        assert violations[0].magnitude == pytest.approx(1.0)

    def test_convexity_violation_detected(self):
        spec = self._spec(battery=(0.0, 1.0, 2.0))
        values = ValueTable(spec=spec, values=np.array([[0.0, 2.0, 1.0]]))
        violations = convexity_report(values)
        assert len(violations) == 1
        assert violations[0].position[0] == 1
        assert violations[0].magnitude == pytest.approx(3.0)

    def test_rate_drop_along_bits_axis(self):
        """rho falls from 1 to 0 as the backlog grows from 0 to 1."""
        spec = DiscretizationSpec(
            battery_grid=(0.0,), bits_grid=(0.0, 1.0), power_grid=(0.0,), rate_grid=(0.0, 1.0),
            channel_support=((1.0,),), weight_grid=(0.0,),
        )
        policy = PolicyTable(
            spec=spec,
            actions=np.array([[1, 0]], dtype=np.int32),
            power_choices=np.array([[0.0], [0.0]]),
            rate_choices=np.array([[0.0], [1.0]]),
        )
        violations = monotonicity_scan(policy)
        assert [(v.axis, v.quantity) for v in violations] == [("r", "rho")]
        assert violations[0].magnitude == pytest.approx(1.0)

    def test_well_shaped_tables_report_nothing(self):
        spec = self._spec(battery=(0.0, 1.0, 2.0))
        values = ValueTable(spec=spec, values=np.array([[4.0, 1.0, 0.0]]))
        policy = PolicyTable(
            spec=spec,
            actions=np.array([[0, 1, 1]], dtype=np.int32),
            power_choices=np.array([[0.0], [1.0]]),
            rate_choices=np.array([[0.0], [0.0]]),
        )
        assert convexity_report(values) == []
        assert monotonicity_scan(policy) == []

    def test_violations_are_logged_not_raised(self, caplog):
        spec = self._spec(battery=(0.0, 1.0, 2.0))
        values = ValueTable(spec=spec, values=np.array([[0.0, 2.0, 1.0]]))
        with caplog.at_level("WARNING", logger="ehmac.services.mdp_service"):
            violations = convexity_report(values)
        assert len(violations) == 1
        assert "1 discrete convexity violations" in caplog.text

    def test_fine_grid_argmin_is_monotone(self):
        """On a 0.25 grid the argmin P and rho never drop by more than one grid step."""
        params = TestDataFactory.create_params(num_users=1, horizon=2)
        model = TestDataFactory.create_model(num_users=1, e_prob=0.5, p_prob=0.4, i_prob=0.5)
        spec = TestDataFactory.create_spec(params, model, 0.25)
        _, policy = backward_recursion(params, model, spec)
        violations = monotonicity_scan(policy)
        assert all(v.magnitude <= 1.0 + 1e-9 for v in violations), violations[:5]
