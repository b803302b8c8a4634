"""
Unit tests for the safe target trajectory, the robust filter and the tracking-error envelope.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_almost_equal

from cartsim.shared.filters.contraction import evaluate_metric
from cartsim.shared.filters.projection import qp_oracle_halfspace
from cartsim.shared.filters.robust_filter import (
    ErrorEnvelope,
    PlantBounds,
    SafeTargetTrajectory,
    TargetPoint,
    composite_variable,
    error_envelope,
    estimate_plant_bounds,
    margin_from_envelope,
    robust_filter,
    robust_filter_general,
)
from cartsim.shared.models.dynamics import DisturbanceSpec, leo_lagrangian_plant
from cartsim.shared.models.gains import FilterGains, RobustGains
from cartsim.shared.models.world import AgentState
from cartsim.shared.utils.errors import GainTooSmall, TrajectoryDomainError, ValidationError


@pytest.fixture
def trajectory():
    times = np.array([0.0, 0.5, 1.0])
    p_d = np.array([[0.0, 0.0], [0.5, 0.0], [1.5, 0.0]])
    v_d = np.array([[1.0, 0.0], [2.0, 0.0], [2.0, 1.0]])
    u_d = np.array([[0.1, 0.0], [0.2, 0.0]])
    return SafeTargetTrajectory(times, p_d, v_d, u_d)


class TestSafeTargetTrajectory:
    def test_interpolation_holds_input_and_uses_segment_slope(self, trajectory):
        point = trajectory.at(0.25)
        assert_allclose(point.p, [0.25, 0.0])
        assert_allclose(point.v, [1.5, 0.0])
        assert_allclose(point.a, [2.0, 0.0])
        assert_allclose(point.u, [0.1, 0.0])

    def test_sample_times_return_stored_values(self, trajectory):
        point = trajectory.at(0.5)
        assert_allclose(point.p, [0.5, 0.0])
        assert_allclose(point.u, [0.2, 0.0])
        assert_allclose(trajectory.at(1.0).p, [1.5, 0.0])

    @pytest.mark.parametrize("t", [-0.1, 1.01])
    def test_outside_domain_raises(self, trajectory, t):
        with pytest.raises(TrajectoryDomainError):
            trajectory.at(t)
        assert not trajectory.covers(t)

    def test_invalid_grids_rejected(self):
        with pytest.raises(ValidationError):
            SafeTargetTrajectory(np.array([0.0]), np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((1, 2)))
        with pytest.raises(ValidationError):
            SafeTargetTrajectory(np.array([0.0, 0.0]), np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((1, 2)))
        with pytest.raises(ValidationError):
            SafeTargetTrajectory(np.array([0.0, 1.0]), np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((5, 2)))


def _target(p=(0.0, 0.0), v=(1.0, 0.0), u=(0.0, 0.0), a=(0.0, 0.0)):
    return TargetPoint(t=0.0, p=np.array(p), v=np.array(v), u=np.array(u), a=np.array(a))


class TestRobustFilter:
    def test_composite_variable(self):
        state = AgentState([1.0, 0.0], [0.0, 1.0])
        s = composite_variable(state, _target(), 2.0 * np.eye(2))
        assert_allclose(s, [1.0, 1.0])

    def test_on_target_passes_the_target_input(self, plant):
        target = _target(u=(0.3, -0.2))
        state = AgentState(target.p, target.v)
        out = robust_filter(target.u, target, state, plant, RobustGains(k_r=2.0))
        assert not out.active
        assert_allclose(out.u, [0.3, -0.2])
        assert_allclose(out.e_v, [0.0, 0.0])

    def test_reference_input_for_unit_mass(self, plant):
        gains = RobustGains(lambda_r=1.5, k_r=2.0)
        target = _target(a=(0.1, 0.0))
        state = AgentState([0.2, 0.0], [1.0, 0.4])
        out = robust_filter(np.zeros(2), target, state, plant, gains)
        s = composite_variable(state, target, gains.lambda_matrix(2))
        a_r = target.a - 1.5 * (state.v - target.v)
        assert_allclose(out.u_bar, a_r - 2.0 * s)

    def test_correction_matches_oracle(self):
        plant = leo_lagrangian_plant(0.4)
        gains = RobustGains(lambda_r=1.0, k_r=1.0)
        rng = np.random.default_rng(0)
        for _ in range(50):
            target = TargetPoint(0.0, *rng.normal(size=(4, 3)))
            state = AgentState(target.p + rng.normal(scale=0.2, size=3), target.v + rng.normal(scale=0.2, size=3))
            out = robust_filter(target.u, target, state, plant, gains)
            assert (out.u - out.u_bar) @ out.e_v <= 1e-12 * max(1.0, np.linalg.norm(out.u_bar))
            assert_allclose(out.u, qp_oracle_halfspace(target.u, out.u_bar, out.e_v), atol=1e-12)

    def test_composite_energy_decreases_under_the_filter(self, plant):
        gains = RobustGains(lambda_r=1.0, k_r=2.0)
        target = _target(u=(3.0, 0.0))
        state = AgentState([0.3, -0.1], [1.2, 0.2])
        out = robust_filter(target.u, target, state, plant, gains)
        s = out.e_v
        # d/dt (s^T s) = 2 (u - a_r) . s for the unit-mass plant
        a_r = target.a - gains.lambda_matrix(2) @ (state.v - target.v)
        assert 2.0 * (out.u - a_r) @ s <= -2.0 * gains.k_r * s @ s + 1e-12

    def test_general_variant(self, nonlinear_plant):
        gains = RobustGains(lambda_r=1.0, k_r=1.0)
        target = _target(u=(2.0, 2.0))
        state = AgentState([0.1, 0.0], [0.8, 0.3])
        metric = evaluate_metric(nonlinear_plant, state.p, state.v, target.v, 0.0, FilterGains())
        out = robust_filter_general(target.u, target, state, nonlinear_plant, gains, metric)
        assert (out.u - out.u_bar) @ out.e_v <= 1e-10
        on_target = robust_filter_general(target.u, target, AgentState(target.p, target.v), nonlinear_plant, gains, metric)
        assert_allclose(on_target.u, target.u)


class TestEnvelope:
    def _envelope(self, **kwargs):
        gains = RobustGains(lambda_r=1.0, k_r=1.0, epsilon_d=1.0)
        disturbance = DisturbanceSpec(d_bar=0.05, gamma_bar=0.1)
        return error_envelope(gains, PlantBounds(1.0, 1.0), disturbance, 0.3, dim=2, **kwargs)

    def test_constants(self):
        envelope = self._envelope(mean_initial_position_error=0.3)
        assert_almost_equal(envelope.k_r_bar, 0.475)
        assert_almost_equal(envelope.C_d, 0.06)
        assert_almost_equal(envelope.a, np.sqrt(0.06 / 0.95))
        assert_almost_equal(envelope.b, np.sqrt(0.09 - 0.06 / 0.95))
        assert_almost_equal(envelope.mean_bound(0.0), envelope.a + envelope.b)
        assert_almost_equal(envelope.expected_position_error(0.0), 0.3)

    def test_unit_mass_worked_example(self):
        gains = RobustGains(lambda_r=1.0, k_r=1.0, epsilon_d=1.0)
        bounds = PlantBounds(m_lower=1.0, m_upper=1.0, d_s_bar=0.0)
        envelope = error_envelope(gains, bounds, DisturbanceSpec(d_bar=0.1, gamma_bar=0.0), 0.0)
        assert_almost_equal(envelope.k_r_bar, 0.45)
        assert_almost_equal(envelope.C_d, 0.1)
        assert_almost_equal(envelope.a, np.sqrt(0.1 / 0.9))
        assert abs(envelope.a - 0.3333) < 1e-4
        assert envelope.b == 0.0

    @pytest.mark.parametrize("target, expected", [(0.9, 0.5), (0.99, 5.0)])
    def test_margin_from_known_supremum(self, target, expected):
        envelope = ErrorEnvelope(a=0.0, b=0.0, k_r_bar=1.0, C_d=0.0, lambda_min=1.0, mean_initial_position_error=0.05)
        assert_almost_equal(margin_from_envelope(envelope, target, horizon=10.0), expected)

    def test_zero_envelope_needs_no_margin(self):
        envelope = ErrorEnvelope(a=0.0, b=0.0, k_r_bar=1.0, C_d=0.0, lambda_min=1.0)
        assert margin_from_envelope(envelope, 0.99, horizon=10.0) == 0.0

    def test_position_bound_is_continuous_when_rates_coincide(self):
        base = dict(a=0.1, b=0.2, C_d=0.01, mean_initial_position_error=0.05)
        equal = ErrorEnvelope(k_r_bar=1.0, lambda_min=1.0, **base)
        near = ErrorEnvelope(k_r_bar=1.0 + 1e-7, lambda_min=1.0, **base)
        for t in (0.5, 1.0, 3.0):
            assert_almost_equal(equal.expected_position_error(t), near.expected_position_error(t), decimal=6)

    def test_steady_state_position_error(self):
        envelope = self._envelope()
        assert_almost_equal(envelope.expected_position_error(200.0), envelope.a / 1.0, decimal=6)

    def test_small_gain_raises(self):
        with pytest.raises(GainTooSmall):
            error_envelope(RobustGains(k_r=0.01), PlantBounds(1.0, 1.0), DisturbanceSpec(d_bar=0.05), 0.1)

    def test_margin_meets_target_probability(self):
        envelope = self._envelope(mean_initial_position_error=0.3)
        D_s = margin_from_envelope(envelope, 0.9, horizon=5.0)
        with_margin = envelope.with_margin(D_s)
        for t in np.linspace(0.0, 5.0, 51):
            assert with_margin.probability_floor(t) >= 0.9 - 1e-9

    @pytest.mark.parametrize("p", [0.0, 1.0, 1.5])
    def test_invalid_target_probability(self, p):
        with pytest.raises(ValidationError):
            margin_from_envelope(self._envelope(), p, 1.0)

    def test_probability_floor_without_margin(self):
        assert self._envelope().probability_floor(1.0) == 0.0

    def test_plant_bounds(self, plant):
        bounds = estimate_plant_bounds(plant, -np.ones(2), np.ones(2))
        assert (bounds.m_lower, bounds.m_upper) == (1.0, 1.0)
        with pytest.raises(ValidationError):
            PlantBounds(m_lower=2.0, m_upper=1.0)
