"""
Unit tests for the emulated learned policy, the reference schedules and the CLF-CBF QP.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_almost_equal

from cartsim.shared.filters.robust_filter import SafeTargetTrajectory
from cartsim.shared.models.dynamics import double_integrator_plant
from cartsim.shared.models.world import AgentState, SafetyConfig, World, observe
from cartsim.shared.policies.baselines import (
    PlanSchedule,
    PolicySpec,
    QPParams,
    ReferencePoint,
    RegulationSchedule,
    bounded_perturbation,
    build_clf_cbf_qp,
    clf_cbf_qp_policy,
    clf_metric,
    learned_policy_emulated,
)
from cartsim.shared.utils.errors import ValidationError


def _still(p):
    p = np.asarray(p, dtype=float)
    return ReferencePoint(p=p, v=np.zeros_like(p), a=np.zeros_like(p))


class TestPerturbation:
    def test_bounded_and_deterministic(self):
        for t in np.linspace(0.0, 50.0, 201):
            value = bounded_perturbation(11, 2, t, 3)
            assert np.all(np.abs(value) <= 1.0 + 1e-12)
        assert_allclose(bounded_perturbation(11, 2, 1.3, 3), bounded_perturbation(11, 2, 1.3, 3))

    def test_agents_get_different_signals(self):
        assert not np.allclose(bounded_perturbation(11, 0, 1.3, 2), bounded_perturbation(11, 1, 1.3, 2))


class TestLearnedPolicy:
    def test_pd_law_on_double_integrator(self, cfg, plant):
        obs = observe(World([AgentState([0.0, 1.0], [0.5, 0.0])]), 0, cfg)
        u = learned_policy_emulated(obs, _still([1.0, 1.0]), plant, 0.0, 0, tracking_kp=2.0, tracking_kd=1.0)
        assert_allclose(u, [2.0 * 1.0 - 0.5, 0.0])

    def test_feed_forward_is_used_when_present(self, cfg, plant):
        obs = observe(World([AgentState([0.0, 0.0], [0.0, 0.0])]), 0, cfg)
        reference = ReferencePoint(p=np.zeros(2), v=np.zeros(2), a=np.zeros(2), u=np.array([0.4, -0.4]))
        assert_allclose(learned_policy_emulated(obs, reference, plant, 0.0, 0), [0.4, -0.4])

    def test_learning_error_is_bounded(self, cfg, plant):
        obs = observe(World([AgentState([0.3, 0.0], [0.0, 0.2])], time=2.5), 0, cfg)
        nominal = learned_policy_emulated(obs, _still([1.0, 0.0]), plant, 0.0, 4)
        perturbed = learned_policy_emulated(obs, _still([1.0, 0.0]), plant, 0.05, 4)
        assert np.max(np.abs(perturbed - nominal)) <= 0.05 + 1e-12
        assert not np.allclose(perturbed, nominal)


class TestSpecs:
    def test_global_reference_has_no_learning_error(self):
        assert PolicySpec(kind="global_reference", error_magnitude=0.1).effective_error == 0.0
        assert PolicySpec(kind="cart_full", error_magnitude=0.1).effective_error == 0.1

    @pytest.mark.parametrize(
        "kwargs", [{"kind": "mpc"}, {"error_magnitude": -0.1}, {"reference": "spline"}, {"tracking_kp": 0.0}]
    )
    def test_invalid_policy(self, kwargs):
        with pytest.raises(ValidationError):
            PolicySpec(**kwargs)

    def test_invalid_qp_params(self):
        with pytest.raises(ValidationError) as excinfo:
            QPParams(rho_weight=0.0)
        assert excinfo.value.field == "policy.qp.rho_weight"


class TestSchedules:
    def test_regulation(self):
        point = RegulationSchedule([np.array([1.0, 2.0])]).at(0, 7.0)
        assert_allclose(point.p, [1.0, 2.0])
        assert_allclose(point.v, [0.0, 0.0])
        assert point.u is None

    def test_plan_is_held_after_its_end(self):
        times = np.array([0.0, 1.0])
        trajectory = SafeTargetTrajectory(times, np.array([[0.0], [1.0]]), np.array([[1.0], [0.5]]), np.array([[0.2]]))
        schedule = PlanSchedule([trajectory])
        assert_allclose(schedule.at(0, 0.5).u, [0.2])
        late = schedule.at(0, 3.0)
        assert_allclose(late.p, [1.0])
        assert_allclose(late.a, [0.0])
        assert late.u is None


class TestClfCbf:
    def test_clf_metric_is_positive_definite(self):
        lam = np.array([[2.0, 0.3], [0.3, 1.0]])
        M_x = clf_metric(lam)
        assert np.linalg.eigvalsh(M_x).min() > 0
        e_p, e_v = np.array([0.5, -1.0]), np.array([0.2, 0.4])
        e = np.concatenate([e_p, e_v])
        assert_almost_equal(e @ M_x @ e, np.sum((e_v + lam @ e_p) ** 2) + np.sum((lam @ e_p) ** 2))

    def test_rows_and_labels(self, two_agent_world):
        cfg = SafetyConfig.isotropic(2, 0.5, 0.1, 2.0)
        plant = double_integrator_plant(2)
        problem = build_clf_cbf_qp(
            observe(two_agent_world, 0, cfg), plant, np.zeros(2), _still([2.0, 2.0]), cfg, QPParams(), np.eye(2)
        )
        assert problem.labels == (
            "cbf_agent_1",
            "cbf_obstacle_0",
            "clf",
            "box_upper_0",
            "box_lower_0",
            "box_upper_1",
            "box_lower_1",
        )
        assert problem.A.shape == (7, 3)
        assert_allclose(problem.H, 2.0 * np.diag([1.0, 1.0, 1e3]))

    def test_clf_relaxation_hand_solution(self):
        cfg = SafetyConfig.isotropic(1, 0.3, 0.1, 1.0)
        plant = double_integrator_plant(1)
        obs = observe(World([AgentState([0.0], [1.0])]), 0, cfg)
        w = 1e3
        params = QPParams(alpha_V=1.0, rho_weight=w, input_box_limit=100.0)
        result = clf_cbf_qp_policy(obs, plant, np.zeros(1), _still([0.0]), cfg, params, np.eye(1))
        # Row 2u - rho <= -3 active: u = -lam, rho = lam / (2w), lam = 3 / (2 + 1 / (2w)).
        lam = 3.0 / (2.0 + 1.0 / (2.0 * w))
        assert_allclose(result.u, [-lam], rtol=1e-8)
        assert_almost_equal(result.rho, lam / (2.0 * w))
        assert result.active == ("clf",)

    def test_cbf_limits_approach_to_obstacle(self):
        cfg = SafetyConfig.isotropic(1, 0.3, 0.1, 2.0)
        plant = double_integrator_plant(1)
        obs = observe(World([AgentState([0.0], [0.0])], (np.array([1.0]),)), 0, cfg)
        params = QPParams(alpha_h=1.0, mu=1.0, input_box_limit=10.0)
        result = clf_cbf_qp_policy(obs, plant, np.array([1.0]), _still([0.0]), cfg, params, np.eye(1))
        # grad h = 1/1.6, h = 0.6/1.6: the CBF row reads 0.625 u <= 0.375.
        assert_allclose(result.u, [0.6], rtol=1e-8)
        assert "cbf_obstacle_0" in result.active

    def test_box_bounds_hold(self, cfg, plant):
        obs = observe(World([AgentState([0.0, 0.0], [0.0, 0.0])]), 0, cfg)
        result = clf_cbf_qp_policy(obs, plant, np.array([5.0, -5.0]), _still([0.0, 0.0]), cfg, QPParams(), np.eye(2))
        assert np.all(np.abs(result.u) <= 1.0 + 1e-9)
