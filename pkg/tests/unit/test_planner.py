"""
Unit tests for the global reference planner.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cartsim.shared.models.dynamics import double_integrator_plant, leo_lagrangian_plant, propagate
from cartsim.shared.models.world import AgentState, SafetyConfig
from cartsim.shared.policies import planner
from cartsim.shared.policies.planner import (
    PlannerSettings,
    _segment_layout,
    global_reference_policy,
    linear_segment_map,
)
from cartsim.shared.utils.errors import PlannerFailure, ValidationError


@pytest.mark.parametrize(
    "ticks, segments, expected",
    [(300, 20, (20, 15)), (20, 20, (20, 1)), (7, 20, (7, 1)), (13, 5, (1, 13)), (30, 20, (15, 2))],
)
def test_segment_layout_divides_the_tick_count(ticks, segments, expected):
    assert _segment_layout(ticks, segments) == expected


@pytest.mark.parametrize("plant", [double_integrator_plant(2), leo_lagrangian_plant(0.3)])
def test_segment_map_reproduces_rollout(plant):
    Phi, Gamma, c = linear_segment_map(plant, 0.1, 3, substeps=4)
    rng = np.random.default_rng(0)
    p, v, u = rng.normal(size=(3, plant.dim))
    expected_p, expected_v = p, v
    for k in range(3):
        expected_p, expected_v = propagate(plant, expected_p, expected_v, u, 0.1 * k, 0.1, 4)
    assert_allclose(Phi @ np.concatenate([p, v]) + Gamma @ u + c, np.concatenate([expected_p, expected_v]), atol=1e-12)


def test_nonlinear_plant_is_rejected(nonlinear_plant):
    with pytest.raises(ValidationError):
        linear_segment_map(nonlinear_plant, 0.1, 2)


def test_single_agent_minimum_energy_transfer():
    plant = double_integrator_plant(2)
    cfg = SafetyConfig.isotropic(2, 0.3, 0.1, 1.0)
    plan = global_reference_policy(
        plant, [AgentState([0.0, 0.0], [0.0, 0.0])], [np.array([1.0, 0.0])], [], cfg, dt=0.1, horizon=2.0
    )
    # Rest-to-rest double integrator: J* = 12 d^2 / T^3.
    optimum = 12.0 * 1.0 / 2.0 ** 3
    assert abs(plan.cost - optimum) <= 0.05 * optimum
    assert plan.goal_error < 1e-2
    assert plan.positions.shape == (21, 1, 2)
    assert plan.inputs.shape == (20, 1, 2)
    assert plan.segments == 20 and plan.ticks_per_segment == 1
    assert plan.cost == pytest.approx(float(np.sum(plan.inputs ** 2) * 0.1))


def test_plan_schedule_follows_the_rollout():
    plant = double_integrator_plant(2)
    cfg = SafetyConfig.isotropic(2, 0.3, 0.1, 1.0)
    plan = global_reference_policy(
        plant, [AgentState([0.0, 0.0], [0.0, 0.0])], [np.array([0.0, 1.0])], [], cfg, dt=0.1, horizon=1.0
    )
    schedule = plan.schedule()
    point = schedule.at(0, 0.3)
    assert_allclose(point.p, plan.positions[3, 0])
    assert_allclose(point.u, plan.inputs[3, 0])


def test_unsafe_rollout_raises(monkeypatch):
    def unsafe(*args, **kwargs):
        times = np.arange(2) * 0.1
        zeros = np.zeros((2, 1, 2))
        return times, zeros, zeros, np.zeros((1, 1, 2)), -0.5, 0.0

    monkeypatch.setattr(planner, "_dense_rollout", unsafe)
    with pytest.raises(PlannerFailure) as excinfo:
        global_reference_policy(
            double_integrator_plant(2),
            [AgentState([0.0, 0.0], [0.0, 0.0])],
            [np.array([1.0, 0.0])],
            [],
            SafetyConfig.isotropic(2, 0.3, 0.1, 1.0),
            dt=0.1,
            horizon=0.1,
        )
    assert excinfo.value.min_h == -0.5


@pytest.mark.parametrize(
    "kwargs", [{"segments": 0}, {"w_dyn": 0.0}, {"margin": -0.1}, {"max_nfev": 0}]
)
def test_invalid_settings(kwargs):
    with pytest.raises(ValidationError):
        PlannerSettings(**kwargs)


def test_horizon_shorter_than_a_tick():
    with pytest.raises(ValidationError):
        global_reference_policy(
            double_integrator_plant(2),
            [AgentState([0.0, 0.0], [0.0, 0.0])],
            [np.array([1.0, 0.0])],
            [],
            SafetyConfig.isotropic(2, 0.3, 0.1, 1.0),
            dt=0.1,
            horizon=0.01,
        )
