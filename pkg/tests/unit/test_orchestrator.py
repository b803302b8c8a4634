"""
Unit tests for closed-loop runs of the head-on scenario and a planned single-agent transfer.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from cartsim.sim.orchestrator import run_scenario
from cartsim.sim.scenario import ScenarioSpec


def _spec(head_on, **sections):
    return ScenarioSpec.from_dict(head_on(**sections))


def test_learned_policy_collides_head_on(head_on):
    result = run_scenario(_spec(head_on))
    assert result.collided
    assert not result.success
    assert result.min_h < 0


def test_safety_filter_keeps_head_on_agents_apart(head_on):
    result = run_scenario(_spec(head_on, policy={"kind": "cart_safety_only"}))
    assert not result.collided
    assert not result.success
    assert result.min_h > 0
    assert result.events == ()


def test_result_shapes_and_metrics(head_on):
    result = run_scenario(_spec(head_on), run_index=2)
    assert result.positions.shape == (61, 2, 2)
    assert result.velocities.shape == (61, 2, 2)
    assert result.inputs.shape == (60, 2, 2)
    assert result.min_h_series.shape == (61,)
    assert result.tracking_error_series.shape == (60,)
    assert result.rng_seed == 5
    assert result.run_index == 2
    assert result.policy_kind == "learned_emulated"
    assert result.control_effort == pytest.approx(np.sum(result.inputs ** 2) * 0.1)
    assert_allclose(result.positions[0], [[-1.0, 0.0], [1.0, 0.0]])
    assert result.reference_cost is None


def test_runs_are_reproducible(head_on):
    spec = _spec(head_on, disturbance={"d_bar": 0.01, "gamma_bar": 0.05})
    first, again = run_scenario(spec, 1), run_scenario(spec, 1)
    other = run_scenario(spec, 2)
    assert_array_equal(first.positions, again.positions)
    assert first.control_effort == again.control_effort
    assert not np.allclose(first.positions, other.positions)


def test_global_reference_effort_matches_plan(head_on):
    spec = _spec(
        head_on,
        agents={"initial": [[0.0, 0.0]], "goals": [[1.0, 0.0]]},
        policy={"kind": "global_reference"},
        horizon=2.0,
    )
    result = run_scenario(spec)
    assert result.reference_cost is not None
    assert result.control_effort == pytest.approx(result.reference_cost, rel=1e-9)
    assert result.success
    assert result.final_goal_error <= 0.1


def test_clf_cbf_inputs_respect_the_box(head_on):
    spec = _spec(head_on, policy={"kind": "clf_cbf_qp"})
    result = run_scenario(spec)
    assert np.all(np.abs(result.inputs) <= spec.policy.qp.input_box_limit + 1e-7)


def test_robust_filter_without_disturbance_tracks_filtered_rollout(head_on):
    safety_only = run_scenario(_spec(head_on, policy={"kind": "cart_safety_only"}))
    full = run_scenario(_spec(head_on, policy={"kind": "cart_full"}))
    assert full.events == ()
    assert_allclose(full.positions, safety_only.positions, atol=1e-9)
    assert_allclose(full.inputs, safety_only.inputs, atol=1e-9)
    assert_allclose(full.tracking_error_series, 0.0, atol=1e-9)
