"""
Unit tests for scenario loading, overrides and validation.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from cartsim.shared.utils.config import scenario_path
from cartsim.shared.utils.errors import ValidationError
from cartsim.sim.scenario import (
    ScenarioSpec,
    apply_overrides,
    load_scenario,
    load_scenario_dict,
    parse_override,
)


@pytest.mark.parametrize(
    "name, plant_key, dim",
    [
        ("example", "double_integrator", 2),
        ("nonlinear_base", "nonlinear_example", 2),
        ("spacecraft_base", "spacecraft_planar", 3),
        ("leo_base", "leo_hcw", 3),
    ],
)
def test_canned_scenarios_load(name, plant_key, dim):
    spec = load_scenario(scenario_path(name))
    assert spec.plant_key == plant_key
    assert spec.plant().dim == dim
    realized = spec.realize(0)
    assert realized.n_agents >= 1
    assert len(realized.goals) == realized.n_agents


def test_example_contents():
    spec = load_scenario(scenario_path("example"))
    assert spec.name == "example"
    assert spec.n_agents == 2
    assert spec.n_ticks == 200
    assert spec.policy.kind == "cart_safety_only"
    assert_allclose(spec.obstacles[0], [0.0, 1.5])


class TestOverrides:
    def test_parse_keeps_yaml_types(self):
        assert parse_override("disturbance.d_bar=0.02") == ("disturbance.d_bar", 0.02)
        assert parse_override("policy.kind=clf_cbf_qp") == ("policy.kind", "clf_cbf_qp")
        assert parse_override("agents.goals=[[1, 2]]") == ("agents.goals", [[1, 2]])

    @pytest.mark.parametrize("text", ["horizon", "=3"])
    def test_malformed_override(self, text):
        with pytest.raises(ValidationError):
            parse_override(text)

    def test_nested_and_list_paths(self, head_on):
        data = apply_overrides(head_on(), ["agents.initial.0.1=0.5", ("disturbance.d_bar", 0.01), "seed=9"])
        assert data["agents"]["initial"][0] == [-1.0, 0.5]
        assert data["disturbance"] == {"d_bar": 0.01}
        assert data["seed"] == 9

    def test_original_is_not_modified(self, head_on):
        original = head_on()
        apply_overrides(original, ["agents.initial.1.0=3.0"])
        assert original["agents"]["initial"][1] == [1.0, 0.0]

    def test_bad_list_index(self, head_on):
        with pytest.raises(ValidationError) as excinfo:
            apply_overrides(head_on(), ["agents.initial.5.0=1.0"])
        assert excinfo.value.field == "agents.initial.5"


class TestValidation:
    def test_defaults_are_filled_in(self, head_on):
        spec = ScenarioSpec.from_dict(head_on())
        assert spec.substeps == 10
        assert spec.replan_period == 10
        assert spec.source["disturbance"]["profile"] == "constant"
        assert spec.policy.qp.input_box_limit == 1.0

    @pytest.mark.parametrize(
        "override, field",
        [
            (("gains.kp", 1.0), "gains.kp"),
            (("gains.u_bar_variant", "draft"), "gains.u_bar_variant"),
            (("safety.r_sen", 0.2), "safety.r_sen"),
            (("safety.r_s", None), "safety.r_s"),
            (("plant.key", "rover"), "plant.key"),
            (("schema_version", 2), "schema_version"),
            (("dt", 0.0), "dt"),
            (("horizon", 0.05), "horizon"),
            (("substeps", 0), "substeps"),
            (("disturbance.d_bar", -1.0), "disturbance.d_bar"),
            (("disturbance.profile", "gusty"), "disturbance.profile"),
            (("policy.kind", "mpc"), "policy.kind"),
            (("agents.goals", [[1.0, 0.0]]), "agents.goals"),
            (("agents.initial", [[0.0, 0.0], [0.3, 0.0]]), "agents.initial"),
            (("agents.initial", [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), "agents.initial"),
            (("seed", 1.5), "seed"),
            (("gains.k_v", "fast"), "gains.k_v"),
        ],
    )
    def test_invalid_fields_are_named(self, head_on, override, field):
        with pytest.raises(ValidationError) as excinfo:
            ScenarioSpec.from_dict(apply_overrides(head_on(), [override]))
        assert excinfo.value.field == field

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            load_scenario_dict(tmp_path / "absent.yaml")

    def test_non_mapping_file(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ValidationError):
            load_scenario_dict(path)


class TestRandomized:
    def _spec(self, head_on, **randomize):
        data = head_on(randomize={"n_agents": 4, "n_obstacles": 2, "low": [0.0, 0.0], "high": [6.0, 6.0], **randomize})
        del data["agents"]
        return ScenarioSpec.from_dict(data)

    def test_realization_is_deterministic_per_run(self, head_on):
        spec = self._spec(head_on)
        first, again, other = spec.realize(3), spec.realize(3), spec.realize(4)
        assert first.n_agents == 4 and len(first.obstacles) == 2
        assert_allclose([s.p for s in first.initial_states], [s.p for s in again.initial_states])
        assert not np.allclose([s.p for s in first.initial_states], [s.p for s in other.initial_states])

    def test_default_clearance_and_separation(self, head_on):
        spec = self._spec(head_on)
        assert spec.randomize.clearance == pytest.approx(0.5)
        realized = spec.realize(0)
        points = [s.p for s in realized.initial_states] + list(realized.obstacles)
        for i in range(len(points)):
            for j in range(i + 1, len(points)):
                assert np.linalg.norm(points[i] - points[j]) >= 0.5

    def test_realized_configuration_in_provenance(self, head_on):
        realized = self._spec(head_on).realize(1)
        data = realized.to_dict()
        assert data["realized"]["run_index"] == 1
        assert len(data["realized"]["initial"]) == 4

    def test_box_must_be_ordered(self, head_on):
        with pytest.raises(ValidationError) as excinfo:
            self._spec(head_on, low=[1.0, 1.0], high=[1.0, 5.0])
        assert excinfo.value.field == "randomize.high"
