"""
Unit tests for experiment suite definitions, a small suite run and the quick property checks.
"""

import json

import pytest
import yaml

from cartsim.shared.utils.config import Config
from cartsim.shared.utils.errors import ValidationError
from cartsim.sim.artifacts import read_csv_rows, read_provenance
from cartsim.suites.reproduce import SuiteSpec, load_suite, row_scenario, run_suite
from cartsim.suites.verify import check_gradients, check_kkt, run_check


@pytest.fixture
def base_file(tmp_path, head_on):
    path = tmp_path / "head_on.yaml"
    path.write_text(yaml.safe_dump(head_on(horizon=1.0)))
    return path


def _suite(base_file, **fields):
    data = {
        "name": "tiny",
        "base_scenario": base_file.name,
        "policies": ["learned_emulated", "cart_safety_only"],
        "sweeps": [{"paths": ["disturbance.d_bar", "disturbance.gamma_bar"], "values": [0.0, 0.01]}],
        "runs": 1,
    }
    data.update(fields)
    return SuiteSpec.from_dict(data, base_dir=base_file.parent)


def test_sweep_rows(base_file):
    suite = _suite(base_file)
    assert suite.base_scenario == base_file
    rows = suite.rows()
    assert [label for label, *_ in rows] == [
        "learned_emulated/d_bar=0.0",
        "cart_safety_only/d_bar=0.0",
        "learned_emulated/d_bar=0.01",
        "cart_safety_only/d_bar=0.01",
    ]
    _, policy, overrides, values = rows[3]
    assert policy == "cart_safety_only"
    assert overrides == (("disturbance.d_bar", 0.01), ("disturbance.gamma_bar", 0.01))
    assert values == {"d_bar": 0.01}


def test_explicit_cases_replace_the_grid(base_file):
    suite = _suite(base_file, cases=[{"label": "robust", "policy": "cart_full", "set": {"dt": 0.05}}])
    assert suite.rows() == [("robust", "cart_full", (("dt", 0.05),), {})]
    spec = row_scenario(suite, "cart_full", (("dt", 0.05),), seed=11)
    assert spec.policy.kind == "cart_full"
    assert spec.dt == 0.05
    assert spec.seed == 11


@pytest.mark.parametrize(
    "fields, field",
    [
        ({"colour": "red"}, "suite.colour"),
        ({"base_scenario": None}, "suite.base_scenario"),
        ({"policies": ["mpc"]}, "suite.policies"),
        ({"policies": [], "cases": None}, "suite.policies"),
        ({"runs": 0}, "suite.runs"),
        ({"sweeps": [{"paths": ["dt"], "values": []}]}, "suite.sweeps.0"),
        ({"cases": [{"label": "x"}]}, "suite.cases.0.policy"),
    ],
)
def test_invalid_suites(base_file, fields, field):
    with pytest.raises(ValidationError) as excinfo:
        _suite(base_file, **fields)
    assert excinfo.value.field == field


def test_sweep_values_are_validated_per_row(base_file):
    suite = _suite(base_file, sweeps=[{"path": "disturbance.d_bar", "values": [-1.0]}])
    with pytest.raises(ValidationError) as excinfo:
        run_suite(suite, write=False)
    assert excinfo.value.field == "disturbance.d_bar"


def test_run_suite_writes_table(tmp_path, base_file):
    out = tmp_path / "out"
    result = run_suite(_suite(base_file), out_dir=out, seed=4)
    assert len(result.rows) == 4
    assert len(result.summaries) == 4
    assert (out / "table.csv").exists() and (out / "table.json").exists()
    assert (out / "trajectories" / "learned_emulated_d_bar=0.0.csv").exists()
    assert len(result.files) == 6

    row = result.row("learned_emulated/d_bar=0.01")
    assert row["n_runs"] == 1
    assert row["d_bar"] == 0.01
    assert row["gamma_bar"] == 0.01
    with pytest.raises(KeyError):
        result.row("absent")

    provenance = read_provenance(out / "table.csv")
    assert provenance["suite"] == "tiny"
    assert provenance["seed"] == 4
    assert len(provenance["rows"]) == 4
    table = read_csv_rows(out / "table.csv")
    assert [r["label"] for r in table] == [r["label"] for r in result.rows]
    document = json.loads((out / "table.json").read_text())
    assert document["rows"][0]["policy"] == "learned_emulated"


def test_run_suite_runs_override(tmp_path, base_file):
    result = run_suite(_suite(base_file), runs=2, write=False)
    assert all(row["n_runs"] == 2 for row in result.rows)
    assert result.files == []


@pytest.mark.parametrize(
    "key, n_rows",
    [("nonlinear_small", 3), ("nonlinear_large", 3), ("spacecraft_grid", 20), ("leo_table", 4)],
)
def test_canned_suites_are_valid(key, n_rows):
    suite = load_suite(key)
    assert suite.name == key
    rows = suite.rows()
    assert len(rows) == n_rows
    for _, policy, overrides, _ in rows:
        assert row_scenario(suite, policy, overrides).policy.kind == policy


def test_every_reproduce_key_has_a_suite():
    for key in Config.REPRODUCE_KEYS:
        assert load_suite(key).base_scenario.exists()


def test_quick_kkt_check():
    report = check_kkt(instances=40)
    assert report.passed, report.failures
    assert report.key == "kkt"


def test_quick_gradient_check():
    report = check_gradients(configurations=5)
    assert report.passed, report.failures


def test_unknown_check():
    with pytest.raises(ValidationError):
        run_check("everything")
