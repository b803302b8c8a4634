"""
Unit tests for artifact writers and their provenance headers.
"""

import json

import numpy as np
import pytest

from cartsim import __version__
from cartsim.sim.artifacts import (
    build_provenance,
    read_csv_rows,
    read_provenance,
    write_envelope_csv,
    write_metrics_json,
    write_table,
    write_trajectory_csv,
)
from cartsim.sim.monte_carlo import monte_carlo
from cartsim.sim.orchestrator import run_scenario
from cartsim.sim.scenario import ScenarioSpec


@pytest.fixture
def spec(head_on):
    return ScenarioSpec.from_dict(head_on(horizon=1.0))


@pytest.fixture
def result(spec):
    return run_scenario(spec, 1)


def test_trajectory_csv(tmp_path, spec, result):
    path = write_trajectory_csv(tmp_path / "nested" / "run.csv", result, spec)
    provenance = read_provenance(path)
    assert provenance["package"] == "cartsim"
    assert provenance["version"] == __version__
    assert provenance["seed"] == 4
    assert provenance["run_index"] == 1
    assert provenance["policy"] == "learned_emulated"
    assert provenance["scenario"]["name"] == "head_on"
    assert provenance["scenario"]["dt"] == 0.1
    assert provenance["settings"]["schema_version"] == 1

    rows = read_csv_rows(path)
    assert len(rows) == 11 * 2
    assert list(rows[0]) == ["t", "agent", "p0", "p1", "v0", "v1", "u0", "u1", "min_h"]
    assert float(rows[0]["p0"]) == -1.0
    assert rows[1]["agent"] == "1"
    assert float(rows[2]["u0"]) == result.inputs[1, 0, 0]
    assert rows[-1]["u0"] == "" and rows[-1]["u1"] == ""
    assert float(rows[-1]["t"]) == pytest.approx(1.0)


def test_metrics_json_for_a_single_run(tmp_path, spec, result):
    first = write_metrics_json(tmp_path / "a.json", spec, result=result)
    second = write_metrics_json(tmp_path / "b.json", spec, result=result)
    assert first.read_text() == second.read_text()
    document = json.loads(first.read_text())
    assert set(document) == {"provenance", "metrics"}
    metrics = document["metrics"]
    assert metrics["J"] == pytest.approx(result.control_effort)
    assert metrics["success_rate"] == 0.0
    assert metrics["run_index"] == 1


def test_metrics_json_for_a_batch(tmp_path, spec):
    summary = monte_carlo(spec, 2)
    document = json.loads(write_metrics_json(tmp_path / "m.json", spec, summary=summary).read_text())
    metrics = document["metrics"]
    assert metrics["n_runs"] == 2
    assert len(metrics["runs"]) == 2
    assert metrics["mean_J"] == pytest.approx(summary.mean_J)


def test_metrics_json_needs_content(tmp_path, spec):
    with pytest.raises(ValueError):
        write_metrics_json(tmp_path / "m.json", spec)


def test_table(tmp_path):
    rows = [
        {"label": "a", "success_rate": 0.5, "events": {"not_safe": 2}},
        {"label": "b", "success_rate": 1.0, "extra": None},
    ]
    csv_path, json_path = write_table(tmp_path / "suite", rows, build_provenance(None, 7, suite="demo"))
    assert read_provenance(csv_path)["suite"] == "demo"
    table = read_csv_rows(csv_path)
    assert list(table[0]) == ["label", "success_rate", "events", "extra"]
    assert json.loads(table[0]["events"]) == {"not_safe": 2}
    assert table[1]["extra"] == ""
    document = json.loads(json_path.read_text())
    assert document["provenance"]["seed"] == 7
    assert document["rows"][1]["success_rate"] == 1.0


def test_envelope_csv(tmp_path):
    times = np.linspace(0.0, 1.0, 5)
    path = write_envelope_csv(
        tmp_path / "envelope.csv",
        times,
        np.full(5, 0.1),
        np.full(5, 0.2),
        {"seed": 0},
        position_error=np.zeros(5),
        position_bound=np.ones(5),
    )
    rows = read_csv_rows(path)
    assert len(rows) == 5
    assert list(rows[0]) == ["t", "mean_s", "bound", "mean_position_error", "position_bound"]
    assert float(rows[-1]["t"]) == 1.0
