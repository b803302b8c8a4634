"""
Unit tests for the command-line entry point and its exit codes.
"""

import json

import pytest

import cartsim.app as app
import cartsim.suites.verify as verify
from cartsim.shared.utils.config import scenario_path
from cartsim.shared.utils.errors import NotSafe
from cartsim.sim.artifacts import read_provenance
from cartsim.suites.verify import VerifyReport

EXAMPLE = str(scenario_path("example"))


def _run(*args):
    return app.main(["--log-level", "WARNING", *args])


def test_run_writes_artifacts(tmp_path, capsys):
    code = _run("run", EXAMPLE, "--set", "horizon=1.0", "--out", str(tmp_path))
    assert code == app.EXIT_OK
    assert capsys.readouterr().out.startswith("success=")
    assert (tmp_path / "example_trajectory.csv").exists()
    assert (tmp_path / "example_metrics.json").exists()


def test_run_records_overrides_in_provenance(tmp_path):
    code = _run(
        "run", EXAMPLE, "--set", "horizon=1.0", "--set", "disturbance.d_bar=0.02", "--seed", "5", "--out", str(tmp_path)
    )
    assert code == app.EXIT_OK
    provenance = read_provenance(tmp_path / "example_trajectory.csv")
    assert provenance["scenario"]["disturbance"]["d_bar"] == 0.02
    assert provenance["scenario"]["horizon"] == 1.0
    assert provenance["seed"] == 5
    metrics = json.loads((tmp_path / "example_metrics.json").read_text())
    assert metrics["provenance"]["scenario"]["seed"] == 5


def test_run_batch(tmp_path):
    code = _run("run", EXAMPLE, "--set", "horizon=0.5", "--runs", "2", "--out", str(tmp_path))
    assert code == app.EXIT_OK
    metrics = json.loads((tmp_path / "example_metrics.json").read_text())["metrics"]
    assert metrics["n_runs"] == 2


def test_run_uses_default_output_dir(output_dir):
    assert _run("run", EXAMPLE, "--set", "horizon=0.5") == app.EXIT_OK
    assert (output_dir / "example_metrics.json").exists()


@pytest.mark.parametrize(
    "overrides",
    [
        ["--set", "gains.kp=1.0"],
        ["--set", "safety.r_sen=0.2"],
        ["--set", "horizon"],
        ["--set", "plant.key=rover"],
    ],
)
def test_invalid_scenario_exits_with_validation_code(tmp_path, capsys, overrides):
    assert _run("run", EXAMPLE, *overrides, "--out", str(tmp_path)) == app.EXIT_VALIDATION
    assert "error:" in capsys.readouterr().err


def test_missing_scenario_file(tmp_path):
    assert _run("run", str(tmp_path / "absent.yaml"), "--out", str(tmp_path)) == app.EXIT_VALIDATION


def test_workers_must_be_positive(tmp_path):
    assert app.main(["--workers", "0", "run", EXAMPLE, "--out", str(tmp_path)]) == app.EXIT_VALIDATION


def test_runtime_failure_exit_code(tmp_path, monkeypatch):
    def fail(spec, run_index=0):
        raise NotSafe(0.0, 1)

    monkeypatch.setattr(app, "run_scenario", fail)
    assert _run("run", EXAMPLE, "--out", str(tmp_path)) == app.EXIT_RUNTIME


def test_check_config(capsys):
    assert _run("check-config") == app.EXIT_OK
    status = json.loads(capsys.readouterr().out)
    assert status["valid"] is True
    assert status["settings"]["schema_version"] == 1
    assert "version" in status


@pytest.mark.parametrize("passed, expected", [(True, 0), (False, 1)])
def test_verify_exit_code(monkeypatch, capsys, passed, expected):
    failures = [] if passed else ["kkt residual 1e-3 > 1e-8"]
    report = VerifyReport("kkt", passed, {"max_residual": 1e-3}, failures)
    monkeypatch.setattr(verify, "run_check", lambda key, out_dir=None: report)
    assert _run("verify", "kkt") == expected
    captured = capsys.readouterr()
    assert captured.out.startswith("kkt: ")
    assert ("FAILED" in captured.err) is not passed


def test_unknown_subcommand_choice():
    with pytest.raises(SystemExit) as excinfo:
        _run("reproduce", "everything")
    assert excinfo.value.code == 2
