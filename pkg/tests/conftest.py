"""
Shared fixtures: safety configurations, small worlds and a head-on scenario dictionary.
"""

import copy

import numpy as np
import pytest

from cartsim.shared.models.dynamics import double_integrator_plant, nonlinear_example_plant
from cartsim.shared.models.world import AgentState, SafetyConfig, World
from cartsim.shared.utils.config import Config, setup_logging

HEAD_ON = {
    "name": "head_on",
    "plant": {"key": "double_integrator", "params": {"dim": 2}},
    "agents": {
        "initial": [[-1.0, 0.0], [1.0, 0.0]],
        "goals": [[1.0, 0.0], [-1.0, 0.0]],
    },
    "safety": {"r_s": 0.3, "delta_r_s": 0.1, "r_sen": 1.0},
    "gains": {"k_p": 1.0, "k_v": 1.0},
    "policy": {"kind": "learned_emulated", "error_magnitude": 0.0, "reference": "regulation"},
    "dt": 0.1,
    "horizon": 6.0,
    "seed": 3,
}


@pytest.fixture(autouse=True)
def quiet_logging():
    setup_logging("WARNING", "console")


@pytest.fixture
def cfg():
    return SafetyConfig.isotropic(2, 0.5, 0.1, 2.0)


@pytest.fixture
def plant():
    return double_integrator_plant(2)


@pytest.fixture
def nonlinear_plant():
    return nonlinear_example_plant()


@pytest.fixture
def two_agent_world():
    return World(
        [AgentState([0.0, 0.0], [0.1, -0.2]), AgentState([1.0, 0.0], [-0.3, 0.1])],
        (np.array([0.0, 1.2]),),
        0.5,
    )


@pytest.fixture
def head_on():
    """Factory returning a fresh copy of the head-on scenario with nested overrides applied."""

    def make(**sections):
        data = copy.deepcopy(HEAD_ON)
        for key, value in sections.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key].update(value)
            else:
                data[key] = value
        return data

    return make


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    out = tmp_path / "artifacts"
    monkeypatch.setattr(Config, "CART_OUTPUT_DIR", str(out))
    return out
