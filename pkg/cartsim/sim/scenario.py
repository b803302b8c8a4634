"""
Scenario files: YAML schema, defaults, dotted-path overrides and validation into a ScenarioSpec.
"""

import copy
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import structlog
import yaml

from ..shared.models.dynamics import DisturbanceSpec, Plant, get_plant
from ..shared.models.gains import FilterGains, RobustGains
from ..shared.models.world import AgentState, SafetyConfig, World, min_clearance, sample_configuration
from ..shared.policies.baselines import PolicySpec, QPParams
from ..shared.policies.planner import PlannerSettings
from ..shared.utils.config import Config
from ..shared.utils.errors import CartError, ValidationError

logger = structlog.get_logger(__name__)

DEFAULTS: Dict[str, Any] = {
    "schema_version": Config.SCHEMA_VERSION,
    "name": "scenario",
    "plant": {"key": None, "params": {}},
    "agents": {"initial": None, "initial_velocities": None, "goals": None},
    "obstacles": [],
    "randomize": None,
    "safety": {"r_s": None, "delta_r_s": None, "r_sen": None, "xi": None},
    "gains": {"k_p": 1.0, "k_v": 1.0, "R": None, "q_margin": 1.0},
    "robust": {"lambda_r": 1.0, "k_r": 1.0, "epsilon_d": 1.0},
    "disturbance": {"d_bar": 0.0, "gamma_bar": 0.0, "profile": "constant", "omega": 1.0},
    "policy": {
        "kind": "learned_emulated",
        "error_magnitude": 0.0,
        "tracking_kp": 1.0,
        "tracking_kd": 2.0,
        "reference": "auto",
        "qp": {"alpha_h": 1.0, "alpha_V": 1.0, "rho_weight": 1e3, "input_box_limit": 1.0, "mu": 1.0},
    },
    "planner": {
        "segments": 20,
        "w_dyn": 1e2,
        "w_goal": 1e2,
        "w_col": 1e2,
        "margin": 0.05,
        "max_nfev": 200,
        "dense_limit": 600,
    },
    "dt": 0.1,
    "horizon": 10.0,
    "substeps": 10,
    "replan_period": 10,
    "n_monte_carlo": 1,
    "seed": 0,
    "goal_tolerance": 0.1,
    "metadata": {},
}

RANDOMIZE_DEFAULTS: Dict[str, Any] = {
    "n_agents": None,
    "n_obstacles": 0,
    "low": None,
    "high": None,
    "clearance": None,
}

_FREE_FORM = {"plant.params", "metadata"}


def _merge(defaults: Dict[str, Any], data: Dict[str, Any], path: str = "") -> Dict[str, Any]:
    if not isinstance(data, dict):
        raise ValidationError(path or "scenario", "expected a mapping")
    merged = copy.deepcopy(defaults)
    for key, value in data.items():
        field = f"{path}.{key}" if path else str(key)
        if key not in defaults:
            raise ValidationError(field, "unknown field")
        if field in _FREE_FORM:
            merged[key] = copy.deepcopy(value) if value is not None else {}
        elif key == "randomize" and value is not None:
            merged[key] = _merge(RANDOMIZE_DEFAULTS, value, field)
        elif isinstance(defaults[key], dict) and value is not None:
            merged[key] = _merge(defaults[key], value, field)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _float(value: Any, field: str) -> float:
    try:
        result = float(value)
    except (TypeError, ValueError):
        raise ValidationError(field, f"expected a number, got {value!r}")
    if not np.isfinite(result):
        raise ValidationError(field, "must be finite")
    return result


def _int(value: Any, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ValidationError(field, f"expected an integer, got {value!r}")
    return int(value)


def _vectors(value: Any, field: str, dim: int) -> List[np.ndarray]:
    if value is None:
        return []
    try:
        array = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(field, "expected a list of numeric vectors")
    if array.size == 0:
        return []
    if array.ndim != 2 or array.shape[1] != dim:
        raise ValidationError(field, f"expected a list of {dim}-dimensional vectors")
    if not np.all(np.isfinite(array)):
        raise ValidationError(field, "all entries must be finite")
    return [row for row in array]


def _build(field: str, factory, **kwargs):
    """Construct a value object, tagging conversion errors with the scenario field."""
    try:
        return factory(**kwargs)
    except ValidationError:
        raise
    except (TypeError, ValueError) as e:
        raise ValidationError(field, str(e))


@dataclass(frozen=True)
class RandomizeSpec:
    """Box the initial states, goals and obstacles are rejection-sampled from."""

    low: np.ndarray
    high: np.ndarray
    n_agents: int
    n_obstacles: int
    clearance: float


@dataclass(frozen=True)
class ScenarioSpec:
    """Fully validated scenario; `source` holds the resolved dictionary it was built from."""

    name: str
    plant_key: str
    plant_params: Dict[str, Any]
    initial_states: Tuple[AgentState, ...]
    goals: Tuple[np.ndarray, ...]
    obstacles: Tuple[np.ndarray, ...]
    safety: SafetyConfig
    gains: FilterGains
    robust: RobustGains
    disturbance: DisturbanceSpec
    policy: PolicySpec
    planner: PlannerSettings
    dt: float
    horizon: float
    substeps: int
    replan_period: int
    n_monte_carlo: int
    seed: int
    goal_tolerance: float
    randomize: Optional[RandomizeSpec]
    metadata: Dict[str, Any]
    schema_version: int
    source: Dict[str, Any]
    run_index: int = 0

    @property
    def n_agents(self) -> int:
        return len(self.initial_states)

    @property
    def n_ticks(self) -> int:
        return int(round(self.horizon / self.dt))

    def plant(self) -> Plant:
        return get_plant(self.plant_key, **self.plant_params)

    def world(self) -> World:
        return World(self.initial_states, self.obstacles, 0.0)

    def to_dict(self) -> Dict[str, Any]:
        """Resolved scenario (defaults filled in), plus the sampled configuration when randomized."""
        data = copy.deepcopy(self.source)
        if self.randomize is not None and self.initial_states:
            data["realized"] = {
                "run_index": self.run_index,
                "initial": [s.p.tolist() for s in self.initial_states],
                "goals": [g.tolist() for g in self.goals],
                "obstacles": [o.tolist() for o in self.obstacles],
            }
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScenarioSpec":
        """
        Validate a scenario dictionary.

        Raises:
            ValidationError: naming the offending field
        """
        resolved = _merge(DEFAULTS, data or {})

        version = _int(resolved["schema_version"], "schema_version")
        if version != Config.SCHEMA_VERSION:
            raise ValidationError("schema_version", f"unsupported version {version} (expected {Config.SCHEMA_VERSION})")

        plant_key = resolved["plant"]["key"]
        if plant_key not in Config.SUPPORTED_PLANTS:
            raise ValidationError("plant.key", f"unknown plant {plant_key!r}; expected one of {Config.SUPPORTED_PLANTS}")
        plant_params = dict(resolved["plant"]["params"] or {})
        plant = get_plant(plant_key, **plant_params)
        dim = plant.dim

        s = resolved["safety"]
        for key in ("r_s", "delta_r_s", "r_sen"):
            if s[key] is None:
                raise ValidationError(f"safety.{key}", "is required")
        safety = _build(
            "safety",
            SafetyConfig,
            r_s=_float(s["r_s"], "safety.r_s"),
            delta_r_s=_float(s["delta_r_s"], "safety.delta_r_s"),
            r_sen=_float(s["r_sen"], "safety.r_sen"),
            xi=np.eye(dim) if s["xi"] is None else s["xi"],
        )
        if safety.dim != dim:
            raise ValidationError("safety.xi", f"must be {dim}x{dim} for plant '{plant_key}'")

        g = resolved["gains"]
        gains = _build(
            "gains",
            FilterGains,
            k_p=_float(g["k_p"], "gains.k_p"),
            k_v=_float(g["k_v"], "gains.k_v"),
            R=g["R"],
            q_margin=_float(g["q_margin"], "gains.q_margin"),
        )
        r = resolved["robust"]
        robust = _build(
            "robust",
            RobustGains,
            lambda_r=r["lambda_r"],
            k_r=_float(r["k_r"], "robust.k_r"),
            epsilon_d=_float(r["epsilon_d"], "robust.epsilon_d"),
        )
        robust.lambda_matrix(dim)

        seed = _int(resolved["seed"], "seed")
        d = resolved["disturbance"]
        disturbance = DisturbanceSpec(
            d_bar=_float(d["d_bar"], "disturbance.d_bar"),
            gamma_bar=_float(d["gamma_bar"], "disturbance.gamma_bar"),
            d_profile=d["profile"],
            seed=seed,
            omega=_float(d["omega"], "disturbance.omega"),
        )

        pol = resolved["policy"]
        qp = pol["qp"]
        policy = PolicySpec(
            kind=pol["kind"],
            error_magnitude=_float(pol["error_magnitude"], "policy.error_magnitude"),
            qp=QPParams(**{k: _float(v, f"policy.qp.{k}") for k, v in qp.items()}),
            tracking_kp=_float(pol["tracking_kp"], "policy.tracking_kp"),
            tracking_kd=_float(pol["tracking_kd"], "policy.tracking_kd"),
            reference=pol["reference"],
        )

        pl = resolved["planner"]
        planner = PlannerSettings(
            segments=_int(pl["segments"], "planner.segments"),
            w_dyn=_float(pl["w_dyn"], "planner.w_dyn"),
            w_goal=_float(pl["w_goal"], "planner.w_goal"),
            w_col=_float(pl["w_col"], "planner.w_col"),
            margin=_float(pl["margin"], "planner.margin"),
            max_nfev=_int(pl["max_nfev"], "planner.max_nfev"),
            dense_limit=_int(pl["dense_limit"], "planner.dense_limit"),
        )

        dt = _float(resolved["dt"], "dt")
        horizon = _float(resolved["horizon"], "horizon")
        if dt <= 0:
            raise ValidationError("dt", "must be positive")
        if horizon < dt:
            raise ValidationError("horizon", "must be at least one control tick (horizon >= dt)")
        substeps = _int(resolved["substeps"], "substeps")
        replan_period = _int(resolved["replan_period"], "replan_period")
        n_monte_carlo = _int(resolved["n_monte_carlo"], "n_monte_carlo")
        goal_tolerance = _float(resolved["goal_tolerance"], "goal_tolerance")
        if substeps < 1:
            raise ValidationError("substeps", "must be at least 1")
        if replan_period < 1:
            raise ValidationError("replan_period", "must be at least 1")
        if n_monte_carlo < 1:
            raise ValidationError("n_monte_carlo", "must be at least 1")
        if goal_tolerance <= 0:
            raise ValidationError("goal_tolerance", "must be positive")

        randomize = None
        if resolved["randomize"] is not None:
            rz = resolved["randomize"]
            if rz["low"] is None or rz["high"] is None or rz["n_agents"] is None:
                raise ValidationError("randomize", "low, high and n_agents are required")
            low = np.array(_vectors([rz["low"]], "randomize.low", dim)[0])
            high = np.array(_vectors([rz["high"]], "randomize.high", dim)[0])
            if np.any(high <= low):
                raise ValidationError("randomize.high", "must exceed randomize.low in every coordinate")
            clearance = rz["clearance"]
            randomize = RandomizeSpec(
                low=low,
                high=high,
                n_agents=_int(rz["n_agents"], "randomize.n_agents"),
                n_obstacles=_int(rz["n_obstacles"], "randomize.n_obstacles"),
                clearance=safety.r_s + 2.0 * safety.delta_r_s
                if clearance is None
                else _float(clearance, "randomize.clearance"),
            )
            if randomize.n_agents < 1:
                raise ValidationError("randomize.n_agents", "must be at least 1")

        agents = resolved["agents"]
        initial = _vectors(agents["initial"], "agents.initial", dim)
        goals = _vectors(agents["goals"], "agents.goals", dim)
        velocities = _vectors(agents["initial_velocities"], "agents.initial_velocities", dim)
        obstacles = _vectors(resolved["obstacles"], "obstacles", dim)

        if randomize is None:
            if not initial:
                raise ValidationError("agents.initial", "is required unless the scenario is randomized")
            if len(goals) != len(initial):
                raise ValidationError("agents.goals", f"expected {len(initial)} goals, got {len(goals)}")
            if velocities and len(velocities) != len(initial):
                raise ValidationError("agents.initial_velocities", f"expected {len(initial)} velocities")
        if not velocities:
            velocities = [np.zeros(dim) for _ in initial]

        spec = cls(
            name=str(resolved["name"]),
            plant_key=plant_key,
            plant_params=plant_params,
            initial_states=tuple(AgentState(p, v) for p, v in zip(initial, velocities)),
            goals=tuple(goals),
            obstacles=tuple(obstacles),
            safety=safety,
            gains=gains,
            robust=robust,
            disturbance=disturbance,
            policy=policy,
            planner=planner,
            dt=dt,
            horizon=horizon,
            substeps=substeps,
            replan_period=replan_period,
            n_monte_carlo=n_monte_carlo,
            seed=seed,
            goal_tolerance=goal_tolerance,
            randomize=randomize,
            metadata=dict(resolved["metadata"] or {}),
            schema_version=version,
            source=resolved,
        )
        if randomize is None:
            spec.check_initial_safety()
        return spec

    def check_initial_safety(self) -> None:
        """Reject configurations whose inflated clearance is not strictly positive."""
        min_h = min_clearance(self.world(), self.safety, physical=False)
        if min_h <= 0:
            raise ValidationError("agents.initial", f"initial configuration is not safe (min_h = {min_h:.4f})")

    def realize(self, run_index: int = 0) -> "ScenarioSpec":
        """
        Concrete scenario of one Monte-Carlo run.

        Randomized scenarios draw obstacles, initial positions and goals with seed + run_index;
        fixed scenarios are returned with the run index attached.
        """
        if self.randomize is None:
            return replace(self, run_index=run_index)

        rz = self.randomize
        rng = np.random.default_rng(self.seed + run_index)
        obstacles = list(self.obstacles)
        if rz.n_obstacles > 0:
            obstacles = sample_configuration(rng, rz.n_obstacles, rz.low, rz.high, rz.clearance)
        initial = sample_configuration(rng, rz.n_agents, rz.low, rz.high, rz.clearance, avoid=obstacles)
        goals = sample_configuration(rng, rz.n_agents, rz.low, rz.high, rz.clearance, avoid=obstacles)
        realized = replace(
            self,
            initial_states=tuple(AgentState(p, np.zeros_like(p)) for p in initial),
            goals=tuple(goals),
            obstacles=tuple(obstacles),
            run_index=run_index,
        )
        realized.check_initial_safety()
        return realized


def parse_override(text: str) -> Tuple[str, Any]:
    """Split `path=value`; the value is parsed as YAML so numbers, lists and booleans keep their type."""
    if "=" not in text:
        raise ValidationError("--set", f"expected path=value, got {text!r}")
    path, raw = text.split("=", 1)
    path = path.strip()
    if not path:
        raise ValidationError("--set", f"empty path in {text!r}")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ValidationError(path, f"cannot parse value {raw!r}: {e}")
    return path, value


def apply_overrides(
    data: Dict[str, Any], overrides: Iterable[Union[str, Tuple[str, Any]]]
) -> Dict[str, Any]:
    """
    Apply dotted-path overrides to a scenario dictionary (a copy is returned).

    Numeric path components index into lists; missing mappings are created.
    """
    result = copy.deepcopy(data or {})
    for item in overrides:
        path, value = parse_override(item) if isinstance(item, str) else item
        keys = path.split(".")
        node: Any = result
        for depth, key in enumerate(keys[:-1]):
            field = ".".join(keys[: depth + 1])
            if isinstance(node, list):
                node = node[_list_index(node, key, field)]
                continue
            if node.get(key) is None:
                node[key] = {}
            node = node[key]
            if not isinstance(node, (dict, list)):
                raise ValidationError(field, "cannot descend into a scalar value")
        last = keys[-1]
        if isinstance(node, list):
            node[_list_index(node, last, path)] = value
        else:
            node[last] = value
        logger.debug("override_applied", path=path, value=value)
    return result


def _list_index(node: list, key: str, field: str) -> int:
    if not key.isdigit() or int(key) >= len(node):
        raise ValidationError(field, f"invalid list index {key!r}")
    return int(key)


def load_scenario_dict(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a scenario YAML file into a dictionary."""
    path = Path(path)
    if not path.exists():
        raise ValidationError("scenario", f"file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ValidationError("scenario", f"cannot parse {path}: {e}")
    if not isinstance(data, dict):
        raise ValidationError("scenario", f"{path} does not contain a mapping")
    return data


def load_scenario(path: Union[str, Path], overrides: Iterable[Union[str, Tuple[str, Any]]] = ()) -> ScenarioSpec:
    """Load, override and validate a scenario file."""
    data = apply_overrides(load_scenario_dict(path), overrides)
    try:
        spec = ScenarioSpec.from_dict(data)
    except ValidationError:
        raise
    except CartError as e:
        raise ValidationError("scenario", str(e))
    logger.info("scenario_loaded", name=spec.name, plant=spec.plant_key, agents=spec.n_agents or "random")
    return spec
