"""State/control spaces, dynamics, validity, rewards and path cost."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path as FsPath
from typing import Callable, Optional, Sequence

import numpy as np
import yaml

from . import kernels

DEFAULT_RESOLUTION = 0.01


class OutOfBounds(ValueError):
    """Propagation left the state box X."""


class ScenarioError(ValueError):
    """A scenario config is malformed or violates a scenario invariant."""


def _vec(values, name: str, dim: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if dim is not None and arr.shape[0] != dim:
        raise ScenarioError(f"{name}: expected {dim} components, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{name}: non-finite component")
    return arr


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def closest_point(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)


@dataclass(frozen=True)
class RewardField:
    """Piecewise-constant state reward: first matching box wins, else default."""

    region_lo: np.ndarray  # (R, d)
    region_hi: np.ndarray
    values: np.ndarray  # (R,)
    default_value: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if np.any(vals < 0) or np.any(vals > 1) or not 0.0 <= self.default_value <= 1.0:
            raise ScenarioError("reward values must lie in [0, 1]")

    @classmethod
    def constant(cls, value: float, dim: int = 2) -> "RewardField":
        return cls(np.zeros((0, dim)), np.zeros((0, dim)), np.zeros(0), float(value))

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        for lo, hi, v in zip(self.region_lo, self.region_hi, self.values):
            if np.all(x >= lo) and np.all(x <= hi):
                return float(v)
        return self.default_value

    def evaluate(self, P: np.ndarray) -> np.ndarray:
        """Vectorised lookup for an (n, d) array of states."""
        P = np.atleast_2d(P)
        out = np.full(P.shape[0], self.default_value)
        # reverse order so that earlier regions overwrite later ones
        for lo, hi, v in zip(self.region_lo[::-1], self.region_hi[::-1], self.values[::-1]):
            out[np.all((P >= lo) & (P <= hi), axis=1)] = v
        return out

    @property
    def peak(self) -> float:
        return float(max([self.default_value, *self.values.tolist()]))


@dataclass(frozen=True)
class Scenario:
    name: str
    state_lo: np.ndarray
    state_hi: np.ndarray
    control_lo: np.ndarray
    control_hi: np.ndarray
    obstacle_lo: np.ndarray  # (k, d); closed boxes
    obstacle_hi: np.ndarray
    goal: Box
    start: np.ndarray
    reward_field: RewardField
    # None selects the single integrator x' = u, which the compiled kernels handle;
    # any other callable f(x, u, d) -> x is propagated in Python.
    dynamics: Optional[Callable[[np.ndarray, np.ndarray, float], np.ndarray]] = field(
        default=None, compare=False
    )

    @property
    def state_dim(self) -> int:
        return int(self.state_lo.shape[0])

    @property
    def control_dim(self) -> int:
        return int(self.control_lo.shape[0])

    @property
    def bounds(self) -> Box:
        return Box(self.state_lo, self.state_hi)


@dataclass(frozen=True)
class Transition:
    x_p: np.ndarray
    u: np.ndarray
    d: float
    x_c: np.ndarray
    x_trg: np.ndarray
    reward: float


@dataclass
class Path:
    transitions: list = field(default_factory=list)
    total_cost: float = 0.0

    def __len__(self):
        return len(self.transitions)

    def states(self) -> np.ndarray:
        if not self.transitions:
            return np.zeros((0, 0))
        return np.vstack([self.transitions[0].x_p] + [t.x_c for t in self.transitions])


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def propagate(x, u, d: float, scenario: Scenario) -> np.ndarray:
    """Integrate the dynamics from ``x`` under constant ``u`` for ``d`` seconds.

    Raises :class:`OutOfBounds` when the result leaves X.
    """
    if d <= 0:
        raise ValueError("duration must be positive")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if scenario.dynamics is None:
        out = x + u * d
    else:
        out = np.asarray(scenario.dynamics(x, u, d), dtype=float)
    if np.any(out < scenario.state_lo) or np.any(out > scenario.state_hi):
        raise OutOfBounds(f"propagated state {out} outside X")
    return out


def is_valid(x, scenario: Scenario) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(
        kernels.point_valid(x, scenario.state_lo, scenario.state_hi, scenario.obstacle_lo, scenario.obstacle_hi)
    )


def segment_valid(x_p, x_c, scenario: Scenario, resolution: float = DEFAULT_RESOLUTION) -> bool:
    """Dense check of the straight segment at spacing <= ``resolution``."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    return bool(
        kernels.segment_valid(
            np.asarray(x_p, dtype=float),
            np.asarray(x_c, dtype=float),
            scenario.state_lo,
            scenario.state_hi,
            scenario.obstacle_lo,
            scenario.obstacle_hi,
            float(resolution),
        )
    )


def state_reward(x_p, x_c, field: RewardField) -> float:
    return 0.5 * (field(x_p) + field(x_c))


def reward_of(tau: Transition, field: RewardField) -> float:
    return state_reward(tau.x_p, tau.x_c, field)


def transition_cost(x_p, x_c, reward: float) -> float:
    return (1.0 - reward) * math.dist(x_p, x_c)


def path_cost(path, field: RewardField) -> float:
    """Sum of (1 - reward) * segment length; accepts a Path or a transition list."""
    transitions = path.transitions if isinstance(path, Path) else path
    total = 0.0
    for t in transitions:
        total += transition_cost(t.x_p, t.x_c, state_reward(t.x_p, t.x_c, field))
    return total


# ---------------------------------------------------------------------------
# scenario ingestion
# ---------------------------------------------------------------------------

BUNDLED = ("A", "B", "C", "D", "E")


def _boxes(items, name, dim):
    lo = np.zeros((0, dim))
    hi = np.zeros((0, dim))
    if items:
        lo = np.vstack([_vec(b["lo"], f"{name}.lo", dim) for b in items])
        hi = np.vstack([_vec(b["hi"], f"{name}.hi", dim) for b in items])
        if np.any(hi < lo):
            raise ScenarioError(f"{name}: box with hi < lo")
    return lo, hi


def scenario_from_dict(cfg: dict, name: str = "scenario") -> Scenario:
    try:
        dim = int(cfg["state_dim"])
        state_lo = _vec(cfg["state_lo"], "state_lo", dim)
        state_hi = _vec(cfg["state_hi"], "state_hi", dim)
        control_lo = _vec(cfg["control_lo"], "control_lo")
        control_hi = _vec(cfg["control_hi"], "control_hi", control_lo.shape[0])
        start = _vec(cfg["start"], "start", dim)
        goal = Box(_vec(cfg["goal"]["lo"], "goal.lo", dim), _vec(cfg["goal"]["hi"], "goal.hi", dim))
        obs_lo, obs_hi = _boxes(cfg.get("obstacles") or [], "obstacles", dim)
        regions = cfg.get("reward_regions") or []
        reg_lo, reg_hi = _boxes(regions, "reward_regions", dim)
        values = np.array([float(r["value"]) for r in regions])
        default = float(cfg.get("reward_default", 0.0))
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scenario config: {exc!r}") from exc
    if np.any(state_hi <= state_lo) or np.any(control_hi < control_lo):
        raise ScenarioError("degenerate state or control bounds")
    field = RewardField(reg_lo.reshape(-1, dim), reg_hi.reshape(-1, dim), values, default)
    sc = Scenario(
        name=str(cfg.get("name", name)),
        state_lo=state_lo,
        state_hi=state_hi,
        control_lo=control_lo,
        control_hi=control_hi,
        obstacle_lo=obs_lo,
        obstacle_hi=obs_hi,
        goal=goal,
        start=start,
        reward_field=field,
    )
    if not is_valid(start, sc):
        raise ScenarioError("start state is not in X_free")
    if np.any(goal.lo < state_lo) or np.any(goal.hi > state_hi) or goal.volume <= 0:
        raise ScenarioError("goal region must be a positive-volume box inside X")
    return sc


def load_scenario(config_text: str, name: str = "scenario") -> Scenario:
    """Parse a YAML scenario document."""
    try:
        cfg = yaml.safe_load(config_text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"cannot parse scenario: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ScenarioError("scenario config must be a mapping")
    return scenario_from_dict(cfg, name)


def scenario_text(name: str) -> str:
    key = name.removeprefix("scenario_").upper()
    if key not in BUNDLED:
        raise KeyError(f"no bundled scenario {name!r}")
    return resources.files("mabrrt.scenarios").joinpath(f"scenario_{key}.yaml").read_text()


def resolve_scenario(spec: str) -> Scenario:
    """Load a bundled scenario by name (``A`` or ``scenario_A``) or a YAML file path."""
    p = FsPath(spec)
    if p.suffix in (".yaml", ".yml") or p.exists():
        return load_scenario(p.read_text(), name=p.stem)
    return load_scenario(scenario_text(spec), name=f"scenario_{spec.removeprefix('scenario_').upper()}")


def free_scenario(start: Sequence[float] = (0.1, 0.1), goal_center: Sequence[float] = (0.9, 0.9),
                  goal_half: float = 0.05, reward: float = 0.5) -> Scenario:
    """Obstacle-free unit square with a constant reward field (handy for tests)."""
    gc = np.asarray(goal_center, dtype=float)
    cfg = {
        "state_dim": 2,
        "state_lo": [0, 0],
        "state_hi": [1, 1],
        "control_lo": [-0.5, -0.5],
        "control_hi": [0.5, 0.5],
        "start": list(start),
        "goal": {"lo": (gc - goal_half).tolist(), "hi": (gc + goal_half).tolist()},
        "obstacles": [],
        "reward_regions": [],
        "reward_default": reward,
    }
    return scenario_from_dict(cfg, name="free")
