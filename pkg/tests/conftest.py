import numpy as np
import pytest
from hypothesis import settings

from mabrrt.world import free_scenario, scenario_from_dict

# numba compilation makes first calls slow; derandomize keeps runs reproducible
settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60)
settings.load_profile("repo")


def box_scenario(obstacles=(), regions=(), default=0.5, start=(0.1, 0.1), goal=((0.85, 0.85), (0.95, 0.95))):
    cfg = {
        "state_dim": 2,
        "state_lo": [0, 0],
        "state_hi": [1, 1],
        "control_lo": [-0.5, -0.5],
        "control_hi": [0.5, 0.5],
        "start": list(start),
        "goal": {"lo": list(goal[0]), "hi": list(goal[1])},
        "obstacles": [{"lo": list(lo), "hi": list(hi)} for lo, hi in obstacles],
        "reward_regions": [{"lo": list(lo), "hi": list(hi), "value": v} for lo, hi, v in regions],
        "reward_default": default,
    }
    return scenario_from_dict(cfg, name="test")


@pytest.fixture
def free():
    return free_scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
