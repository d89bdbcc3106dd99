import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mabrrt.world import (BUNDLED, OutOfBounds, RewardField, ScenarioError, Transition, is_valid,
                          load_scenario, path_cost, propagate, resolve_scenario, segment_valid,
                          state_reward, transition_cost)

from conftest import box_scenario

unit = st.floats(0.0, 1.0, allow_nan=False)
point = st.tuples(unit, unit)


def test_propagate_single_integrator(free):
    x = propagate([0.2, 0.3], [0.5, -0.25], 0.4, free)
    np.testing.assert_allclose(x, [0.4, 0.2])


def test_propagate_leaving_x_raises(free):
    with pytest.raises(OutOfBounds):
        propagate([0.9, 0.5], [0.5, 0.0], 1.0, free)
    with pytest.raises(ValueError):
        propagate([0.5, 0.5], [0.1, 0.0], 0.0, free)


def test_segment_through_obstacle_is_invalid():
    sc = box_scenario(obstacles=[((0.4, 0.0), (0.6, 0.9))])
    assert not segment_valid([0.1, 0.5], [0.9, 0.5], sc)
    assert segment_valid([0.1, 0.95], [0.9, 0.95], sc)
    # thin obstacle still caught at the default resolution
    thin = box_scenario(obstacles=[((0.5, 0.0), (0.505, 1.0))])
    assert not segment_valid([0.1, 0.5], [0.9, 0.5], thin)


def test_obstacle_boundary_is_closed():
    sc = box_scenario(obstacles=[((0.4, 0.4), (0.6, 0.6))])
    assert not is_valid([0.4, 0.5], sc)
    assert is_valid([0.39, 0.5], sc)


@given(point, point)
def test_segment_with_endpoint_in_obstacle_invalid(a, b):
    sc = box_scenario(obstacles=[((0.3, 0.3), (0.6, 0.6))])
    if not is_valid(a, sc) or not is_valid(b, sc):
        assert not segment_valid(a, b, sc)


@given(point, point)
def test_segment_validity_symmetric(a, b):
    sc = box_scenario(obstacles=[((0.3, 0.3), (0.6, 0.6)), ((0.7, 0.0), (0.75, 0.5))])
    assert segment_valid(a, b, sc) == segment_valid(b, a, sc)


def test_reward_field_first_match_wins():
    f = RewardField(np.array([[0, 0], [0, 0]], float), np.array([[0.5, 0.5], [1, 1]], float),
                    np.array([0.99, 0.2]), 0.1)
    assert f([0.25, 0.25]) == 0.99
    assert f([0.75, 0.75]) == 0.2
    assert RewardField.constant(0.3)([0.5, 0.5]) == 0.3


@given(st.lists(point, min_size=1, max_size=30))
def test_reward_field_evaluate_matches_scalar(pts):
    f = RewardField(np.array([[0.1, 0.1], [0.0, 0.5]]), np.array([[0.6, 0.6], [1.0, 1.0]]),
                    np.array([0.8, 0.99]), 0.2)
    P = np.array(pts)
    np.testing.assert_array_equal(f.evaluate(P), [f(p) for p in P])


def test_path_cost_hand_computed():
    # rho = 0.8 left of x=0.5, 0.2 elsewhere
    f = RewardField(np.array([[0.0, 0.0]]), np.array([[0.5, 1.0]]), np.array([0.8]), 0.2)
    t1 = Transition(np.array([0.1, 0.1]), np.zeros(2), 1.0, np.array([0.4, 0.5]), np.zeros(2), 0.0)
    t2 = Transition(np.array([0.4, 0.5]), np.zeros(2), 1.0, np.array([0.9, 0.5]), np.zeros(2), 0.0)
    expected = (1 - 0.8) * 0.5 + (1 - 0.5) * 0.5  # |t1| = 0.5, |t2| = 0.5
    assert path_cost([t1, t2], f) == pytest.approx(expected, abs=1e-15)
    assert state_reward(t2.x_p, t2.x_c, f) == 0.5


@given(point, point, st.floats(0.0, 1.0))
def test_transition_cost_bounds(a, b, r):
    c = transition_cost(a, b, r)
    assert 0.0 <= c <= math.dist(a, b) + 1e-15


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_load(name):
    sc = resolve_scenario(name)
    assert sc.name == f"scenario_{name}"
    assert is_valid(sc.start, sc)
    levels = set(sc.reward_field.values.tolist()) | {sc.reward_field.default_value}
    assert levels == {0.99, 0.8, 0.2, 0.1}
    assert sc.reward_field.peak == 0.99


def test_scenario_a_has_a_narrow_passage():
    sc = resolve_scenario("A")
    assert len(sc.obstacle_lo) >= 1
    assert not segment_valid(sc.start, sc.goal.closest_point(sc.start), sc)


@pytest.mark.parametrize("text, msg", [
    ("state_dim: 2\n", "malformed"),
    ("[1, 2]", "mapping"),
    ("a: [", "parse"),
])
def test_malformed_scenarios_rejected(text, msg):
    with pytest.raises(ScenarioError, match=msg):
        load_scenario(text)


def test_start_in_obstacle_rejected():
    with pytest.raises(ScenarioError, match="start"):
        box_scenario(obstacles=[((0.0, 0.0), (0.2, 0.2))])


def test_goal_outside_x_rejected():
    with pytest.raises(ScenarioError, match="goal"):
        box_scenario(goal=((0.9, 0.9), (1.1, 1.1)))


def test_unknown_bundled_name():
    with pytest.raises(KeyError):
        resolve_scenario("Z")
