import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mabrrt.tree import SearchTree
from mabrrt.world import Transition


def _tau(a, b, r=0.5):
    return Transition(np.asarray(a, float), np.zeros(2), 1.0, np.asarray(b, float), np.asarray(b, float), r)


def _random_tree(rng, n, use_kd):
    t = SearchTree(np.array([0.5, 0.5]), capacity=4, use_kd=use_kd)
    for _ in range(n):
        p = int(rng.integers(t.size))
        x = np.clip(t.state(p) + rng.normal(0, 0.1, 2), 0, 1)
        t.add(_tau(t.state(p), x), p)
    return t


@pytest.mark.parametrize("use_kd", [True, False])
def test_nearest_matches_linear_scan(rng, use_kd):
    t = _random_tree(rng, 3000, use_kd)
    for q in rng.uniform(-0.2, 1.2, (3000, 2)):
        assert t.nearest(q) == t.nearest_linear(q)


def test_duplicate_states_resolve_to_lowest_index():
    t = SearchTree(np.array([0.5, 0.5]))
    t.add(_tau([0.5, 0.5], [0.2, 0.2]), 0)
    t.add(_tau([0.2, 0.2], [0.8, 0.8]), 1)
    t.add(_tau([0.8, 0.8], [0.2, 0.2]), 2)
    assert t.nearest([0.21, 0.21]) == 1


def test_retrace_path_cost():
    t = SearchTree(np.array([0.0, 0.0]))
    a = t.add(_tau([0, 0], [0.3, 0.4], r=0.5), 0)
    b = t.add(_tau([0.3, 0.4], [0.3, 1.0], r=0.9), a)
    p = t.retrace_path(b)
    assert len(p) == 2
    assert p.total_cost == pytest.approx(0.5 * 0.5 + 0.1 * 0.6)
    np.testing.assert_array_equal(p.states(), [[0, 0], [0.3, 0.4], [0.3, 1.0]])
    assert len(t.retrace_path(0)) == 0


def test_add_rejects_mismatched_parent():
    t = SearchTree(np.array([0.0, 0.0]))
    with pytest.raises(ValueError):
        t.add(_tau([0.1, 0.0], [0.2, 0.2]), 0)
    with pytest.raises(IndexError):
        t.add(_tau([0.0, 0.0], [0.2, 0.2]), 5)


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=60),
       st.tuples(st.floats(-1, 2), st.floats(-1, 2)))
def test_kd_query_property(points, q):
    t = SearchTree(np.array([0.5, 0.5]), capacity=2, use_kd=True)
    for p in points:
        t.add(_tau(t.state(0), p), 0)
    assert t.nearest(q) == t.nearest_linear(q)


def test_growth_keeps_parent_order(rng):
    t = _random_tree(rng, 500, True)
    assert np.all(t.parent[1:t.size] < np.arange(1, t.size))
