import math
from collections import deque

import networkx as nx
import numpy as np
import pytest

from mabrrt.bandit import ArmSet, Policy
from mabrrt.clustering import Cluster, ClusterSet
from mabrrt.planner import PlannerConfig
from mabrrt.regret import (STRATEGIES, AStarFrontier, GridSearchConfig, Lattice, RegretConfig, arm_batch_rewards,
                           arm_sampler, astar_plan, expected_batch_reward, regret_step, run_regret)
from mabrrt.tree import SearchTree
from mabrrt.world import BUNDLED, ScenarioError, Transition, free_scenario, resolve_scenario

from conftest import box_scenario

COARSE = GridSearchConfig(step_duration=0.1)  # pitch 0.025
LEVELS = (0.1, 0.2, 0.8, 0.99)


def lattice_graph(lat):
    """Every lattice node reachable from the start, edges weighted by cost and by length."""
    g = nx.DiGraph()
    g.add_node(lat.start)
    seen = {lat.start}
    todo = deque([lat.start])
    while todo:
        node = todo.popleft()
        x = lat.position(node)
        for child, cost, _ in lat.children(node):
            g.add_edge(node, child, weight=cost, length=math.dist(x, lat.position(child)))
            if child not in seen:
                seen.add(child)
                todo.append(child)
    return g


def dijkstra_to_goal(lat, g, weight="weight"):
    goals = [n for n in g.nodes if lat.is_goal(n)]
    if not goals:
        return None
    h = g.copy()
    for n in goals:
        h.add_edge(n, "sink", weight=0.0, length=0.0)
    try:
        return nx.dijkstra_path_length(h, lat.start, "sink", weight=weight)
    except nx.NetworkXNoPath:
        return None


def random_scenario(rng):
    while True:
        obstacles = []
        for _ in range(int(rng.integers(0, 4))):
            lo = rng.uniform(0, 0.8, 2)
            obstacles.append((tuple(lo), tuple(lo + rng.uniform(0.05, 0.4, 2))))
        regions = []
        for _ in range(int(rng.integers(0, 4))):
            lo = rng.uniform(0, 0.7, 2)
            regions.append((tuple(lo), tuple(lo + rng.uniform(0.1, 0.5, 2)), float(rng.choice(LEVELS))))
        g = rng.uniform(0.05, 0.85, 2)
        try:
            return box_scenario(obstacles=obstacles, regions=regions, default=float(rng.choice(LEVELS)),
                                start=tuple(rng.uniform(0.02, 0.98, 2)), goal=(tuple(g), tuple(g + 0.1)))
        except ScenarioError:
            continue


def test_astar_matches_dijkstra_on_random_scenarios():
    rng = np.random.default_rng(77)
    solved = 0
    for trial in range(20):
        sc = random_scenario(rng)
        lat = Lattice(sc, COARSE)
        expected = dijkstra_to_goal(lat, lattice_graph(lat))
        path = astar_plan(sc, COARSE)
        if expected is None:
            assert path is None, f"trial {trial}"
            continue
        solved += 1
        assert path is not None, f"trial {trial}"
        assert path.total_cost == pytest.approx(expected, abs=1e-12), f"trial {trial}"
        assert sum((1 - t.reward) * math.dist(t.x_p, t.x_c) for t in path.transitions) \
            == pytest.approx(path.total_cost, abs=1e-12)
    assert solved >= 15


@pytest.mark.parametrize("name", BUNDLED)
def test_heuristic_is_admissible(name):
    sc = resolve_scenario(name)
    lat = Lattice(sc)
    g = lattice_graph(lat)
    nodes = list(g.nodes)
    rng = np.random.default_rng(ord(name))
    checked = 0
    for src in rng.choice(len(nodes), 20, replace=False):
        dist = nx.single_source_dijkstra_path_length(g, nodes[src], weight="weight")
        reach = list(dist)
        for dst in rng.choice(len(reach), 50):
            a, b = lat.position(nodes[src]), lat.position(reach[dst])
            assert lat.peak_gap * math.dist(a, b) <= dist[reach[dst]] + 1e-12
            checked += 1
    assert checked == 1000
    # the goal heuristic is consistent along every edge
    for u, v, w in g.edges(data="weight"):
        assert lat.node_heuristic(u) <= w + lat.node_heuristic(v) + 1e-12


def test_free_cost_is_half_the_lattice_geodesic():
    sc = free_scenario()
    lat = Lattice(sc)
    path = astar_plan(sc)
    geodesic = dijkstra_to_goal(lat, lattice_graph(lat), weight="length")
    assert path.total_cost == pytest.approx(0.5 * geodesic, abs=1e-12)
    assert lat.pitch == pytest.approx(0.0125)


def test_start_in_goal_gives_empty_path():
    sc = free_scenario(start=(0.9, 0.9))
    p = astar_plan(sc)
    assert len(p) == 0 and p.total_cost == 0.0


def test_sealed_start_has_no_path():
    ring = [((0.2, 0.2), (0.3, 0.4)), ((0.3, 0.2), (0.4, 0.25)), ((0.3, 0.35), (0.4, 0.4)), ((0.35, 0.25), (0.4, 0.35))]
    sc = box_scenario(obstacles=ring, start=(0.32, 0.3))
    assert astar_plan(sc, COARSE) is None
    f = AStarFrontier(sc, COARSE)
    while not f.search.exhausted:
        f.advance()
    assert f.batch_reward(50) == 0.0


def test_frontier_is_expansion_order():
    sc = resolve_scenario("B")
    f = AStarFrontier(sc)
    for _ in range(30):
        head = f.search.frontier(5)
        assert f.search.expand() == head[0]


def test_grid_config_validation():
    with pytest.raises(ValueError):
        GridSearchConfig(control_set=())
    with pytest.raises(ValueError):
        GridSearchConfig(step_duration=0.0)
    with pytest.raises(ValueError):
        GridSearchConfig(heuristic_peak=1.2)
    with pytest.raises(ValueError):
        Lattice(free_scenario(), GridSearchConfig(control_set=((0.5, 0.0), (0.3, 0.0))))


class _FixedRng:
    def uniform(self, lo, hi, size=None):
        return np.full(size, 0.25)

    def random(self, size=None):
        return np.full(size, 0.5)


def test_same_pair_gives_that_transition_reward():
    sc = resolve_scenario("A")
    tree = SearchTree(sc.start)
    sampler = lambda tree, rng: (0, np.array([0.4, 0.4]), 0)  # noqa: E731
    cfg = PlannerConfig(max_prop_duration=0.2)
    # u = (0.25, 0.25), d = 0.1
    x_c = sc.start + 0.025
    expected = 0.5 * (sc.reward_field(sc.start) + sc.reward_field(x_c))
    assert expected_batch_reward(sampler, tree, 20, sc, _FixedRng(), cfg) == pytest.approx(expected, abs=1e-15)


def test_constant_field_mean(rng):
    sc = free_scenario(start=(0.5, 0.5), reward=0.37)
    tree = SearchTree(sc.start)
    for x in rng.uniform(0.4, 0.6, (30, 2)):
        tree.add(Transition(sc.start, np.zeros(2), 1.0, x, x, 0.37), 0)
    cfg = PlannerConfig(max_prop_duration=0.2)  # no rollout from [0.4, 0.6]^2 can leave the square
    values = arm_batch_rewards(0, ClusterSet.empty(), tree, sc, cfg, 1000, rng)
    se = values.std(ddof=1) / math.sqrt(values.size)
    assert abs(values.mean() - 0.37) <= 3 * se + 1e-12
    m = expected_batch_reward(arm_sampler(0, ClusterSet.empty(), sc, cfg), tree, 200, sc, rng, cfg)
    assert m == pytest.approx(0.37, abs=1e-12)


def test_cluster_arm_beats_uniform_on_high_reward_column(rng):
    sc = resolve_scenario("A")
    tree = SearchTree(sc.start)
    for y in np.arange(0.12, 0.3, 0.02):
        tree.add(Transition(sc.start, np.zeros(2), 1.0, np.array([0.1, y]), np.array([0.1, y]), 0.99), 0)
    ys = np.linspace(0.25, 0.5, 12)
    xp = np.column_stack([np.full(12, 0.1), ys])
    xt = np.column_stack([np.full(12, 0.1), ys + 0.03])
    cl = Cluster(np.arange(12), 0.99, 0.02, 0.02, 0.04, xp, xt)
    clusters = ClusterSet([cl], np.zeros(12, dtype=np.int64), 2)
    cfg = PlannerConfig()
    cluster_mean = expected_batch_reward(arm_sampler(2, clusters, sc, cfg), tree, 1000, sc, rng, cfg)
    uniform_mean = expected_batch_reward(arm_sampler(0, clusters, sc, cfg), tree, 1000, sc, rng, cfg)
    assert cluster_mean > uniform_mean
    assert arm_batch_rewards(2, clusters, tree, sc, cfg, 1000, rng).mean() > \
        arm_batch_rewards(0, clusters, tree, sc, cfg, 1000, rng).mean()


def test_identical_strategies_have_zero_regret():
    sc = free_scenario(start=(0.5, 0.5), goal_center=(0.55, 0.55), reward=0.6)
    tree = SearchTree(sc.start)
    cfg = PlannerConfig(max_prop_duration=0.2)
    bandits = {"kfmanb": ArmSet([0.0, 0.0]), "ucb1": ArmSet([0.0, 0.0], Policy.UCB1),
               "ts": ArmSet([0.0, 0.0], Policy.TS)}
    rngs = {n: np.random.default_rng(i) for i, n in enumerate(("arms",) + STRATEGIES)}
    rec = regret_step(tree, bandits, ClusterSet.empty(), AStarFrontier(sc), 1, sc, cfg, RegretConfig(), rngs)
    assert rec.best_expected_reward == pytest.approx(0.6)
    assert all(v == pytest.approx(0.0, abs=1e-12) for v in rec.per_strategy_regret.values())


@pytest.fixture(scope="module")
def series():
    recs = []
    s = run_regret(resolve_scenario("A"), PlannerConfig(total_iterations=150), RegretConfig(batch_size=20),
                   seed=3, sink=recs.append)
    return s, recs


def test_regret_series_invariants(series):
    s, recs = series
    assert len(recs) == 150 and set(s.step) == set(STRATEGIES)
    for rec in recs:
        assert all(v >= 0 for v in rec.per_strategy_regret.values())
        candidates = rec.arm_reward + [rec.strategy_reward["random"], rec.strategy_reward["astar"]]
        assert rec.best_expected_reward == max(candidates)
        for name in ("kfmanb", "ucb1", "ts"):
            assert rec.strategy_reward[name] == rec.arm_reward[rec.selected_arm[name]]
        for name, r in rec.per_strategy_regret.items():
            assert r == rec.best_expected_reward - rec.strategy_reward[name]
    for cum in s.cumulative().values():
        assert np.all(np.diff(cum) >= 0)
    rows = list(s.records())
    assert len(rows) == 150 * len(STRATEGIES)
    assert rows[-1][3] == pytest.approx(s.cumulative()[rows[-1][1]][-1])


def test_regret_series_is_seed_reproducible(series):
    s, _ = series
    again = run_regret(resolve_scenario("A"), PlannerConfig(total_iterations=150), RegretConfig(batch_size=20), seed=3)
    for name in STRATEGIES:
        np.testing.assert_array_equal(s.step[name], again.step[name])


def test_bandits_follow_reclustering(series):
    s, recs = series
    log = s.planner.recluster_log
    assert log, "the tree should reach the goal within 150 iterations"
    k, n, m = log[0]
    assert len(recs[k].arm_reward) == m == n + 2


def test_regret_config_validation():
    with pytest.raises(ValueError):
        RegretConfig(batch_size=0)
