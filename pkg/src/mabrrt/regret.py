"""Regret of sampling strategies against a shared, growing tree.

At every iteration each strategy draws a batch of (x_p, x_trg) pairs against the
current tree and the mean transition reward of the batch is its expected reward.
The best expected reward of the iteration is the maximum over the batches of
every bandit arm, the uniform ``random`` sampler and the ``astar`` sampler; a
strategy's step regret is that maximum minus the batch reward of the arm it
would pick.  The tree itself is grown by KF-MANB.

``astar`` is an A* search on a lattice induced by a discrete control set.  Its
batch is the set of states A* would expand next, each paired with the state it
was generated from.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional

import numpy as np

from . import kernels
from .bandit import ArmSet, Policy
from .clustering import ClusterSet
from .planner import (FIRST_CLUSTER_ARM, GOAL_ARM, UNIFORM_ARM, PlannerConfig, PlannerState,
                      choose_pair, perturbation_width, sample_to)
from .tree import SearchTree
from .world import Path, Scenario, Transition, state_reward

MAB_STRATEGIES = ("kfmanb", "ucb1", "ts")
STRATEGIES = MAB_STRATEGIES + ("random", "astar")


def _default_controls():
    levels = (-0.5, -0.25, 0.0, 0.25, 0.5)
    return tuple((a, b) for a in levels for b in levels)


@dataclass(frozen=True)
class GridSearchConfig:
    control_set: tuple = field(default_factory=_default_controls)
    step_duration: float = 0.05
    heuristic_peak: float = 0.99
    snap_tol: float = 1e-9

    def __post_init__(self):
        if len(self.control_set) == 0:
            raise ValueError("control_set must be non-empty")
        if self.step_duration <= 0:
            raise ValueError("step_duration must be positive")
        if not 0.0 <= self.heuristic_peak <= 1.0:
            raise ValueError("heuristic_peak must lie in [0, 1]")


class Lattice:
    """States ``start + pitch * n`` for integer vectors ``n``.

    The pitch is the smallest nonzero control displacement component; every
    displacement must be an integer multiple of it (within ``snap_tol``), so
    states never drift and deduplicate exactly on their integer keys.
    """

    def __init__(self, scenario: Scenario, grid: GridSearchConfig = GridSearchConfig(),
                 resolution: float = 0.01):
        if scenario.dynamics is not None or scenario.control_dim != scenario.state_dim:
            raise ValueError("lattice search needs single-integrator dynamics")
        self.scenario = scenario
        self.grid = grid
        self.resolution = resolution
        U = np.asarray(grid.control_set, dtype=float).reshape(len(grid.control_set), -1)
        if U.shape[1] != scenario.state_dim:
            raise ValueError("control_set dimension does not match the state dimension")
        disp = U * grid.step_duration
        nonzero = np.abs(disp[disp != 0])
        if nonzero.size == 0:
            raise ValueError("control_set has no nonzero displacement")
        self.pitch = float(nonzero.min())
        ratio = disp / self.pitch
        steps = np.rint(ratio)
        if np.any(np.abs(ratio - steps) > grid.snap_tol * np.maximum(1.0, np.abs(ratio))):
            raise ValueError("control displacements are not commensurate with the lattice pitch")
        keep = np.any(steps != 0, axis=1)
        _, first = np.unique(steps[keep], axis=0, return_index=True)
        order = np.sort(first)
        self.steps = steps[keep][order].astype(np.int64)
        self.controls = U[keep][order]
        self.origin = np.asarray(scenario.start, dtype=float)
        self.start = (0,) * scenario.state_dim
        self.peak_gap = 1.0 - grid.heuristic_peak
        self._children: dict = {}
        self._h: dict = {}

    def position(self, node) -> np.ndarray:
        return self.origin + self.pitch * np.asarray(node, dtype=float)

    def heuristic(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return self.peak_gap * math.dist(x, self.scenario.goal.closest_point(x))

    def node_heuristic(self, node) -> float:
        h = self._h.get(node)
        if h is None:
            h = self._h[node] = self.heuristic(self.position(node))
        return h

    def is_goal(self, node) -> bool:
        return self.scenario.goal.contains(self.position(node))

    def children(self, node) -> list:
        """Valid successors as ``(child, edge_cost, edge_reward)``."""
        out = self._children.get(node)
        if out is not None:
            return out
        sc = self.scenario
        x = self.position(node)
        keys = np.asarray(node, dtype=np.int64)[None, :] + self.steps
        P = self.origin + self.pitch * keys.astype(float)
        ok = kernels.segments_valid_np(np.broadcast_to(x, P.shape), P, sc.state_lo, sc.state_hi,
                                       sc.obstacle_lo, sc.obstacle_hi, self.resolution)
        rho_x = sc.reward_field(x)
        field_vals = sc.reward_field.evaluate(P)
        closest = np.clip(P, sc.goal.lo, sc.goal.hi)
        out = []
        xs = x.tolist()
        for i in np.flatnonzero(ok).tolist():
            r = 0.5 * (rho_x + float(field_vals[i]))
            key = tuple(keys[i].tolist())
            if key not in self._h:
                self._h[key] = self.peak_gap * math.dist(P[i].tolist(), closest[i].tolist())
            out.append((key, (1.0 - r) * math.dist(xs, P[i].tolist()), r))
        self._children[node] = out
        return out


class AStarSearch:
    """Incremental A*: one ``expand`` call pops and expands one node.

    Stale heap entries (closed nodes or superseded g-values) are skipped lazily.
    Ties in f are broken by insertion order.
    """

    def __init__(self, lattice: Lattice):
        self.lattice = lattice
        self.g = {lattice.start: 0.0}
        self.parent = {lattice.start: None}
        self.edge_reward = {}
        self.closed = set()
        self.expansions = 0
        self._tick = itertools.count()
        self.open = [(lattice.node_heuristic(lattice.start), next(self._tick), lattice.start)]

    def _live(self, entry) -> bool:
        f, _, node = entry
        return node not in self.closed and f == self.g[node] + self._h(node)

    def _h(self, node) -> float:
        return self.lattice.node_heuristic(node)

    def _pop(self):
        while self.open:
            entry = heapq.heappop(self.open)
            if self._live(entry):
                return entry[2]
        return None

    @property
    def exhausted(self) -> bool:
        while self.open and not self._live(self.open[0]):
            heapq.heappop(self.open)
        return not self.open

    def expand(self):
        """Expand the best open node; returns it, or ``None`` when the open list is empty."""
        node = self._pop()
        if node is not None:
            self._expand_node(node)
        return node

    def _expand_node(self, node):
        self.closed.add(node)
        self.expansions += 1
        g0 = self.g[node]
        for child, cost, r in self.lattice.children(node):
            if child in self.closed:
                continue
            g = g0 + cost
            if g < self.g.get(child, math.inf):
                self.g[child] = g
                self.parent[child] = node
                self.edge_reward[child] = r
                heapq.heappush(self.open, (g + self._h(child), next(self._tick), child))

    def frontier(self, n: int) -> list:
        """The ``n`` next nodes to be expanded, in expansion order."""
        m = 2 * n
        while True:
            out = []
            for entry in heapq.nsmallest(m, self.open):
                # a node has at most one live entry
                if self._live(entry):
                    out.append(entry[2])
                    if len(out) == n:
                        return out
            if m >= len(self.open):
                return out
            m *= 2

    def path_to(self, node) -> Path:
        lat = self.lattice
        chain = []
        while self.parent[node] is not None:
            prev = self.parent[node]
            x_p, x_c = lat.position(prev), lat.position(node)
            step = np.asarray(node) - np.asarray(prev)
            u = lat.controls[int(np.flatnonzero(np.all(lat.steps == step, axis=1))[0])]
            chain.append(Transition(x_p, u.copy(), lat.grid.step_duration, x_c, x_c.copy(),
                                    self.edge_reward[node]))
            node = prev
        chain.reverse()
        return Path(chain, 0.0)


def astar_plan(scenario: Scenario, grid: GridSearchConfig = GridSearchConfig(),
               resolution: float = 0.01) -> Optional[Path]:
    """Cheapest lattice path from the start to the goal box, or ``None``."""
    lat = Lattice(scenario, grid, resolution)
    if lat.is_goal(lat.start):
        return Path([], 0.0)
    search = AStarSearch(lat)
    while True:
        node = search._pop()
        if node is None:
            return None
        if lat.is_goal(node):
            path = search.path_to(node)
            path.total_cost = search.g[node]
            return path
        search._expand_node(node)


class AStarFrontier:
    """The astar sampling strategy: a batch is the head of the open list.

    The search keeps expanding after it first reaches the goal; once the open
    list is exhausted every batch has reward 0.
    """

    def __init__(self, scenario: Scenario, grid: GridSearchConfig = GridSearchConfig(),
                 resolution: float = 0.01):
        self.search = AStarSearch(Lattice(scenario, grid, resolution))
        self.search.expand()  # the start has no generating transition

    def batch_reward(self, batch_size: int) -> float:
        nodes = self.search.frontier(batch_size)
        if not nodes:
            return 0.0
        return float(np.mean([self.search.edge_reward[n] for n in nodes]))

    def advance(self):
        self.search.expand()


# ---------------------------------------------------------------------------
# batch estimates
# ---------------------------------------------------------------------------


def expected_batch_reward(sampler: Callable, tree: SearchTree, batch_size: int, scenario: Scenario,
                          rng: np.random.Generator, config: PlannerConfig = PlannerConfig()) -> float:
    """Mean transition reward of ``batch_size`` extensions drawn through ``sampler``.

    ``sampler(tree, rng)`` returns ``(parent node, x_trg, arm)`` or ``None``; the arm
    decides the number of rollouts in :func:`sample_to`.  Failures count as 0.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    total = 0.0
    for _ in range(batch_size):
        pair = sampler(tree, rng)
        if pair is None:
            continue
        parent, x_trg, arm = pair
        x_p = tree.state(parent)
        ext = sample_to(x_p, x_trg, arm, scenario, config, rng)
        if ext is not None:
            total += state_reward(x_p, ext[0], scenario.reward_field)
    return total / batch_size


def arm_sampler(arm: int, clusters: ClusterSet, scenario: Scenario, config: PlannerConfig):
    def sampler(tree, rng):
        pair = choose_pair(arm, clusters, tree, scenario, config, rng)
        return None if pair is None else (pair[0], pair[1], arm)
    return sampler


def _rollout_rewards(XP, XT, n_rollouts, scenario, config, rng):
    # raw uniforms, mapped to control and duration ranges inside the kernel
    R = rng.random((XP.shape[0], n_rollouts, scenario.control_dim + 1))
    f = scenario.reward_field
    return kernels.raw_rollout_rewards(
        np.ascontiguousarray(XP), np.ascontiguousarray(XT), R, scenario.control_lo, scenario.control_hi,
        config.max_prop_duration, scenario.state_lo, scenario.state_hi, scenario.obstacle_lo,
        scenario.obstacle_hi, config.resolution, f.region_lo, f.region_hi, f.values, f.default_value)


def arm_batch_rewards(arm: int, clusters: ClusterSet, tree: SearchTree, scenario: Scenario,
                      config: PlannerConfig, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Per-sample transition rewards of one arm's batch (0 for failures)."""
    if scenario.dynamics is not None:
        sampler = arm_sampler(arm, clusters, scenario, config)
        return np.array([expected_batch_reward(sampler, tree, 1, scenario, rng, config)
                         for _ in range(batch_size)])
    if arm in (UNIFORM_ARM, GOAL_ARM):
        box = scenario.bounds if arm == UNIFORM_ARM else scenario.goal
        XT = rng.uniform(box.lo, box.hi, size=(batch_size, scenario.state_dim))
        parents = kernels.nearest_batch(*tree.kd_arrays(), XT)
        return _rollout_rewards(tree.states[parents], XT, 1, scenario, config, rng)
    cl = clusters[arm - FIRST_CLUSTER_ARM]
    d = scenario.state_dim
    R = rng.random((batch_size, config.cluster_sample_attempts, 1 + 2 * d))
    parents, targets = kernels.cluster_targets(
        *tree.kd_arrays(), cl.member_xp, cl.member_xtrg, cl.delta1, cl.delta2, cl.delta3,
        perturbation_width(cl, config), R)
    out = np.zeros(batch_size)
    ok = parents >= 0
    if ok.any():
        out[ok] = _rollout_rewards(tree.states[parents[ok]], targets[ok], config.n_propagations,
                                   scenario, config, rng)
    return out


# ---------------------------------------------------------------------------
# harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegretConfig:
    batch_size: int = 50
    grid: GridSearchConfig = field(default_factory=GridSearchConfig)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class RegretRecord:
    iteration: int
    per_strategy_regret: dict
    best_expected_reward: float
    strategy_reward: dict = field(default_factory=dict)
    arm_reward: list = field(default_factory=list)  # batch mean of every bandit arm
    selected_arm: dict = field(default_factory=dict)


def regret_step(tree: SearchTree, bandits: Mapping[str, ArmSet], clusters: ClusterSet,
                frontier: AStarFrontier, k: int, scenario: Scenario, planner_config: PlannerConfig,
                config: RegretConfig, rngs: Mapping[str, np.random.Generator],
                live: frozenset = frozenset({"kfmanb"})) -> RegretRecord:
    """One row of the regret table; call before the tree grows at iteration ``k``.

    Arm batches are drawn once (stream ``rngs["arms"]``) and shared by all bandit
    strategies.  Bandits named in ``live`` are only peeked at (their owner
    updates them); the others select and are fed the first reward of their arm's
    batch, as a single pull would.
    """
    B = config.batch_size
    n_arms = len(clusters) + FIRST_CLUSTER_ARM
    batches = [arm_batch_rewards(a, clusters, tree, scenario, planner_config, B, rngs["arms"])
               for a in range(n_arms)]
    arm_reward = [float(b.mean()) for b in batches]
    rewards, selected = {}, {}
    for name, bandit in bandits.items():
        if bandit.n_arms != n_arms:
            raise ValueError(f"{name}: bandit has {bandit.n_arms} arms, expected {n_arms}")
        if name in live:
            a = bandit.peek(rngs[name])
        else:
            a = bandit.select(rngs[name])
            bandit.update(float(batches[a][0]))
        selected[name] = a
        rewards[name] = arm_reward[a]
    rewards["random"] = float(arm_batch_rewards(UNIFORM_ARM, clusters, tree, scenario, planner_config,
                                                B, rngs["random"]).mean())
    rewards["astar"] = frontier.batch_reward(B)
    best = max(arm_reward + [rewards["random"], rewards["astar"]])
    regret = {name: best - r for name, r in rewards.items()}
    return RegretRecord(k, regret, best, rewards, arm_reward, selected)


@dataclass
class RegretSeries:
    strategies: tuple
    step: dict  # strategy -> (K,) per-iteration regret
    best_expected_reward: np.ndarray
    planner: object = None  # PlanResult-like summary of the KF-MANB run

    def cumulative(self) -> dict:
        return {s: np.cumsum(v) for s, v in self.step.items()}

    def records(self):
        """Flat (iteration, strategy, step regret, cumulative regret) rows."""
        cum = self.cumulative()
        for i in range(self.best_expected_reward.shape[0]):
            for s in self.strategies:
                yield i + 1, s, float(self.step[s][i]), float(cum[s][i])


def run_regret(scenario: Scenario, planner_config: PlannerConfig = PlannerConfig(),
               config: RegretConfig = RegretConfig(), seed: int = 0,
               sink: Optional[Callable[[RegretRecord], None]] = None) -> RegretSeries:
    """Grow a KF-MANB tree for ``planner_config.total_iterations`` and score every strategy."""
    pc = replace(planner_config, rng_seed=seed, policy=Policy.KFMANB, goal_bias_only=False)
    state = PlannerState(scenario, pc, use_bandit=True)
    streams = np.random.SeedSequence([seed, 0x5EED]).spawn(len(STRATEGIES) + 1)
    rngs = {name: np.random.default_rng(s) for name, s in zip(("arms",) + STRATEGIES, streams)}
    frontier = AStarFrontier(scenario, config.grid, pc.resolution)

    def fresh(policy, rewards):
        return ArmSet(rewards, policy, pc.kf)

    shadows = {"ucb1": fresh(Policy.UCB1, [0.0, 0.0]), "ts": fresh(Policy.TS, [0.0, 0.0])}
    n_recluster = 0
    K = pc.total_iterations
    step = {s: np.zeros(K) for s in STRATEGIES}
    best = np.zeros(K)
    for k in range(1, K + 1):
        if len(state.recluster_log) != n_recluster:
            n_recluster = len(state.recluster_log)
            init = [0.0, 0.0, *state.clusters.avg_rewards]
            shadows = {"ucb1": fresh(Policy.UCB1, init), "ts": fresh(Policy.TS, init)}
        bandits = {"kfmanb": state.arms, **shadows}
        rec = regret_step(state.tree, bandits, state.clusters, frontier, k, scenario, pc, config, rngs)
        for s in STRATEGIES:
            step[s][k - 1] = rec.per_strategy_regret[s]
        best[k - 1] = rec.best_expected_reward
        if sink is not None:
            sink(rec)
        state.step(k)
        frontier.advance()
    return RegretSeries(STRATEGIES, step, best, planner=state)
