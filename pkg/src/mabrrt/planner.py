"""MAB-RRT meta-planner and the AO-RRT baseline.

Both planners run kinodynamic RRT repeatedly from the start state for a fixed
budget of K iterations and keep the cheapest solution.  MAB-RRT additionally
clusters all transitions seen so far whenever a run reaches the goal and lets a
bandit choose, at every iteration, between uniform sampling, goal sampling and
sampling one of the clusters.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import kernels
from .bandit import ArmSet, KfManbConfig, Policy
from .clustering import Cluster, ClusterSet, ClusteringConfig, TransitionDatabase, cluster
from .tree import SearchTree
from .world import (DEFAULT_RESOLUTION, OutOfBounds, Path, Scenario, Transition, propagate,
                    segment_valid, state_reward)

UNIFORM_ARM = 0
GOAL_ARM = 1
FIRST_CLUSTER_ARM = 2


@dataclass(frozen=True)
class PlannerConfig:
    total_iterations: int = 1000
    n_propagations: int = 100
    # at the control bound of 0.5 a single rollout can span the unit workspace
    max_prop_duration: float = 2.0
    goal_bias_only: bool = False
    cluster_sample_attempts: int = 10
    perturbation_width: Optional[float] = None  # None: half of each cluster's delta2
    policy: Policy = Policy.KFMANB
    rng_seed: int = 0
    p_goal: float = 0.05
    max_arm_retries: int = 20
    resolution: float = DEFAULT_RESOLUTION
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    kf: KfManbConfig = field(default_factory=KfManbConfig)

    def __post_init__(self):
        if self.total_iterations < 0:
            raise ValueError("total_iterations must be >= 0")
        if self.n_propagations < 1 or self.cluster_sample_attempts < 1 or self.max_arm_retries < 1:
            raise ValueError("counts must be positive")
        if self.max_prop_duration <= 0:
            raise ValueError("max_prop_duration must be positive")
        if self.perturbation_width is not None and self.perturbation_width < 0:
            raise ValueError("perturbation_width must be >= 0")
        if not 0.0 <= self.p_goal <= 1.0:
            raise ValueError("p_goal must be a probability")
        object.__setattr__(self, "policy", Policy(self.policy))


@dataclass
class PlanResult:
    best_path: Optional[Path]
    best_cost: float
    cost_trace: list  # (iteration, best cost so far) at every improvement
    runs_completed: int
    iteration_time_mean: float
    iteration_time_max: float
    clustering_time_total: float = 0.0
    clustering_time_max: float = 0.0
    arm_selections: list = field(default_factory=list, repr=False)
    recluster_log: list = field(default_factory=list, repr=False)  # (iteration, N, M)
    iterations: int = 0

    @property
    def solved(self) -> bool:
        return self.best_path is not None


# ---------------------------------------------------------------------------
# extension
# ---------------------------------------------------------------------------


def sample_duration(rng: np.random.Generator, t_max: float, size=None):
    """Uniform on (0, t_max]."""
    return t_max * (1.0 - rng.random(size))


def sample_to(x_p, x_trg, arm_index: int, scenario: Scenario, config: PlannerConfig,
              rng: np.random.Generator):
    """Forward-propagate random controls from ``x_p``.

    Uniform and goal arms use one random (u, d); cluster arms draw N_p pairs and keep
    the valid child closest to ``x_trg``.  Returns ``(x_c, u, d)`` or ``None`` when
    no rollout is valid.
    """
    x_p = np.asarray(x_p, dtype=float)
    x_trg = np.asarray(x_trg, dtype=float)
    n = 1 if arm_index < FIRST_CLUSTER_ARM else config.n_propagations
    U = rng.uniform(scenario.control_lo, scenario.control_hi, size=(n, scenario.control_dim))
    D = sample_duration(rng, config.max_prop_duration, n)
    if scenario.dynamics is None:
        j = kernels.best_rollout(x_p, x_trg, U, D, scenario.state_lo, scenario.state_hi,
                                 scenario.obstacle_lo, scenario.obstacle_hi, config.resolution)
        if j < 0:
            return None
        return x_p + U[j] * D[j], U[j], float(D[j])
    best = None
    best_d = math.inf
    for u, d in zip(U, D):
        try:
            x_c = propagate(x_p, u, d, scenario)
        except OutOfBounds:
            continue
        if not segment_valid(x_p, x_c, scenario, config.resolution):
            continue
        dist = float(np.linalg.norm(x_c - x_trg))
        if dist < best_d:
            best, best_d = (x_c, u, float(d)), dist
    return best


def perturbation_width(cl: Cluster, config: PlannerConfig) -> float:
    return 0.5 * cl.delta2 if config.perturbation_width is None else config.perturbation_width


def sample_cluster(cl: Cluster, tree: SearchTree, rng: np.random.Generator, config: PlannerConfig):
    """Draw a (parent node, target) pair from a cluster, or ``None``.

    Candidate members are perturbed, rejected when their target is already within
    delta1 of the tree, accepted when their parent is within delta2 of the tree; a
    parent within delta3 is kept provisionally, with the member's parent as target.
    """
    d = cl.member_xp.shape[1]
    R = rng.random((1, config.cluster_sample_attempts, 1 + 2 * d))
    parents, targets = kernels.cluster_targets(
        *tree.kd_arrays(), cl.member_xp, cl.member_xtrg,
        cl.delta1, cl.delta2, cl.delta3, perturbation_width(cl, config), R,
    )
    if parents[0] < 0:
        return None
    return int(parents[0]), targets[0]


def uniform_state(rng: np.random.Generator, lo, hi) -> np.ndarray:
    return rng.uniform(lo, hi)


def choose_pair(arm: int, clusters: ClusterSet, tree: SearchTree, scenario: Scenario,
                config: PlannerConfig, rng: np.random.Generator):
    """(parent node, target) for one arm, or ``None`` if a cluster arm fails."""
    if arm == UNIFORM_ARM:
        x_trg = uniform_state(rng, scenario.state_lo, scenario.state_hi)
        return tree.nearest(x_trg), x_trg
    if arm == GOAL_ARM:
        x_trg = uniform_state(rng, scenario.goal.lo, scenario.goal.hi)
        return tree.nearest(x_trg), x_trg
    return sample_cluster(clusters[arm - FIRST_CLUSTER_ARM], tree, rng, config)


@dataclass
class Extension:
    transition: Optional[Transition]
    parent: int
    arm: int


def sample_and_propagate(clusters: ClusterSet, tree: SearchTree, arms: Optional[ArmSet],
                         scenario: Scenario, config: PlannerConfig, rng: np.random.Generator,
                         selections: Optional[list] = None) -> Extension:
    """Pick an arm, draw (x_p, x_trg) from it and extend the tree.

    Cluster arms that cannot produce a candidate get a zero reward and the arm is
    re-selected; after ``max_arm_retries`` selections the uniform arm is used.
    With ``arms=None`` the fixed goal-bias rule of AO-RRT picks the arm.
    On return, ``arms.last_selected`` is the arm that produced the extension.
    """
    pair = None
    arm = UNIFORM_ARM
    if arms is None:
        arm = GOAL_ARM if rng.random() < config.p_goal else UNIFORM_ARM
        pair = choose_pair(arm, clusters, tree, scenario, config, rng)
        if selections is not None:
            selections.append(arm)
    else:
        for _ in range(config.max_arm_retries):
            arm = arms.select(rng)
            if selections is not None:
                selections.append(arm)
            pair = choose_pair(arm, clusters, tree, scenario, config, rng)
            if pair is not None:
                break
            arms.update(0.0)
        if pair is None:
            arm = UNIFORM_ARM
            arms.last_selected = UNIFORM_ARM
            pair = choose_pair(arm, clusters, tree, scenario, config, rng)
    parent, x_trg = pair
    x_p = tree.state(parent).copy()
    ext = sample_to(x_p, x_trg, arm, scenario, config, rng)
    if ext is None:
        return Extension(None, parent, arm)
    x_c, u, d = ext
    r = state_reward(x_p, x_c, scenario.reward_field)
    return Extension(Transition(x_p, np.array(u), d, np.asarray(x_c), np.asarray(x_trg, dtype=float), r), parent, arm)


# ---------------------------------------------------------------------------
# meta-planner loop
# ---------------------------------------------------------------------------


class PlannerState:
    """Mutable state of one planning session (shared with the regret harness)."""

    def __init__(self, scenario: Scenario, config: PlannerConfig, use_bandit: bool):
        self.scenario = scenario
        self.config = config
        self.rng = np.random.default_rng(config.rng_seed)
        self.tree = SearchTree(scenario.start)
        self.db = TransitionDatabase(scenario.state_dim, scenario.control_dim)
        self.clusters = ClusterSet.empty()
        self.arms = ArmSet([0.0, 0.0], config.policy, config.kf) if use_bandit else None
        self.best_path: Optional[Path] = None
        self.best_cost = math.inf
        self.cost_trace: list = []
        self.runs_completed = 0
        self.selections: list = []
        self.recluster_log: list = []
        self.clustering_times: list = []

    def reset_tree(self):
        self.tree = SearchTree(self.scenario.start)

    def step(self, k: int) -> Extension:
        ext = sample_and_propagate(self.clusters, self.tree, self.arms, self.scenario, self.config,
                                   self.rng, self.selections)
        tau = ext.transition
        if self.arms is not None:
            self.arms.update(0.0 if tau is None else tau.reward)
        if tau is None:
            return ext
        self.tree.add(tau, ext.parent)
        if self.scenario.goal.contains(tau.x_c):
            self.on_goal(k)
        return ext

    def on_goal(self, k: int):
        path = self.tree.retrace_path(self.tree.size - 1)
        self.runs_completed += 1
        if path.total_cost < self.best_cost:
            self.best_cost = path.total_cost
            self.best_path = path
            self.cost_trace.append((k, path.total_cost))
        if self.arms is not None:
            t0 = time.perf_counter()
            self.db.extend(self.tree.iter_transitions())
            self.clusters = cluster(self.db, self.config.clustering, self.rng)
            self.clustering_times.append(time.perf_counter() - t0)
            self.arms = self.arms.reinitialize([0.0, 0.0, *self.clusters.avg_rewards])
            self.recluster_log.append((k, len(self.clusters), self.arms.n_arms))
        self.reset_tree()


def _run(scenario: Scenario, config: PlannerConfig, use_bandit: bool,
         sink: Optional[Callable[[dict], None]] = None) -> PlanResult:
    state = PlannerState(scenario, config, use_bandit)
    times = []
    for k in range(1, config.total_iterations + 1):
        n_clusterings = len(state.clustering_times)
        t0 = time.perf_counter()
        ext = state.step(k)
        dt = time.perf_counter() - t0
        # reclustering is reported separately from the per-iteration cost
        times.append(dt - sum(state.clustering_times[n_clusterings:]))
        if sink is not None:
            sink({
                "iteration": k,
                "arm": ext.arm,
                "reward": None if ext.transition is None else ext.transition.reward,
                "best_cost": state.best_cost,
            })
    return PlanResult(
        best_path=state.best_path,
        best_cost=state.best_cost,
        cost_trace=state.cost_trace,
        runs_completed=state.runs_completed,
        iteration_time_mean=float(np.mean(times)) if times else 0.0,
        iteration_time_max=float(np.max(times)) if times else 0.0,
        clustering_time_total=float(sum(state.clustering_times)),
        clustering_time_max=float(max(state.clustering_times, default=0.0)),
        arm_selections=state.selections,
        recluster_log=state.recluster_log,
        iterations=config.total_iterations,
    )


def mab_rrt(scenario: Scenario, config: PlannerConfig, reward_field=None, sink=None) -> PlanResult:
    """MAB-RRT.  ``config.goal_bias_only`` reduces it to the AO-RRT sampling rule."""
    if reward_field is not None:
        scenario = replace(scenario, reward_field=reward_field)
    return _run(scenario, config, use_bandit=not config.goal_bias_only, sink=sink)


def ao_rrt(scenario: Scenario, config: PlannerConfig, reward_field=None, sink=None) -> PlanResult:
    if reward_field is not None:
        scenario = replace(scenario, reward_field=reward_field)
    return _run(scenario, config, use_bandit=False, sink=sink)
