"""Kinodynamic RRT meta-planning with bandit-driven sampling over clustered transitions."""
from ._accel import USE_NUMBA
from .bandit import ArmSet, KfManbConfig, Policy, initialize
from .clustering import ClusterSet, ClusteringConfig, TransitionDatabase, cluster, transition_distance
from .planner import PlannerConfig, PlanResult, ao_rrt, mab_rrt
from .tree import SearchTree
from .world import (Box, Path, RewardField, Scenario, Transition, free_scenario, is_valid, load_scenario,
                    path_cost, propagate, resolve_scenario, reward_of, segment_valid)

__version__ = "0.1.0"
