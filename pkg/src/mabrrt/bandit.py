"""Arm beliefs and arm selection: KF-MANB, UCB-1 and Thompson sampling.

Arm indices are 0-based here: arm 0 samples uniformly over X, arm 1 samples the
goal region, arm ``2 + i`` samples cluster ``i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

ETA_FLOOR = 1e-10


class Policy(str, Enum):
    KFMANB = "kfmanb"
    UCB1 = "ucb1"
    TS = "ts"


@dataclass(frozen=True)
class KfManbConfig:
    sigma_obs_sq: float = 1e-4
    sigma_tr_sq: float = 1e-4
    eta: float = ETA_FLOOR  # starting value of the adaptive scale
    sigma_init: float = 0.2

    def __post_init__(self):
        if min(self.sigma_obs_sq, self.sigma_tr_sq, self.eta, self.sigma_init) <= 0:
            raise ValueError("KF-MANB constants must be strictly positive")


class ArmSet:
    """Belief state of an M-armed bandit.

    ``select`` must be followed by exactly one ``update`` before the next
    ``select``; the pair is one bandit round.
    """

    def __init__(self, initial_rewards: Sequence[float], policy: Policy | str = Policy.KFMANB,
                 config: Optional[KfManbConfig] = None, eta: Optional[float] = None):
        rewards = np.asarray(initial_rewards, dtype=float).reshape(-1)
        if rewards.size == 0:
            raise ValueError("at least one arm is required")
        if np.any(rewards < 0) or np.any(rewards > 1) or not np.all(np.isfinite(rewards)):
            raise ValueError("initial rewards must lie in [0, 1]")
        self.policy = Policy(policy)
        self.config = config or KfManbConfig()
        self.means = rewards.copy()
        self.variances = np.full(rewards.size, self.config.sigma_init ** 2)
        self.pull_count = np.zeros(rewards.size, dtype=np.int64)
        self.reward_sum = np.zeros(rewards.size)
        # eta carries over across re-initialisations within one planning session
        self.eta = self.config.eta if eta is None else float(eta)
        self.total_pulls = 0
        self.last_selected: Optional[int] = None

    @property
    def n_arms(self) -> int:
        return int(self.means.size)

    def reinitialize(self, initial_rewards: Sequence[float]) -> "ArmSet":
        return ArmSet(initial_rewards, self.policy, self.config, eta=self.eta)

    # -- selection -----------------------------------------------------------
    def ucb_index(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            bonus = np.sqrt(2.0 * math.log(max(self.total_pulls, 1)) / self.pull_count)
        return self.means + bonus

    def _choose(self, rng: np.random.Generator) -> int:
        if self.policy is Policy.UCB1:
            unpulled = np.flatnonzero(self.pull_count == 0)
            if unpulled.size:
                return int(unpulled[0])
            return int(np.argmax(self.ucb_index()))
        if self.policy is Policy.KFMANB:
            std = np.sqrt(self.variances)
        else:
            std = self.config.sigma_init / np.sqrt(self.pull_count + 1.0)
        # same stream and values as rng.normal(means, std), without its broadcasting overhead
        draws = self.means + std * rng.standard_normal(self.means.size)
        return int(np.argmax(draws))

    def select(self, rng: np.random.Generator) -> int:
        arm = self._choose(rng)
        self.last_selected = arm
        return arm

    def peek(self, rng: np.random.Generator) -> int:
        """Selection without recording it (no update expected)."""
        return self._choose(rng)

    # -- feedback ------------------------------------------------------------
    def update(self, r: float) -> None:
        if self.last_selected is None:
            raise RuntimeError("update() without a preceding select()")
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"reward {r} outside [0, 1]")
        j = self.last_selected
        if self.policy is Policy.KFMANB:
            c = self.config
            prior = self.variances[j] + c.sigma_tr_sq * self.eta ** 2
            denom = prior + c.sigma_obs_sq
            new_mean = (prior * r + c.sigma_obs_sq * self.means[j]) / denom
            new_var = (prior * c.sigma_obs_sq) / denom
            self.variances += c.sigma_tr_sq
            self.means[j] = new_mean
            self.variances[j] = new_var
            self.eta = max(ETA_FLOOR, 0.9 * self.eta + 0.1 * abs(r))
        else:
            # the initial reward is only a prior until the first pull
            self.reward_sum[j] += r
            self.means[j] = self.reward_sum[j] / (self.pull_count[j] + 1)
        self.pull_count[j] += 1
        self.total_pulls += 1
        self.last_selected = None

    def trace_record(self, step: int, arm: int, reward: float) -> dict:
        return {
            "step": step,
            "arm": arm,
            "reward": reward,
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }


def initialize(initial_rewards: Sequence[float], policy: Policy | str = Policy.KFMANB,
               config: Optional[KfManbConfig] = None) -> ArmSet:
    return ArmSet(initial_rewards, policy, config)
