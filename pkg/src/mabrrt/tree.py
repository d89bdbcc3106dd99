"""RRT search tree with an incremental k-d index."""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from ._accel import USE_NUMBA
from .world import Path, Transition, transition_cost

KD_MAX_DIM = 8


class SearchTree:
    """Rooted tree of transitions.

    Node ``i`` stores its state in ``states[i]``; parents always precede children.
    Nearest-neighbour queries use a k-d tree (numba path, dimension <= 8) or a
    linear scan; both return the lowest-index node among equidistant ones.
    """

    def __init__(self, root_state, capacity: int = 256, use_kd: bool | None = None):
        root_state = np.asarray(root_state, dtype=float)
        self.dim = int(root_state.shape[0])
        if use_kd is None:
            use_kd = USE_NUMBA and self.dim <= KD_MAX_DIM
        self.use_kd = bool(use_kd)
        self._cap = max(int(capacity), 2)
        self.states = np.empty((self._cap, self.dim))
        self.parent = np.empty(self._cap, dtype=np.int64)
        self.reward = np.empty(self._cap)
        self.transitions: list[Transition | None] = []
        self._left = np.empty(self._cap, dtype=np.int64)
        self._right = np.empty(self._cap, dtype=np.int64)
        self._sdim = np.empty(self._cap, dtype=np.int64)
        self._root = 0
        self._depth = 0
        self.size = 0
        self._push(root_state, -1, None, 0.0)

    # -- storage ----------------------------------------------------------
    def _grow(self):
        self._cap *= 2
        for name in ("states", "parent", "reward", "_left", "_right", "_sdim"):
            old = getattr(self, name)
            new = np.empty((self._cap,) + old.shape[1:], dtype=old.dtype)
            new[: self.size] = old[: self.size]
            setattr(self, name, new)

    def _push(self, state, parent, tau, reward) -> int:
        if self.size == self._cap:
            self._grow()
        i = self.size
        self.states[i] = state
        self.parent[i] = parent
        self.reward[i] = reward
        self.transitions.append(tau)
        self.size += 1
        if self.use_kd:
            depth = kernels.kd_insert(self.states, self._left, self._right, self._sdim, self._root, i)
            if depth > self._depth:
                self._depth = depth
                if depth > 4 * math.log2(self.size + 1) + 16:
                    self._root, self._depth = kernels.kd_rebuild(
                        self.states, self.size, self._left, self._right, self._sdim
                    )
        return i

    def __len__(self):
        return self.size

    @property
    def root(self) -> int:
        return 0

    # -- operations ---------------------------------------------------------
    def add(self, tau: Transition, parent: int) -> int:
        """Attach ``tau`` below node ``parent``; returns the new node id."""
        if not 0 <= parent < self.size:
            raise IndexError(f"unknown parent node {parent}")
        if not np.array_equal(self.states[parent], tau.x_p):
            raise ValueError("transition x_p does not match the parent state")
        return self._push(np.asarray(tau.x_c, dtype=float), parent, tau, tau.reward)

    def nearest(self, x) -> int:
        return self.nearest_with_distance(x)[0]

    def nearest_with_distance(self, x) -> tuple[int, float]:
        x = np.asarray(x, dtype=float)
        if self.use_kd:
            i, d2 = kernels.kd_nearest(
                self.states, self._left, self._right, self._sdim, self._root, x, self._depth + 2
            )
        else:
            i, d2 = kernels.nearest_scan(self.states, self.size, x)
        return int(i), math.sqrt(d2)

    def nearest_linear(self, x) -> int:
        """Brute-force reference query."""
        return int(kernels.nearest_scan(self.states, self.size, np.asarray(x, dtype=float))[0])

    def state(self, node: int) -> np.ndarray:
        return self.states[node]

    def retrace_path(self, leaf: int) -> Path:
        if not 0 <= leaf < self.size:
            raise IndexError(f"unknown node {leaf}")
        chain = []
        node = leaf
        while node != 0:
            chain.append(self.transitions[node])
            node = int(self.parent[node])
        chain.reverse()
        cost = 0.0
        for t in chain:
            cost += transition_cost(t.x_p, t.x_c, t.reward)
        return Path(chain, cost)

    def kd_arrays(self):
        """Arguments for the batched cluster-sampling kernel."""
        return (self.states, self._left, self._right, self._sdim, self._root, self.size,
                self._depth + 2, self.use_kd)

    def iter_transitions(self):
        return (t for t in self.transitions[1:])

    def dump_records(self):
        """Flat (node, parent, state..., reward) rows for debugging/visualisation."""
        rows = []
        for i in range(self.size):
            rows.append((i, int(self.parent[i]), *self.states[i].tolist(), float(self.reward[i])))
        return rows
