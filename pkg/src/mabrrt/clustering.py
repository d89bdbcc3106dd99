"""Transition database and HDBSCAN clustering under the reward-augmented metric.

The distance between two transitions is

    |x_p1 - x_p2| + |x_c1 - x_c2| + lam * |r1 - r2|

HDBSCAN pipeline: core distances (k = N_min, the point itself included), minimum
spanning tree of the mutual-reachability graph, single-linkage hierarchy,
condensed tree with minimum cluster size N_min, excess-of-mass selection.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .world import Transition


class TransitionDatabase:
    """Append-only store of transitions kept as parallel arrays."""

    def __init__(self, dim: int, control_dim: int | None = None, capacity: int = 1024):
        self.dim = dim
        self.control_dim = control_dim if control_dim is not None else dim
        self._cap = capacity
        self.size = 0
        self._x_p = np.empty((capacity, dim))
        self._x_c = np.empty((capacity, dim))
        self._x_trg = np.empty((capacity, dim))
        self._u = np.empty((capacity, self.control_dim))
        self._d = np.empty(capacity)
        self._r = np.empty(capacity)

    def __len__(self):
        return self.size

    def _reserve(self, n):
        if self.size + n <= self._cap:
            return
        while self.size + n > self._cap:
            self._cap *= 2
        for name in ("_x_p", "_x_c", "_x_trg", "_u", "_d", "_r"):
            old = getattr(self, name)
            new = np.empty((self._cap,) + old.shape[1:])
            new[: self.size] = old[: self.size]
            setattr(self, name, new)

    def add(self, tau: Transition):
        self._reserve(1)
        i = self.size
        self._x_p[i] = tau.x_p
        self._x_c[i] = tau.x_c
        self._x_trg[i] = tau.x_trg
        self._u[i] = tau.u
        self._d[i] = tau.d
        self._r[i] = tau.reward
        self.size += 1

    def extend(self, transitions):
        for t in transitions:
            self.add(t)

    x_p = property(lambda self: self._x_p[: self.size])
    x_c = property(lambda self: self._x_c[: self.size])
    x_trg = property(lambda self: self._x_trg[: self.size])
    u = property(lambda self: self._u[: self.size])
    d = property(lambda self: self._d[: self.size])
    reward = property(lambda self: self._r[: self.size])

    def transition(self, i: int) -> Transition:
        return Transition(self.x_p[i].copy(), self.u[i].copy(), float(self.d[i]),
                          self.x_c[i].copy(), self.x_trg[i].copy(), float(self.reward[i]))

    @classmethod
    def from_arrays(cls, x_p, x_c, reward, x_trg=None):
        x_p = np.atleast_2d(np.asarray(x_p, dtype=float))
        db = cls(x_p.shape[1], capacity=max(len(x_p), 1))
        n = x_p.shape[0]
        db._x_p[:n] = x_p
        db._x_c[:n] = x_c
        db._x_trg[:n] = x_c if x_trg is None else x_trg
        db._u[:n] = 0.0
        db._d[:n] = 1.0
        db._r[:n] = reward
        db.size = n
        return db


@dataclass(frozen=True)
class ClusteringConfig:
    lam: float = 5.0
    n_min_lo: int = 2
    n_min_hi: int = 5
    allow_single_cluster: bool = True

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if not 2 <= self.n_min_lo <= self.n_min_hi:
            raise ValueError("need 2 <= n_min_lo <= n_min_hi")


@dataclass
class Cluster:
    members: np.ndarray  # indices into the database
    avg_reward: float
    delta1: float
    delta2: float
    delta3: float
    member_xp: np.ndarray = field(repr=False)
    member_xtrg: np.ndarray = field(repr=False)

    def __len__(self):
        return int(self.members.size)


@dataclass
class ClusterSet:
    clusters: list
    labels: np.ndarray  # per database entry; -1 is noise
    n_min: int
    dropped: int = 0  # clusters discarded as degenerate

    def __len__(self):
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters)

    def __getitem__(self, i):
        return self.clusters[i]

    @property
    def avg_rewards(self) -> list:
        return [c.avg_reward for c in self.clusters]

    @classmethod
    def empty(cls) -> "ClusterSet":
        return cls([], np.zeros(0, dtype=np.int64), 0)


class DegenerateCluster(ValueError):
    """Dispersion thresholds are undefined (singleton or zero-spread cluster)."""


def transition_distance(t1: Transition, t2: Transition, lam: float) -> float:
    return (float(np.linalg.norm(np.asarray(t1.x_p) - t2.x_p))
            + float(np.linalg.norm(np.asarray(t1.x_c) - t2.x_c))
            + lam * abs(t1.reward - t2.reward))


# ---------------------------------------------------------------------------
# hierarchy
# ---------------------------------------------------------------------------


def _single_linkage(ea, eb, ew, n):
    """Merge list (left, right, distance, size) from MST edges, scipy-style ids."""
    order = np.argsort(ew, kind="mergesort")
    parent = np.arange(2 * n - 1)
    size = np.ones(2 * n - 1, dtype=np.int64)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    merges = np.empty((n - 1, 4))
    nxt = n
    for row, e in enumerate(order):
        a = find(int(ea[e]))
        b = find(int(eb[e]))
        merges[row] = (a, b, ew[e], size[a] + size[b])
        parent[a] = parent[b] = nxt
        size[nxt] = size[a] + size[b]
        nxt += 1
    return merges


def _condense(merges, n, min_size):
    """Condensed tree rows (parent, child, lambda, child_size).

    Points keep ids ``0..n-1``; condensed clusters are numbered from ``n`` (root).
    """
    root = 2 * n - 2
    left = {}
    right = {}
    dist = {}
    size = {}
    for i, (a, b, w, s) in enumerate(merges):
        node = n + i
        left[node] = int(a)
        right[node] = int(b)
        dist[node] = w
        size[node] = int(s)

    def node_size(x):
        return 1 if x < n else size[x]

    def leaves(x):
        out = []
        stack = [x]
        while stack:
            y = stack.pop()
            if y < n:
                out.append(y)
            else:
                stack.append(right[y])
                stack.append(left[y])
        return out

    rows = []
    next_label = n + 1
    stack = [(root, n)]  # (hierarchy node, condensed label)
    while stack:
        node, label = stack.pop()
        if node < n:
            continue
        w = dist[node]
        lam = 1.0 / w if w > 0 else np.inf
        a, b = left[node], right[node]
        sa, sb = node_size(a), node_size(b)
        if sa >= min_size and sb >= min_size:
            for child, sc in ((a, sa), (b, sb)):
                rows.append((label, next_label, lam, sc))
                stack.append((child, next_label))
                next_label += 1
        elif sa < min_size and sb < min_size:
            for child in (a, b):
                for p in leaves(child):
                    rows.append((label, p, lam, 1))
        else:
            big, small = (a, b) if sa >= min_size else (b, a)
            for p in leaves(small):
                rows.append((label, p, lam, 1))
            stack.append((big, label))
    return rows


def _select_clusters(rows, n, allow_single_cluster):
    """Excess-of-mass selection; returns the set of selected condensed labels."""
    birth = {n: 0.0}
    children = {}
    for parent, child, lam, sz in rows:
        if sz > 1 or child >= n:
            birth[child] = lam
            children.setdefault(parent, []).append(child)
    stability = {c: 0.0 for c in birth}
    for parent, child, lam, sz in rows:
        b = birth[parent]
        # points that never leave before the data runs out sit at lambda = inf;
        # cap so identical points do not produce infinite stability
        lam_eff = lam if np.isfinite(lam) else 1e12
        stability[parent] += (lam_eff - b) * sz
    labels = sorted(birth)
    if not allow_single_cluster and len(labels) > 1:
        labels = [c for c in labels if c != n]
    is_selected = {}
    for c in sorted(labels, reverse=True):
        kids = [k for k in children.get(c, []) if k in stability]
        subtree = sum(stability[k] for k in kids)
        if kids and subtree > stability[c]:
            stability[c] = subtree
            is_selected[c] = False
        else:
            is_selected[c] = True
    selected = set()
    # top-down: a selected cluster shadows its descendants
    roots = [n] if n in is_selected else children.get(n, [])
    stack = list(roots)
    while stack:
        c = stack.pop()
        if is_selected.get(c, False):
            selected.add(c)
        else:
            stack.extend(children.get(c, []))
    return selected, children


def hdbscan_labels(x_p, x_c, reward, lam: float, min_size: int, allow_single_cluster: bool = True):
    """Flat HDBSCAN labels (-1 = noise), clusters numbered by smallest member."""
    x_p = np.ascontiguousarray(x_p, dtype=float)
    x_c = np.ascontiguousarray(x_c, dtype=float)
    reward = np.ascontiguousarray(reward, dtype=float)
    n = x_p.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    if n < max(min_size, 2):
        return labels
    k = min(min_size, n)
    core = kernels.core_distances(x_p, x_c, reward, float(lam), int(k))
    ea, eb, ew = kernels.mst_mutual_reachability(x_p, x_c, reward, float(lam), core)
    merges = _single_linkage(ea, eb, ew, n)
    rows = _condense(merges, n, min_size)
    selected, children = _select_clusters(rows, n, allow_single_cluster)
    # map every point to the selected ancestor of the condensed cluster it fell from
    parent_of = {}
    for parent, child, lam_, sz in rows:
        parent_of[child] = parent
    groups = {}
    for p in range(n):
        c = parent_of.get(p, n)
        while c not in selected and c != n:
            c = parent_of[c]
        if c in selected:
            groups.setdefault(c, []).append(p)
    ordered = sorted(groups.values(), key=lambda g: min(g))
    for lbl, g in enumerate(ordered):
        labels[g] = lbl
    return labels


# ---------------------------------------------------------------------------
# statistics and the public entry point
# ---------------------------------------------------------------------------


def nn_dispersion(x_p: np.ndarray, x_c: np.ndarray) -> np.ndarray:
    """Leave-one-out nearest-neighbour spatial distance of every member."""
    return kernels.nn_dispersion(np.ascontiguousarray(x_p, dtype=float), np.ascontiguousarray(x_c, dtype=float))


def cluster_stats(members, db: TransitionDatabase):
    """(avg_reward, delta1, delta2, delta3) of a cluster.

    delta1 = delta2 = median nearest-neighbour distance, delta3 = 2 * delta2.
    """
    members = np.asarray(members, dtype=np.int64)
    if members.size == 0:
        raise ValueError("empty cluster")
    avg = float(np.mean(db.reward[members]))
    if members.size < 2:
        raise DegenerateCluster("singleton cluster")
    nn = nn_dispersion(db.x_p[members], db.x_c[members])
    d2 = float(np.median(nn))
    if not d2 > 0:
        raise DegenerateCluster("zero dispersion")
    return avg, d2, d2, 2.0 * d2


def cluster(db: TransitionDatabase, config: ClusteringConfig, rng: np.random.Generator,
            n_min: int | None = None) -> ClusterSet:
    """Cluster the whole database; N_min is drawn uniformly unless given."""
    if n_min is None:
        n_min = int(rng.integers(config.n_min_lo, config.n_min_hi + 1))
    if len(db) < n_min:
        return ClusterSet([], np.full(len(db), -1, dtype=np.int64), n_min)
    labels = hdbscan_labels(db.x_p, db.x_c, db.reward, config.lam, n_min, config.allow_single_cluster)
    clusters = []
    dropped = 0
    for lbl in range(labels.max() + 1 if labels.size else 0):
        members = np.flatnonzero(labels == lbl)
        try:
            avg, d1, d2, d3 = cluster_stats(members, db)
        except DegenerateCluster:
            dropped += 1
            continue
        clusters.append(Cluster(members, avg, d1, d2, d3, db.x_p[members].copy(), db.x_trg[members].copy()))
    return ClusterSet(clusters, labels, n_min, dropped)
