"""Numeric inner loops.

Every kernel has two implementations with identical floating-point semantics:
``*_nb`` (loop form, compiled by numba when enabled) and ``*_np`` (vectorised
numpy).  The public names at the bottom of the module dispatch on
:data:`mabrrt._accel.USE_NUMBA`.  Squared distances are always accumulated
coordinate by coordinate in index order so both paths agree bit for bit.

Random numbers are never drawn inside kernels; callers pass pre-drawn arrays.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# point validity and segment checks
# ---------------------------------------------------------------------------


@njit(cache=True)
def _point_valid_nb(p, lo, hi, obs_lo, obs_hi):
    d = p.shape[0]
    for k in range(d):
        if p[k] < lo[k] or p[k] > hi[k]:
            return False
    for o in range(obs_lo.shape[0]):
        inside = True
        for k in range(d):
            if p[k] < obs_lo[o, k] or p[k] > obs_hi[o, k]:
                inside = False
                break
        if inside:
            return False
    return True


@njit(cache=True)
def _segment_valid_nb(a, b, lo, hi, obs_lo, obs_hi, resolution):
    d = a.shape[0]
    if not _point_valid_nb(a, lo, hi, obs_lo, obs_hi):
        return False
    if not _point_valid_nb(b, lo, hi, obs_lo, obs_hi):
        return False
    # the box X is convex: valid endpoints imply every interior point is in bounds
    length2 = 0.0
    for k in range(d):
        t = b[k] - a[k]
        length2 += t * t
    n_steps = int(math.ceil(math.sqrt(length2) / resolution))
    if n_steps < 1:
        n_steps = 1
    p = np.empty(d)
    for o in range(obs_lo.shape[0]):
        overlap = True
        for k in range(d):
            smin = min(a[k], b[k])
            smax = max(a[k], b[k])
            if smax < obs_lo[o, k] or smin > obs_hi[o, k]:
                overlap = False
                break
        if not overlap:
            continue
        for i in range(1, n_steps):
            s = i / n_steps
            inside = True
            for k in range(d):
                p[k] = a[k] + (b[k] - a[k]) * s
                if p[k] < obs_lo[o, k] or p[k] > obs_hi[o, k]:
                    inside = False
            if inside:
                return False
    return True


def _points_valid_np(P, lo, hi, obs_lo, obs_hi):
    P = np.atleast_2d(P)
    ok = np.all((P >= lo) & (P <= hi), axis=1)
    for o in range(obs_lo.shape[0]):
        ok &= ~np.all((P >= obs_lo[o]) & (P <= obs_hi[o]), axis=1)
    return ok


def _segments_valid_np(A, B, lo, hi, obs_lo, obs_hi, resolution):
    """Vectorised segment check for ``n`` segments ``A[i] -> B[i]``."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    ok = _points_valid_np(A, lo, hi, obs_lo, obs_hi) & _points_valid_np(B, lo, hi, obs_lo, obs_hi)
    if obs_lo.shape[0] == 0 or not ok.any():
        return ok
    delta = B - A
    length2 = np.zeros(A.shape[0])
    for k in range(A.shape[1]):
        length2 += delta[:, k] * delta[:, k]
    n_steps = np.maximum(np.ceil(np.sqrt(length2) / resolution).astype(np.int64), 1)
    idx = np.flatnonzero(ok)
    max_steps = int(n_steps[idx].max())
    if max_steps < 2:
        return ok
    i = np.arange(1, max_steps)
    s = i[None, :] / n_steps[idx][:, None]  # (m, max_steps-1)
    live = i[None, :] < n_steps[idx][:, None]
    P = A[idx][:, None, :] + delta[idx][:, None, :] * s[:, :, None]
    for o in range(obs_lo.shape[0]):
        smin = np.minimum(A[idx], B[idx])
        smax = np.maximum(A[idx], B[idx])
        overlap = np.all((smax >= obs_lo[o]) & (smin <= obs_hi[o]), axis=1)
        hit = np.all((P >= obs_lo[o]) & (P <= obs_hi[o]), axis=2) & live & overlap[:, None]
        ok[idx[hit.any(axis=1)]] = False
    return ok


# ---------------------------------------------------------------------------
# nearest neighbour: linear scan and incremental k-d tree
# ---------------------------------------------------------------------------


@njit(cache=True)
def _nearest_scan_nb(pts, n, x):
    best = -1
    bd = np.inf
    d = x.shape[0]
    for i in range(n):
        s = 0.0
        for k in range(d):
            t = pts[i, k] - x[k]
            s += t * t
        if s < bd:
            bd = s
            best = i
    return best, bd


def _nearest_scan_np(pts, n, x):
    diff = pts[:n] - x
    d2 = diff[:, 0] * diff[:, 0]
    for k in range(1, x.shape[0]):
        d2 += diff[:, k] * diff[:, k]
    i = int(np.argmin(d2))
    return i, float(d2[i])


@njit(cache=True)
def _kd_insert_nb(pts, left, right, sdim, root, i):
    """Attach point ``i`` below ``root``; returns the depth of the new leaf."""
    d = pts.shape[1]
    left[i] = -1
    right[i] = -1
    if i == root:
        sdim[i] = 0
        return 0
    node = root
    depth = 1
    while True:
        k = sdim[node]
        if pts[i, k] < pts[node, k]:
            if left[node] < 0:
                left[node] = i
                break
            node = left[node]
        else:
            if right[node] < 0:
                right[node] = i
                break
            node = right[node]
        depth += 1
    sdim[i] = depth % d
    return depth


@njit(cache=True)
def _kd_nearest_nb(pts, left, right, sdim, root, x, stack_size):
    """Exact nearest neighbour; ties resolved to the lowest point index."""
    d = x.shape[0]
    stack_node = np.empty(stack_size, dtype=np.int64)
    stack_bound = np.empty(stack_size)
    top = 0
    stack_node[0] = root
    stack_bound[0] = 0.0
    top = 1
    best = -1
    bd = np.inf
    while top > 0:
        top -= 1
        node = stack_node[top]
        if stack_bound[top] > bd:
            continue
        s = 0.0
        for k in range(d):
            t = pts[node, k] - x[k]
            s += t * t
        if s < bd or (s == bd and node < best):
            bd = s
            best = node
        k = sdim[node]
        diff = x[k] - pts[node, k]
        if diff < 0.0:
            near = left[node]
            far = right[node]
        else:
            near = right[node]
            far = left[node]
        if far >= 0:
            stack_node[top] = far
            stack_bound[top] = diff * diff
            top += 1
        if near >= 0:
            stack_node[top] = near
            stack_bound[top] = 0.0
            top += 1
    return best, bd


@njit(cache=True)
def _kd_rebuild_nb(pts, n, left, right, sdim):
    """Balanced rebuild by median splits; returns (root, max depth)."""
    d = pts.shape[1]
    order = np.arange(n)
    for i in range(n):
        left[i] = -1
        right[i] = -1
    # explicit stack of (start, end, depth, parent, side)
    st_start = np.empty(n + 1, dtype=np.int64)
    st_end = np.empty(n + 1, dtype=np.int64)
    st_depth = np.empty(n + 1, dtype=np.int64)
    st_parent = np.empty(n + 1, dtype=np.int64)
    st_side = np.empty(n + 1, dtype=np.int64)
    top = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    st_parent[0] = -1
    st_side[0] = 0
    top = 1
    root = -1
    max_depth = 0
    while top > 0:
        top -= 1
        s = st_start[top]
        e = st_end[top]
        depth = st_depth[top]
        parent = st_parent[top]
        side = st_side[top]
        if e <= s:
            continue
        k = depth % d
        sub = order[s:e]
        keys = np.empty(e - s)
        for j in range(e - s):
            keys[j] = pts[sub[j], k]
        srt = np.argsort(keys, kind="mergesort")
        tmp = sub[srt].copy()
        for j in range(e - s):
            order[s + j] = tmp[j]
        m = s + (e - s) // 2
        # points equal to the split value must go right
        while m > s and pts[order[m - 1], k] == pts[order[m], k]:
            m -= 1
        node = order[m]
        sdim[node] = k
        if depth > max_depth:
            max_depth = depth
        if parent < 0:
            root = node
        elif side == 0:
            left[parent] = node
        else:
            right[parent] = node
        st_start[top] = s
        st_end[top] = m
        st_depth[top] = depth + 1
        st_parent[top] = node
        st_side[top] = 0
        top += 1
        st_start[top] = m + 1
        st_end[top] = e
        st_depth[top] = depth + 1
        st_parent[top] = node
        st_side[top] = 1
        top += 1
    return root, max_depth


# ---------------------------------------------------------------------------
# forward rollouts (single integrator) with target selection
# ---------------------------------------------------------------------------


@njit(cache=True)
def _closest_valid_nb(xp, target, U, D, lo, hi, obs_lo, obs_hi, resolution, d2, xc):
    """Core of :func:`_best_rollout_nb` with caller-owned scratch buffers."""
    n = U.shape[0]
    d = xp.shape[0]
    for j in range(n):
        s = 0.0
        for k in range(d):
            t = xp[k] + U[j, k] * D[j] - target[k]
            s += t * t
        d2[j] = s
    for _ in range(n):
        # strict < keeps the lowest index among equidistant rollouts
        j = -1
        best = np.inf
        for i in range(n):
            if d2[i] < best:
                best = d2[i]
                j = i
        if j < 0:
            return -1
        for k in range(d):
            xc[k] = xp[k] + U[j, k] * D[j]
        if _segment_valid_nb(xp, xc, lo, hi, obs_lo, obs_hi, resolution):
            return j
        d2[j] = np.inf
    return -1


@njit(cache=True)
def _best_rollout_nb(xp, target, U, D, lo, hi, obs_lo, obs_hi, resolution):
    """Index of the valid rollout whose end is closest to ``target`` (-1 if none).

    Candidates are checked in order of distance, lowest index first among ties,
    and the first valid one is returned; most rollouts never need a collision
    check.
    """
    return _closest_valid_nb(xp, target, U, D, lo, hi, obs_lo, obs_hi, resolution,
                             np.empty(U.shape[0]), np.empty(xp.shape[0]))


def _best_rollout_np(xp, target, U, D, lo, hi, obs_lo, obs_hi, resolution):
    XC = xp[None, :] + U * D[:, None]
    ok = _segments_valid_np(np.broadcast_to(xp, XC.shape), XC, lo, hi, obs_lo, obs_hi, resolution)
    if not ok.any():
        return -1
    diff = XC - target
    d2 = diff[:, 0] * diff[:, 0]
    for k in range(1, xp.shape[0]):
        d2 += diff[:, k] * diff[:, k]
    d2[~ok] = np.inf
    return int(np.argmin(d2))


# ---------------------------------------------------------------------------
# batched cluster sampling (regret harness hot path)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _sample_cluster_batch_nb(pts, left, right, sdim, root, n, stack_size, use_kd,
                             member_xp, member_xt, picks, pert_p, pert_t,
                             delta1, delta2, delta3):
    """Run the cluster-sampling attempt loop for a batch of independent draws.

    ``picks`` is (B, K) member indices, ``pert_*`` are (B, K, d) perturbations.
    Returns (parent node index or -1, target) per draw.
    """
    B = picks.shape[0]
    K = picks.shape[1]
    d = member_xp.shape[1]
    parents = np.full(B, -1, dtype=np.int64)
    targets = np.zeros((B, d))
    cp = np.empty(d)
    ct = np.empty(d)
    for b in range(B):
        for a in range(K):
            m = picks[b, a]
            for k in range(d):
                cp[k] = member_xp[m, k] + pert_p[b, a, k]
                ct[k] = member_xt[m, k] + pert_t[b, a, k]
            if use_kd:
                _, dt2 = _kd_nearest_nb(pts, left, right, sdim, root, ct, stack_size)
            else:
                _, dt2 = _nearest_scan_nb(pts, n, ct)
            if math.sqrt(dt2) < delta1:
                continue
            if use_kd:
                ip, dp2 = _kd_nearest_nb(pts, left, right, sdim, root, cp, stack_size)
            else:
                ip, dp2 = _nearest_scan_nb(pts, n, cp)
            dp = math.sqrt(dp2)
            if dp < delta2:
                parents[b] = ip
                for k in range(d):
                    targets[b, k] = ct[k]
                break
            if dp < delta3:
                parents[b] = ip
                for k in range(d):
                    targets[b, k] = cp[k]
    return parents, targets


def _sample_cluster_batch_np(pts, left, right, sdim, root, n, stack_size, use_kd,
                             member_xp, member_xt, picks, pert_p, pert_t,
                             delta1, delta2, delta3):
    B, K = picks.shape
    d = member_xp.shape[1]
    parents = np.full(B, -1, dtype=np.int64)
    targets = np.zeros((B, d))
    CP = member_xp[picks] + pert_p
    CT = member_xt[picks] + pert_t
    for b in range(B):
        for a in range(K):
            _, dt2 = _nearest_scan_np(pts, n, CT[b, a])
            if math.sqrt(dt2) < delta1:
                continue
            ip, dp2 = _nearest_scan_np(pts, n, CP[b, a])
            dp = math.sqrt(dp2)
            if dp < delta2:
                parents[b] = ip
                targets[b] = CT[b, a]
                break
            if dp < delta3:
                parents[b] = ip
                targets[b] = CP[b, a]
    return parents, targets


def _best_rollouts_batch_np(XP, XT, U, D, lo, hi, obs_lo, obs_hi, resolution):
    B, Np, d = U.shape
    XC = XP[:, None, :] + U * D[:, :, None]
    ok = _segments_valid_np(
        np.repeat(XP, Np, axis=0), XC.reshape(B * Np, d), lo, hi, obs_lo, obs_hi, resolution
    ).reshape(B, Np)
    diff = XC - XT[:, None, :]
    d2 = diff[:, :, 0] * diff[:, :, 0]
    for k in range(1, d):
        d2 += diff[:, :, k] * diff[:, :, k]
    d2[~ok] = np.inf
    best = np.argmin(d2, axis=1).astype(np.int64)
    best[~ok.any(axis=1)] = -1
    return best


@njit(cache=True)
def _reward_nb(x, reg_lo, reg_hi, vals, default):
    d = x.shape[0]
    for r in range(vals.shape[0]):
        inside = True
        for k in range(d):
            if x[k] < reg_lo[r, k] or x[k] > reg_hi[r, k]:
                inside = False
                break
        if inside:
            return vals[r]
    return default


@njit(cache=True)
def _nearest_batch_nb(pts, left, right, sdim, root, n, stack_size, use_kd, X):
    B = X.shape[0]
    idx = np.empty(B, dtype=np.int64)
    for b in range(B):
        if use_kd:
            i, _ = _kd_nearest_nb(pts, left, right, sdim, root, X[b], stack_size)
        else:
            i, _ = _nearest_scan_nb(pts, n, X[b])
        idx[b] = i
    return idx


def _nearest_batch_np(pts, left, right, sdim, root, n, stack_size, use_kd, X):
    return np.array([_nearest_scan_np(pts, n, x)[0] for x in X], dtype=np.int64)


@njit(cache=True)
def _cluster_targets_nb(pts, left, right, sdim, root, n, stack_size, use_kd,
                        member_xp, member_xt, delta1, delta2, delta3, width, R):
    """Cluster sampling from raw uniforms.

    ``R`` is (B, K, 1 + 2d) holding the member pick and the parent and target
    perturbations of every attempt.  Returns (parent node or -1, target) per row.
    """
    B, K, _ = R.shape
    d = member_xp.shape[1]
    m_count = member_xp.shape[0]
    picks = np.empty((B, K), dtype=np.int64)
    pert_p = np.empty((B, K, d))
    pert_t = np.empty((B, K, d))
    for b in range(B):
        for a in range(K):
            m = int(R[b, a, 0] * m_count)
            picks[b, a] = m if m < m_count else m_count - 1
            for k in range(d):
                pert_p[b, a, k] = width * (2.0 * R[b, a, 1 + k] - 1.0)
                pert_t[b, a, k] = width * (2.0 * R[b, a, 1 + d + k] - 1.0)
    return _sample_cluster_batch_nb(pts, left, right, sdim, root, n, stack_size, use_kd,
                                    member_xp, member_xt, picks, pert_p, pert_t,
                                    delta1, delta2, delta3)


def _cluster_targets_np(pts, left, right, sdim, root, n, stack_size, use_kd,
                        member_xp, member_xt, delta1, delta2, delta3, width, R):
    d = member_xp.shape[1]
    m_count = member_xp.shape[0]
    picks = np.minimum((R[:, :, 0] * m_count).astype(np.int64), m_count - 1)
    pert_p = width * (2.0 * R[:, :, 1:1 + d] - 1.0)
    pert_t = width * (2.0 * R[:, :, 1 + d:1 + 2 * d] - 1.0)
    return _sample_cluster_batch_np(pts, left, right, sdim, root, n, stack_size, use_kd,
                                    member_xp, member_xt, picks, pert_p, pert_t,
                                    delta1, delta2, delta3)


@njit(cache=True)
def _raw_rollout_rewards_nb(XP, XT, R, ctrl_lo, ctrl_hi, t_max, lo, hi, obs_lo, obs_hi, resolution,
                            reg_lo, reg_hi, vals, default):
    """Transition reward of the best rollout per row (0 where every rollout fails).

    ``R`` is (B, N_p, c + 1): control components then duration.
    """
    B, Np, _ = R.shape
    c = ctrl_lo.shape[0]
    d = XP.shape[1]
    out = np.zeros(B)
    U = np.empty((Np, c))
    D = np.empty(Np)
    d2 = np.empty(Np)
    xc = np.empty(d)
    for b in range(B):
        for j in range(Np):
            for k in range(c):
                U[j, k] = ctrl_lo[k] + (ctrl_hi[k] - ctrl_lo[k]) * R[b, j, k]
            D[j] = t_max * (1.0 - R[b, j, c])
        j = _closest_valid_nb(XP[b], XT[b], U, D, lo, hi, obs_lo, obs_hi, resolution, d2, xc)
        if j < 0:
            continue
        out[b] = 0.5 * (_reward_nb(XP[b], reg_lo, reg_hi, vals, default)
                        + _reward_nb(xc, reg_lo, reg_hi, vals, default))
    return out


def _raw_rollout_rewards_np(XP, XT, R, ctrl_lo, ctrl_hi, t_max, lo, hi, obs_lo, obs_hi, resolution,
                            reg_lo, reg_hi, vals, default):
    c = ctrl_lo.shape[0]
    U = ctrl_lo + (ctrl_hi - ctrl_lo) * R[:, :, :c]
    D = t_max * (1.0 - R[:, :, c])
    return _rollout_rewards_batch_np(XP, XT, U, D, lo, hi, obs_lo, obs_hi, resolution,
                                     reg_lo, reg_hi, vals, default)


def _reward_np(P, reg_lo, reg_hi, vals, default):
    out = np.full(P.shape[0], default)
    for r in range(vals.shape[0] - 1, -1, -1):
        out[np.all((P >= reg_lo[r]) & (P <= reg_hi[r]), axis=1)] = vals[r]
    return out


def _rollout_rewards_batch_np(XP, XT, U, D, lo, hi, obs_lo, obs_hi, resolution,
                              reg_lo, reg_hi, vals, default):
    B = XP.shape[0]
    best = _best_rollouts_batch_np(XP, XT, U, D, lo, hi, obs_lo, obs_hi, resolution)
    out = np.zeros(B)
    ok = best >= 0
    if ok.any():
        rows = np.flatnonzero(ok)
        XC = XP[rows] + U[rows, best[rows]] * D[rows, best[rows]][:, None]
        out[rows] = 0.5 * (_reward_np(XP[rows], reg_lo, reg_hi, vals, default)
                           + _reward_np(XC, reg_lo, reg_hi, vals, default))
    return out


# ---------------------------------------------------------------------------
# HDBSCAN: core distances and minimum spanning tree under the transition metric
# ---------------------------------------------------------------------------


@njit(cache=True)
def _tdist_nb(xp, xc, r, i, j, lam):
    d = xp.shape[1]
    a = 0.0
    b = 0.0
    for k in range(d):
        t = xp[i, k] - xp[j, k]
        a += t * t
        t = xc[i, k] - xc[j, k]
        b += t * t
    return math.sqrt(a) + math.sqrt(b) + lam * abs(r[i] - r[j])


def _tdist_row_np(xp, xc, r, i, lam):
    dp = xp - xp[i]
    dc = xc - xc[i]
    a = dp[:, 0] * dp[:, 0]
    b = dc[:, 0] * dc[:, 0]
    for k in range(1, xp.shape[1]):
        a += dp[:, k] * dp[:, k]
        b += dc[:, k] * dc[:, k]
    return np.sqrt(a) + np.sqrt(b) + lam * np.abs(r - r[i])


# sqrt(fl(x * x)) can sit one ulp below |x|; deflating the coordinate bound keeps pruning exact
_LB_SCALE = 1.0 - 1e-12


@njit(cache=True)
def _kth_nearest_nb(xp, xc, r, lam, k, with_self):
    """k-th smallest distance from every row (the row itself counts as 0 when ``with_self``).

    Rows are swept outward in order of x_p[:, 0]; |dx_p[0]| bounds the metric from
    below, so a sweep direction stops once that gap reaches the current k-th best.
    """
    n = xp.shape[0]
    order = np.argsort(xp[:, 0], kind="mergesort")
    key = np.empty(n)
    for a in range(n):
        key[a] = xp[order[a], 0]
    out = np.empty(n)
    buf = np.empty(k)
    for a in range(n):
        i = order[a]
        cnt = 0
        if with_self:
            buf[0] = 0.0
            cnt = 1
        for direction in (-1, 1):
            b = a + direction
            while 0 <= b < n:
                if cnt == k and abs(key[b] - key[a]) * _LB_SCALE >= buf[k - 1]:
                    break
                j = order[b]
                b += direction
                dij = _tdist_nb(xp, xc, r, i, j, lam)
                if cnt < k:
                    pos = cnt
                    cnt += 1
                elif dij < buf[k - 1]:
                    pos = k - 1
                else:
                    continue
                while pos > 0 and buf[pos - 1] > dij:
                    buf[pos] = buf[pos - 1]
                    pos -= 1
                buf[pos] = dij
        out[i] = buf[k - 1] if cnt == k else np.inf
    return out


@njit(cache=True)
def _core_distances_nb(xp, xc, r, lam, k):
    """Distance to the k-th nearest neighbour, counting the point itself."""
    return _kth_nearest_nb(xp, xc, r, lam, k, True)


def _core_distances_np(xp, xc, r, lam, k):
    n = xp.shape[0]
    core = np.empty(n)
    for i in range(n):
        row = _tdist_row_np(xp, xc, r, i, lam)
        row[i] = 0.0
        core[i] = np.partition(row, k - 1)[k - 1]
    return core


@njit(cache=True)
def _mst_mreach_nb(xp, xc, r, lam, core):
    """Prim's algorithm on the implicit mutual-reachability graph.

    Returns edges as (a, b, weight) arrays in the order they join the tree.
    Ties go to the lowest vertex index.
    """
    n = xp.shape[0]
    best = np.full(n, np.inf)
    src = np.zeros(n, dtype=np.int64)
    ea = np.empty(n - 1, dtype=np.int64)
    eb = np.empty(n - 1, dtype=np.int64)
    ew = np.empty(n - 1)
    rem = np.arange(1, n)  # vertices outside the tree, ascending
    n_rem = n - 1
    cur = 0
    for e in range(n - 1):
        nxt_pos = -1
        bw = np.inf
        for p in range(n_rem):
            j = rem[p]
            bj = best[j]
            # the key can only drop below best[j] if both lower bounds do
            floor = core[cur] if core[cur] > core[j] else core[j]
            if floor < bj:
                lb = (abs(xp[cur, 0] - xp[j, 0]) + abs(xc[cur, 0] - xc[j, 0])
                      + lam * abs(r[cur] - r[j])) * _LB_SCALE
                if lb < bj:
                    m = _tdist_nb(xp, xc, r, cur, j, lam)
                    if floor > m:
                        m = floor
                    if m < bj:
                        best[j] = m
                        src[j] = cur
                        bj = m
            if nxt_pos < 0 or bj < bw:
                bw = bj
                nxt_pos = p
        nxt = rem[nxt_pos]
        ea[e] = src[nxt]
        eb[e] = nxt
        ew[e] = bw
        for p in range(nxt_pos, n_rem - 1):
            rem[p] = rem[p + 1]
        n_rem -= 1
        cur = nxt
    return ea, eb, ew


def _mst_mreach_np(xp, xc, r, lam, core):
    n = xp.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    src = np.zeros(n, dtype=np.int64)
    ea = np.empty(n - 1, dtype=np.int64)
    eb = np.empty(n - 1, dtype=np.int64)
    ew = np.empty(n - 1)
    cur = 0
    in_tree[0] = True
    for e in range(n - 1):
        m = np.maximum(np.maximum(_tdist_row_np(xp, xc, r, cur, lam), core[cur]), core)
        upd = (m < best) & ~in_tree
        best[upd] = m[upd]
        src[upd] = cur
        cand = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(cand))
        if in_tree[nxt]:  # every remaining candidate is at +inf
            nxt = int(np.flatnonzero(~in_tree)[0])
        ea[e] = src[nxt]
        eb[e] = nxt
        ew[e] = best[nxt]
        in_tree[nxt] = True
        cur = nxt
    return ea, eb, ew


@njit(cache=True)
def _nn_dispersion_nb(xp, xc):
    """Leave-one-out nearest-neighbour distance ||dx_p|| + ||dx_c|| of every row."""
    return _kth_nearest_nb(xp, xc, np.zeros(xp.shape[0]), 0.0, 1, False)


def _nn_dispersion_np(xp, xc):
    n = xp.shape[0]
    zero = np.zeros(n)
    out = np.empty(n)
    for i in range(n):
        row = _tdist_row_np(xp, xc, zero, i, 0.0)
        row[i] = np.inf
        out[i] = row.min()
    return out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if USE_NUMBA:
    segment_valid = _segment_valid_nb
    point_valid = _point_valid_nb
    nearest_scan = _nearest_scan_nb
    best_rollout = _best_rollout_nb
    core_distances = _core_distances_nb
    mst_mutual_reachability = _mst_mreach_nb
    nearest_batch = _nearest_batch_nb
    cluster_targets = _cluster_targets_nb
    raw_rollout_rewards = _raw_rollout_rewards_nb
    nn_dispersion = _nn_dispersion_nb
else:

    def segment_valid(a, b, lo, hi, obs_lo, obs_hi, resolution):
        return bool(_segments_valid_np(a, b, lo, hi, obs_lo, obs_hi, resolution)[0])

    def point_valid(p, lo, hi, obs_lo, obs_hi):
        return bool(_points_valid_np(p, lo, hi, obs_lo, obs_hi)[0])

    nearest_scan = _nearest_scan_np
    best_rollout = _best_rollout_np
    core_distances = _core_distances_np
    mst_mutual_reachability = _mst_mreach_np
    nearest_batch = _nearest_batch_np
    cluster_targets = _cluster_targets_np
    raw_rollout_rewards = _raw_rollout_rewards_np
    nn_dispersion = _nn_dispersion_np

segments_valid_np = _segments_valid_np
points_valid_np = _points_valid_np
kd_insert = _kd_insert_nb
kd_nearest = _kd_nearest_nb
kd_rebuild = _kd_rebuild_nb
