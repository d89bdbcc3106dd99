"""The compiled loops and the numpy fallback must agree bit for bit."""
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from mabrrt import kernels as K
from mabrrt._accel import USE_NUMBA

LO = np.zeros(2)
HI = np.ones(2)
OBS_LO = np.array([[0.3, 0.3], [0.6, 0.05], [0.1, 0.8]])
OBS_HI = np.array([[0.5, 0.75], [0.7, 0.5], [0.45, 0.85]])
REG_LO = np.array([[0.0, 0.0], [0.0, 0.5]])
REG_HI = np.array([[0.3, 1.0], [1.0, 1.0]])
VALS = np.array([0.99, 0.8])


def test_segments_match_scalar_loop(rng):
    A = rng.uniform(0, 1, (2000, 2))
    B = rng.uniform(0, 1, (2000, 2))
    vec = K._segments_valid_np(A, B, LO, HI, OBS_LO, OBS_HI, 0.01)
    loop = [K._segment_valid_nb(a, b, LO, HI, OBS_LO, OBS_HI, 0.01) for a, b in zip(A, B)]
    np.testing.assert_array_equal(vec, loop)


def test_best_rollout_paths_agree(rng):
    for _ in range(500):
        xp = rng.uniform(0, 1, 2)
        U = rng.uniform(-0.5, 0.5, (100, 2))
        D = 2.0 * (1.0 - rng.random(100))
        U[7], D[7] = U[3], D[3]  # exact tie: the lower index must win
        tg = rng.uniform(0, 1, 2)
        a = K._best_rollout_nb(xp, tg, U, D, LO, HI, OBS_LO, OBS_HI, 0.01)
        b = K._best_rollout_np(xp, tg, U, D, LO, HI, OBS_LO, OBS_HI, 0.01)
        assert a == b


def test_best_rollout_is_closest_valid(rng):
    for _ in range(200):
        xp = rng.uniform(0, 0.3, 2)
        U = rng.uniform(-0.5, 0.5, (50, 2))
        D = 2.0 * (1.0 - rng.random(50))
        tg = rng.uniform(0, 1, 2)
        j = K._best_rollout_nb(xp, tg, U, D, LO, HI, OBS_LO, OBS_HI, 0.01)
        XC = xp + U * D[:, None]
        ok = np.array([K._segment_valid_nb(xp, c, LO, HI, OBS_LO, OBS_HI, 0.01) for c in XC])
        if not ok.any():
            assert j == -1
            continue
        d = np.where(ok, np.linalg.norm(XC - tg, axis=1), np.inf)
        assert j == int(np.argmin(d))


def test_rollout_reward_batches_agree(rng):
    XP = rng.uniform(0, 0.25, (60, 2))
    XT = rng.uniform(0, 1, (60, 2))
    R = rng.random((60, 100, 3))
    cl, ch = np.array([-0.5, -0.5]), np.array([0.5, 0.5])
    a = K._raw_rollout_rewards_nb(XP, XT, R, cl, ch, 2.0, LO, HI, OBS_LO, OBS_HI, 0.01, REG_LO, REG_HI, VALS, 0.1)
    b = K._raw_rollout_rewards_np(XP, XT, R, cl, ch, 2.0, LO, HI, OBS_LO, OBS_HI, 0.01, REG_LO, REG_HI, VALS, 0.1)
    np.testing.assert_array_equal(a, b)
    assert np.all((a == 0) | ((a >= 0.1) & (a <= 0.99)))


def test_reward_lookup_agrees(rng):
    P = rng.uniform(0, 1, (500, 2))
    np.testing.assert_array_equal([K._reward_nb(p, REG_LO, REG_HI, VALS, 0.1) for p in P],
                                  K._reward_np(P, REG_LO, REG_HI, VALS, 0.1))


def _kd_tree(pts):
    n = len(pts)
    left = np.empty(n, np.int64)
    right = np.empty(n, np.int64)
    sdim = np.empty(n, np.int64)
    root, depth = K.kd_rebuild(pts, n, left, right, sdim)
    return left, right, sdim, root, depth


def test_cluster_sampling_paths_agree(rng):
    pts = rng.uniform(0, 1, (300, 2))
    left, right, sdim, root, depth = _kd_tree(pts)
    mxp = rng.uniform(0.2, 0.4, (20, 2))
    mxt = mxp + rng.uniform(-0.05, 0.05, (20, 2))
    R = rng.random((50, 10, 5))
    args = (pts, left, right, sdim, root, 300, depth + 2)
    for use_kd in (True, False):
        pa, ta = K._cluster_targets_nb(*args, use_kd, mxp, mxt, 0.02, 0.02, 0.04, 0.01, R)
        pb, tb = K._cluster_targets_np(*args, use_kd, mxp, mxt, 0.02, 0.02, 0.04, 0.01, R)
        np.testing.assert_array_equal(pa, pb)
        np.testing.assert_array_equal(ta, tb)


def test_nearest_batch_agrees(rng):
    pts = rng.uniform(0, 1, (1000, 2))
    left, right, sdim, root, depth = _kd_tree(pts)
    X = rng.uniform(0, 1, (2000, 2))
    a = K._nearest_batch_nb(pts, left, right, sdim, root, 1000, depth + 2, True, X)
    b = K._nearest_batch_np(pts, left, right, sdim, root, 1000, depth + 2, True, X)
    np.testing.assert_array_equal(a, b)


def test_clustering_kernels_agree(rng):
    xp = rng.uniform(0, 1, (150, 2))
    xc = xp + rng.uniform(-0.1, 0.1, (150, 2))
    r = rng.choice([0.1, 0.2, 0.8, 0.99], 150)
    core_a = K._core_distances_nb(xp, xc, r, 5.0, 4)
    core_b = K._core_distances_np(xp, xc, r, 5.0, 4)
    np.testing.assert_array_equal(core_a, core_b)
    ea = K._mst_mreach_nb(xp, xc, r, 5.0, core_a)
    eb = K._mst_mreach_np(xp, xc, r, 5.0, core_a)
    for x, y in zip(ea, eb):
        np.testing.assert_array_equal(x, y)


_RUN = """
import json
from mabrrt import USE_NUMBA, PlannerConfig, mab_rrt, resolve_scenario
r = mab_rrt(resolve_scenario("D"), PlannerConfig(total_iterations=300, rng_seed=3))
print(json.dumps({"numba": USE_NUMBA, "trace": r.cost_trace, "sel": r.arm_selections[-50:]}))
"""


def _run_planner(disable: bool) -> dict:
    env = dict(os.environ)
    env.pop("MABRRT_DISABLE_NUMBA", None)
    if disable:
        env["MABRRT_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", _RUN], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


@pytest.mark.skipif(not USE_NUMBA, reason="numba unavailable")
def test_fallback_flag_reproduces_planner_run():
    fast = _run_planner(False)
    slow = _run_planner(True)
    assert fast["numba"] and not slow["numba"]
    assert fast["trace"] == slow["trace"]
    assert fast["sel"] == slow["sel"]


def test_nn_dispersion_paths_agree(rng):
    xp = rng.uniform(0, 1, (300, 2))
    xc = xp + rng.uniform(-0.1, 0.1, (300, 2))
    np.testing.assert_array_equal(K._nn_dispersion_nb(xp, xc), K._nn_dispersion_np(xp, xc))


def test_clustering_kernels_agree_with_ties(rng):
    # coordinates on a coarse grid and few reward levels: many equal distances
    xp = rng.integers(0, 6, (200, 2)) / 5.0
    xc = xp + rng.integers(-1, 2, (200, 2)) / 10.0
    r = rng.choice([0.2, 0.8], 200)
    for k in (2, 5):
        core = K._core_distances_nb(xp, xc, r, 5.0, k)
        np.testing.assert_array_equal(core, K._core_distances_np(xp, xc, r, 5.0, k))
        for x, y in zip(K._mst_mreach_nb(xp, xc, r, 5.0, core), K._mst_mreach_np(xp, xc, r, 5.0, core)):
            np.testing.assert_array_equal(x, y)
    np.testing.assert_array_equal(K._nn_dispersion_nb(xp, xc), K._nn_dispersion_np(xp, xc))
