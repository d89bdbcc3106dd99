"""Compiled kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--no-planner]

Each kernel pair is run on the same inputs (outputs are checked equal) and the
best of ``--repeat`` timings is reported.  The planner rows run one MAB-RRT
session in a subprocess with and without ``MABRRT_DISABLE_NUMBA``.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from mabrrt import kernels as K
from mabrrt._accel import USE_NUMBA

LO, HI = np.zeros(2), np.ones(2)
OBS_LO = np.array([[0.3, 0.3], [0.6, 0.05], [0.1, 0.8]])
OBS_HI = np.array([[0.5, 0.75], [0.7, 0.5], [0.45, 0.85]])
REG_LO = np.array([[0.0, 0.0], [0.0, 0.5]])
REG_HI = np.array([[0.3, 1.0], [1.0, 1.0]])
VALS = np.array([0.99, 0.8])


def best_of(fn, repeat):
    out = fn()  # warm-up (and JIT compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    A, B = rng.uniform(0, 1, (5000, 2)), rng.uniform(0, 1, (5000, 2))
    yield "segments (5000)", (lambda: np.array([K._segment_valid_nb(a, b, LO, HI, OBS_LO, OBS_HI, 0.01)
                                                for a, b in zip(A, B)])), \
        (lambda: K._segments_valid_np(A, B, LO, HI, OBS_LO, OBS_HI, 0.01))

    XP = rng.uniform(0, 0.25, (200, 2))
    XT = rng.uniform(0, 1, (200, 2))
    R = rng.random((200, 100, 3))
    cl, ch = np.full(2, -0.5), np.full(2, 0.5)
    args = (XP, XT, R, cl, ch, 2.0, LO, HI, OBS_LO, OBS_HI, 0.01, REG_LO, REG_HI, VALS, 0.1)
    yield "rollout rewards (200 x 100)", (lambda: K._raw_rollout_rewards_nb(*args)), \
        (lambda: K._raw_rollout_rewards_np(*args))

    pts = rng.uniform(0, 1, (5000, 2))
    n = len(pts)
    left, right, sdim = np.empty(n, np.int64), np.empty(n, np.int64), np.empty(n, np.int64)
    root, depth = K.kd_rebuild(pts, n, left, right, sdim)
    X = rng.uniform(0, 1, (5000, 2))
    kd = (pts, left, right, sdim, root, n, depth + 2, True, X)
    yield "nearest (5000 in 5000)", (lambda: K._nearest_batch_nb(*kd)), (lambda: K._nearest_batch_np(*kd))

    xp = rng.uniform(0, 1, (2000, 2))
    xc = xp + rng.uniform(-0.1, 0.1, (2000, 2))
    r = rng.choice([0.1, 0.2, 0.8, 0.99], 2000)
    yield "core distances (2000)", (lambda: K._core_distances_nb(xp, xc, r, 5.0, 4)), \
        (lambda: K._core_distances_np(xp, xc, r, 5.0, 4))
    core = K._core_distances_np(xp, xc, r, 5.0, 4)
    yield "mutual-reachability MST (2000)", (lambda: K._mst_mreach_nb(xp, xc, r, 5.0, core)), \
        (lambda: K._mst_mreach_np(xp, xc, r, 5.0, core))


_RUN = """
import json, time
from mabrrt import USE_NUMBA, PlannerConfig, mab_rrt, resolve_scenario
t0 = time.perf_counter()
r = mab_rrt(resolve_scenario("D"), PlannerConfig(total_iterations=1000, rng_seed=0))
print(json.dumps({"numba": USE_NUMBA, "seconds": time.perf_counter() - t0, "cost": r.best_cost}))
"""


def planner_run(disable):
    env = dict(os.environ)
    env.pop("MABRRT_DISABLE_NUMBA", None)
    if disable:
        env["MABRRT_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", _RUN], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--no-planner", action="store_true", help="skip the end-to-end planner runs")
    args = p.parse_args(argv)
    if not USE_NUMBA:
        print("numba is disabled; both columns time the same Python code", file=sys.stderr)
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, fast, slow in cases(rng):
        t_fast, a = best_of(fast, args.repeat)
        t_slow, b = best_of(slow, args.repeat)
        for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            np.testing.assert_array_equal(x, y)
        print(f"{name:34s} {1e3 * t_fast:10.2f} {1e3 * t_slow:10.2f} {t_slow / t_fast:8.1f}")
    if not args.no_planner:
        fast, slow = planner_run(False), planner_run(True)
        assert fast["cost"] == slow["cost"]
        print(f"{'MAB-RRT, scenario D, K=1000':34s} {1e3 * fast['seconds']:10.0f} {1e3 * slow['seconds']:10.0f} "
              f"{slow['seconds'] / fast['seconds']:8.1f}")
        print("(planner row includes JIT compilation in the numba process)")


if __name__ == "__main__":
    main()
