"""Experiment runner: seeded repetitions, CSV/JSON records and SVG curves.

Usage::

    mabrrt plan --scenario A --planner ao --planner kfmanb --reps 30 --out results
    mabrrt regret --scenario A --reps 30 --out results
    mabrrt render --out results

Every scenario gets its own directory below ``--out``.  All files except
``timing.json`` are a pure function of the configuration and the base seed.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path as FsPath
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .bandit import Policy
from .planner import PlannerConfig, ao_rrt, mab_rrt
from .regret import STRATEGIES, RegretConfig, run_regret
from .world import BUNDLED, Scenario, ScenarioError, resolve_scenario

log = logging.getLogger("mabrrt")

Z95 = 1.96

PLANNERS = {
    "ao": PlannerConfig(goal_bias_only=True),
    "kfmanb": PlannerConfig(policy=Policy.KFMANB),
    "ucb1": PlannerConfig(policy=Policy.UCB1),
    "ts": PlannerConfig(policy=Policy.TS),
}

RUN_FIELDS = ["planner", "run_id", "seed", "iteration", "best_cost", "status"]
AGG_FIELDS = ["planner", "iteration", "mean_cost", "ci_lo", "ci_hi", "coverage"]
REGRET_FIELDS = ["run_id", "seed", "iteration", "strategy", "step_regret", "cumulative_regret"]
REGRET_AGG_FIELDS = ["strategy", "iteration", "mean", "ci_lo", "ci_hi"]


class ConfigError(ValueError):
    """Fatal experiment configuration problem."""


@dataclass
class ExperimentConfig:
    scenario_path: str
    planners: list = field(default_factory=lambda: [("ao", PLANNERS["ao"]), ("kfmanb", PLANNERS["kfmanb"])])
    repetitions: int = 30
    base_seed: int = 0
    iterations: int = 1000
    output_dir: str = "results"
    enable_regret: bool = False
    regret_batch_size: int = 50
    workers: int = 1

    def __post_init__(self):
        if self.repetitions < 1 or self.iterations < 1:
            raise ConfigError("repetitions and iterations must be >= 1")
        if self.regret_batch_size < 1:
            raise ConfigError("regret_batch_size must be >= 1")
        names = [n for n, _ in self.planners]
        if len(set(names)) != len(names):
            raise ConfigError("planner names must be unique")

    @property
    def seeds(self) -> list:
        return [self.base_seed + i for i in range(self.repetitions)]


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    return obj


def config_hash(config: ExperimentConfig) -> str:
    d = _jsonable(config)
    d.pop("output_dir")
    d.pop("workers")
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# bundle
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    planner: str
    run_id: int
    seed: int
    trace: list  # (iteration, best cost) at each improvement
    best_cost: Optional[float]
    failed: bool = False
    error: str = ""
    timing: dict = field(default_factory=dict)

    @property
    def solved(self) -> bool:
        return self.best_cost is not None


@dataclass
class Aggregate:
    """Per-iteration statistics; NaN where no run has a solution yet."""

    mean: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    coverage: np.ndarray


@dataclass
class ResultBundle:
    scenario: str
    iterations: int
    runs: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)  # planner -> Aggregate
    regret_runs: list = field(default_factory=list)  # (run_id, seed, {strategy: step array})
    regret_aggregate: dict = field(default_factory=dict)  # strategy -> Aggregate of cumulative regret
    timing: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def planners(self) -> list:
        return list(self.aggregate)


def carried_trace(trace, iterations: int) -> np.ndarray:
    """Best cost at every iteration 1..K (NaN before the first solution)."""
    out = np.full(iterations, np.nan)
    for k, c in trace:
        if 1 <= k <= iterations:
            out[k - 1:] = c
    return out


def mean_ci(M: np.ndarray) -> Aggregate:
    """Column statistics of an (n_runs, K) matrix, ignoring NaN entries."""
    K = M.shape[1] if M.ndim == 2 else 0
    mean = np.full(K, np.nan)
    lo = np.full(K, np.nan)
    hi = np.full(K, np.nan)
    cov = np.zeros(K, dtype=np.int64)
    for k in range(K):
        col = M[:, k]
        col = col[~np.isnan(col)]
        n = col.size
        cov[k] = n
        if n == 0:
            continue
        m = float(np.mean(col))
        half = Z95 * float(np.std(col, ddof=1)) / math.sqrt(n) if n > 1 else 0.0
        mean[k], lo[k], hi[k] = m, m - half, m + half
    return Aggregate(mean, lo, hi, cov)


def aggregate_runs(runs, iterations: int) -> Aggregate:
    ok = [r for r in runs if not r.failed]
    M = np.vstack([carried_trace(r.trace, iterations) for r in ok]) if ok else np.zeros((0, iterations))
    return mean_ci(M)


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


def _one_run(args):
    scenario, name, pconf, run_id, seed, iterations = args
    cfg = replace(pconf, rng_seed=seed, total_iterations=iterations)
    try:
        planner = ao_rrt if cfg.goal_bias_only else mab_rrt
        res = planner(scenario, cfg)
    except Exception as exc:  # a single broken run must not sink the experiment
        return RunRecord(name, run_id, seed, [], None, failed=True, error=f"{type(exc).__name__}: {exc}")
    timing = {
        "iteration_time_mean": res.iteration_time_mean,
        "iteration_time_max": res.iteration_time_max,
        "clustering_time_total": res.clustering_time_total,
        "clustering_time_max": res.clustering_time_max,
    }
    best = res.best_cost if res.solved else None
    return RunRecord(name, run_id, seed, [(int(k), float(c)) for k, c in res.cost_trace], best, timing=timing)


def _one_regret(args):
    scenario, pconf, rconf, run_id, seed, iterations = args
    try:
        series = run_regret(scenario, replace(pconf, total_iterations=iterations), rconf, seed=seed)
    except Exception as exc:
        return run_id, seed, None, f"{type(exc).__name__}: {exc}"
    return run_id, seed, series.step, ""


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))  # results come back in submission order


def load_experiment_scenario(config: ExperimentConfig) -> Scenario:
    try:
        return resolve_scenario(config.scenario_path)
    except (OSError, KeyError, ScenarioError) as exc:
        raise ConfigError(f"cannot load scenario {config.scenario_path!r}: {exc}") from exc


def run_experiment(config: ExperimentConfig, write: bool = True) -> ResultBundle:
    scenario = load_experiment_scenario(config)
    K = config.iterations
    seeds = config.seeds
    bundle = ResultBundle(scenario.name, K)
    failures = []
    for name, pconf in config.planners:
        t0 = time.perf_counter()
        jobs = [(scenario, name, pconf, i, s, K) for i, s in enumerate(seeds)]
        runs = _map(_one_run, jobs, config.workers)
        log.info("%s/%s: %d runs in %.1fs", scenario.name, name, len(runs), time.perf_counter() - t0)
        bundle.runs.extend(runs)
        bundle.aggregate[name] = aggregate_runs(runs, K)
        ok = [r for r in runs if not r.failed]
        failures += [{"planner": name, "seed": r.seed, "error": r.error} for r in runs if r.failed]
        bundle.timing[name] = {
            key: float(np.mean([r.timing[key] for r in ok])) if ok else None
            for key in ("iteration_time_mean", "iteration_time_max", "clustering_time_total",
                        "clustering_time_max")
        }
    if config.enable_regret:
        pconf = dict(config.planners).get("kfmanb", PLANNERS["kfmanb"])
        rconf = RegretConfig(batch_size=config.regret_batch_size)
        jobs = [(scenario, pconf, rconf, i, s, K) for i, s in enumerate(seeds)]
        t0 = time.perf_counter()
        for run_id, seed, step, err in _map(_one_regret, jobs, config.workers):
            if step is None:
                failures.append({"planner": "regret", "seed": seed, "error": err})
            else:
                bundle.regret_runs.append((run_id, seed, step))
        bundle.timing["regret_total_seconds"] = time.perf_counter() - t0
        bundle.regret_aggregate = aggregate_regret(bundle.regret_runs, K)
    bundle.provenance = {
        "scenario": scenario.name,
        "scenario_path": str(config.scenario_path),
        "config_hash": config_hash(config),
        "config": _jsonable(replace(config, output_dir="", workers=1)),
        "seeds": seeds,
        "version": __version__,
        "failures": failures,
    }
    if write:
        out = FsPath(config.output_dir) / scenario.name
        emit_records(bundle, out)
        render_curves(bundle, out)
    return bundle


def aggregate_regret(regret_runs, iterations: int) -> dict:
    out = {}
    for s in STRATEGIES:
        if regret_runs:
            M = np.vstack([np.cumsum(step[s]) for _, _, step in regret_runs])
        else:
            M = np.zeros((0, iterations))
        out[s] = mean_ci(M)
    return out


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------


def fmt(x) -> str:
    """Shortest round-trip text; empty for missing values."""
    if x is None:
        return ""
    x = float(x)
    if not math.isfinite(x):
        return ""
    return repr(x)


def _parse(s: str) -> float:
    return float(s) if s != "" else math.nan


def _writer(path: FsPath, header):
    fh = open(path, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    return fh, w


def emit_records(bundle: ResultBundle, output_dir) -> list:
    out = FsPath(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    K = bundle.iterations

    fh, w = _writer(out / "runs.csv", RUN_FIELDS)
    with fh:
        for r in bundle.runs:
            if r.failed:
                w.writerow([r.planner, r.run_id, r.seed, K, "", "failed"])
                continue
            for k, c in r.trace:
                w.writerow([r.planner, r.run_id, r.seed, k, fmt(c), "improved"])
            if r.solved:
                w.writerow([r.planner, r.run_id, r.seed, K, fmt(r.best_cost), "final"])
            else:
                w.writerow([r.planner, r.run_id, r.seed, K, "", "unsolved"])
    written.append(out / "runs.csv")

    fh, w = _writer(out / "aggregate.csv", AGG_FIELDS)
    with fh:
        for name, agg in bundle.aggregate.items():
            for k in range(agg.mean.shape[0]):
                w.writerow([name, k + 1, fmt(agg.mean[k]), fmt(agg.ci_lo[k]), fmt(agg.ci_hi[k]),
                            int(agg.coverage[k])])
    written.append(out / "aggregate.csv")

    fh, w = _writer(out / "regret.csv", REGRET_FIELDS)
    with fh:
        for run_id, seed, step in bundle.regret_runs:
            cum = {s: np.cumsum(step[s]) for s in STRATEGIES}
            for k in range(len(step[STRATEGIES[0]])):
                for s in STRATEGIES:
                    w.writerow([run_id, seed, k + 1, s, fmt(step[s][k]), fmt(cum[s][k])])
    written.append(out / "regret.csv")

    fh, w = _writer(out / "regret_aggregate.csv", REGRET_AGG_FIELDS)
    with fh:
        for s, agg in bundle.regret_aggregate.items():
            for k in range(agg.mean.shape[0]):
                w.writerow([s, k + 1, fmt(agg.mean[k]), fmt(agg.ci_lo[k]), fmt(agg.ci_hi[k])])
    written.append(out / "regret_aggregate.csv")

    with open(out / "meta.json", "w") as fh:
        json.dump(bundle.provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(out / "meta.json")
    # wall-clock numbers are the only non-reproducible output, so they live apart
    with open(out / "timing.json", "w") as fh:
        json.dump(bundle.timing, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(out / "timing.json")
    return written


def read_aggregate(path) -> dict:
    """planner -> Aggregate, parsed back from ``aggregate.csv``."""
    rows: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(row["planner"], []).append(row)
    out = {}
    for name, rs in rows.items():
        rs.sort(key=lambda r: int(r["iteration"]))
        out[name] = Aggregate(
            np.array([_parse(r["mean_cost"]) for r in rs]),
            np.array([_parse(r["ci_lo"]) for r in rs]),
            np.array([_parse(r["ci_hi"]) for r in rs]),
            np.array([int(r["coverage"]) for r in rs], dtype=np.int64),
        )
    return out


def read_regret_aggregate(path) -> dict:
    rows: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(row["strategy"], []).append(row)
    out = {}
    for s, rs in rows.items():
        rs.sort(key=lambda r: int(r["iteration"]))
        mean = np.array([_parse(r["mean"]) for r in rs])
        out[s] = Aggregate(mean, np.array([_parse(r["ci_lo"]) for r in rs]),
                           np.array([_parse(r["ci_hi"]) for r in rs]), np.zeros(len(rs), dtype=np.int64))
    return out


def load_bundle(directory) -> ResultBundle:
    """Aggregates and provenance of a scenario directory (enough for rendering)."""
    d = FsPath(directory)
    meta = json.loads((d / "meta.json").read_text()) if (d / "meta.json").exists() else {}
    agg = read_aggregate(d / "aggregate.csv") if (d / "aggregate.csv").exists() else {}
    reg = read_regret_aggregate(d / "regret_aggregate.csv") if (d / "regret_aggregate.csv").exists() else {}
    K = max([a.mean.shape[0] for a in [*agg.values(), *reg.values()]], default=0)
    return ResultBundle(meta.get("scenario", d.name), K, aggregate=agg, regret_aggregate=reg, provenance=meta)


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

LINE_STYLES = ["-", "--", "-.", ":", (0, (5, 1, 1, 1, 1, 1))]


def _plot(series: dict, title: str, ylabel: str, path: FsPath):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "mabrrt", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for i, (name, agg) in enumerate(series.items()):
            x = np.arange(1, agg.mean.shape[0] + 1)
            line, = ax.plot(x, agg.mean, linestyle=LINE_STYLES[i % len(LINE_STYLES)], label=name)
            ax.fill_between(x, agg.ci_lo, agg.ci_hi, color=line.get_color(), alpha=0.2, linewidth=0)
        ax.set_xlabel("iteration")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def render_curves(bundle: ResultBundle, output_dir) -> list:
    """``cost.svg`` and (with regret data) ``regret.svg`` in ``output_dir``."""
    out = FsPath(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if bundle.aggregate:
        p = out / "cost.svg"
        _plot(bundle.aggregate, f"{bundle.scenario}: best cost", "best cost", p)
        written.append(p)
    if bundle.regret_aggregate and any(a.mean.size for a in bundle.regret_aggregate.values()):
        p = out / "regret.svg"
        _plot(bundle.regret_aggregate, f"{bundle.scenario}: cumulative regret", "cumulative regret", p)
        written.append(p)
    return written


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def _planner_overrides(base: PlannerConfig, overrides: dict) -> PlannerConfig:
    try:
        return replace(base, **overrides)
    except TypeError as exc:
        raise ConfigError(f"bad planner option: {exc}") from exc


def experiment_from_args(args, scenario: str, regret: bool) -> ExperimentConfig:
    doc = {}
    if args.config:
        try:
            doc = yaml.safe_load(FsPath(args.config).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read experiment config: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("experiment config must be a mapping")
    names = getattr(args, "planner", None) or doc.get("planners") or ["ao", "kfmanb"]
    overrides = doc.get("planner_options") or {}
    planners = []
    for n in names:
        if n not in PLANNERS:
            raise ConfigError(f"unknown planner {n!r}; choose from {sorted(PLANNERS)}")
        planners.append((n, _planner_overrides(PLANNERS[n], overrides.get(n) or overrides.get("all") or {})))
    pick = lambda flag, key, default: flag if flag is not None else doc.get(key, default)  # noqa: E731
    return ExperimentConfig(
        scenario_path=scenario,
        planners=[] if regret else planners,
        repetitions=int(pick(args.reps, "repetitions", 30)),
        base_seed=int(pick(args.seed, "base_seed", 0)),
        iterations=int(pick(args.iters, "iterations", 1000)),
        output_dir=args.out,
        enable_regret=regret,
        regret_batch_size=int(pick(getattr(args, "batch", None), "regret_batch_size", 50)),
        workers=int(args.workers),
    )


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mabrrt", description="MAB-RRT planning experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", action="append",
                        help="bundled name (A..E) or YAML path; repeatable (default: all bundled)")
        sp.add_argument("--seed", type=int, default=None, help="base seed (run i uses seed + i)")
        sp.add_argument("--reps", type=int, default=None, help="repetitions per planner")
        sp.add_argument("--iters", type=int, default=None, help="iterations K per run")
        sp.add_argument("--out", default="results", help="output directory")
        sp.add_argument("--config", default=None, help="experiment YAML")
        sp.add_argument("--workers", type=int, default=1, help="process pool size")

    sp = sub.add_parser("plan", help="run planners and write cost records and figures")
    common(sp)
    sp.add_argument("--planner", action="append", choices=sorted(PLANNERS),
                    help="repeatable (default: ao and kfmanb)")
    sp = sub.add_parser("regret", help="run the regret harness")
    common(sp)
    sp.add_argument("--batch", type=int, default=None, help="batch size per arm")
    sp = sub.add_parser("render", help="redraw figures from existing CSVs")
    sp.add_argument("--out", default="results")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "render":
            root = FsPath(args.out)
            dirs = sorted(p.parent for p in root.glob("*/aggregate.csv"))
            if not dirs:
                raise ConfigError(f"no results below {root}")
            for d in dirs:
                for f in render_curves(load_bundle(d), d):
                    print(f)
            return 0
        scenarios = args.scenario or list(BUNDLED)
        configs = [experiment_from_args(args, s, args.command == "regret") for s in scenarios]
        for cfg in configs:
            bundle = run_experiment(cfg)
            out = FsPath(cfg.output_dir) / bundle.scenario
            print(out)
            for name, agg in bundle.aggregate.items():
                print(f"  {name}: final mean cost {fmt(agg.mean[-1]) or 'n/a'} "
                      f"({int(agg.coverage[-1])}/{cfg.repetitions} solved)")
            for s, agg in bundle.regret_aggregate.items():
                print(f"  {s}: mean cumulative regret {fmt(agg.mean[-1]) or 'n/a'}")
            if bundle.provenance["failures"]:
                print(f"  {len(bundle.provenance['failures'])} failed runs (see meta.json)")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
