"""Benchmark runs: every strategy on every test instance from a shared x0."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..bfgs import RunAborted, StopCriteria, default_x0, run, write_trace_csv
from ..seeding import stream_rng
from ..theory import MONITOR_COLUMNS, condition_observer
from .config import ConfigError, ExperimentConfig, build_strategy, parse_strategy

__all__ = [
    "RunResult",
    "run_instance",
    "run_bench",
    "summarize",
    "quantile",
    "write_bench_outputs",
    "safe_name",
    "RUNS_COLUMNS",
]

RUNS_COLUMNS = ("strategy", "index", "seed", "status", "trace")


@dataclass(frozen=True)
class RunResult:
    strategy: str
    index: int
    seed: Optional[int]
    status: str  # converged | max_iters | diverged
    iterations: Optional[int]
    final_f: float
    final_grad_norm: float
    f_trace: tuple
    csv_text: str


def safe_name(strategy: str) -> str:
    return strategy.replace(":", "_")


def instance_x0(base_seed: int, index: int, n: int) -> np.ndarray:
    """Starting point shared by every strategy on test instance ``index``."""
    return default_x0(n, stream_rng(base_seed, "x0", index))


def run_instance(strategy: str, index: int, problem, base_seed: int, stop: StopCriteria,
                 model=None, monitor: bool = False, hidden_init_std: float = 0.1) -> RunResult:
    x0 = instance_x0(base_seed, index, problem.n)
    strat = build_strategy(strategy, model, stream_rng(base_seed, "bench_runstate", index), hidden_init_std)
    observer = condition_observer(problem.lipschitz) if monitor else None
    try:
        trace = run(problem, x0, strat, stop, observer=observer)
        last = trace[-1]
        converged = last.grad_norm <= stop.grad_tol
        status = "converged" if converged else "max_iters"
        if not (math.isfinite(last.f) and math.isfinite(last.grad_norm)):
            status = "diverged"
    except RunAborted as exc:
        trace = exc.trace
        status = "diverged"
    buf = io.StringIO()
    write_trace_csv(trace, buf, MONITOR_COLUMNS if monitor else ())
    last = trace[-1]
    return RunResult(
        strategy, index, problem.seed, status,
        last.k if status == "converged" else None,
        last.f, last.grad_norm, tuple(r.f for r in trace), buf.getvalue(),
    )


def _task(args):
    return run_instance(*args)


def run_bench(cfg: ExperimentConfig, problems: Sequence, model=None,
              strategies: Optional[Sequence[str]] = None, workers: Optional[int] = None) -> List[RunResult]:
    """All ``(strategy, instance)`` runs, sorted by (strategy order, instance index)."""
    strategies = tuple(strategies or cfg.strategies)
    for s in strategies:
        if parse_strategy(s)[0] == "l2o" and model is None:
            raise ConfigError("strategies: l2o requires a checkpoint (--checkpoint)")
    workers = workers or cfg.workers
    std = cfg.meta.hidden_init_std
    tasks = [
        (s, i, problems[i], cfg.seed, cfg.stop, model if parse_strategy(s)[0] == "l2o" else None, cfg.monitor, std)
        for s in strategies for i in range(len(problems))
    ]
    if workers <= 1:
        results = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    order = {s: j for j, s in enumerate(strategies)}
    results.sort(key=lambda r: (order[r.strategy], r.index))
    return results


def quantile(values: Sequence[float], q: float) -> float:
    """Linear-interpolation quantile (numpy's default); ``inf`` entries allowed."""
    v = sorted(values)
    if not v:
        return math.nan
    pos = q * (len(v) - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(v) - 1)
    t = pos - lo
    if t == 0.0 or v[lo] == v[hi]:
        return float(v[lo])
    if math.isinf(v[lo]) or math.isinf(v[hi]):
        return math.inf
    return float(v[lo] + (v[hi] - v[lo]) * t)


def _stats(values) -> dict:
    q1, med, q3 = quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75)
    iqr = q3 - q1 if math.isfinite(q3) and math.isfinite(q1) else math.inf
    return {"median": med, "q1": q1, "q3": q3, "iqr": iqr}


def _curve(traces: List[tuple]) -> dict:
    length = max(len(t) for t in traces)
    # finished runs hold their last value
    mat = np.array([list(t) + [t[-1]] * (length - len(t)) for t in traces], dtype=np.float64)
    with np.errstate(invalid="ignore", over="ignore"):
        return {
            "mean": [float(v) for v in mat.mean(axis=0)],
            "std": [float(v) for v in mat.std(axis=0)],
            "median": [float(v) for v in np.median(mat, axis=0)],
        }


def summarize(results: Sequence[RunResult], cfg: ExperimentConfig) -> dict:
    """Per-strategy statistics; unconverged runs count as infinitely many iterations."""
    by_strategy: Dict[str, List[RunResult]] = {}
    for r in results:
        by_strategy.setdefault(r.strategy, []).append(r)
    out = {}
    for s, rs in by_strategy.items():
        its = [float(r.iterations) if r.iterations is not None else math.inf for r in rs]
        out[s] = {
            "runs": len(rs),
            "converged": sum(r.status == "converged" for r in rs),
            "diverged": sum(r.status == "diverged" for r in rs),
            "iterations": _stats(its),
            "final_f": _stats([r.final_f for r in rs]),
            "final_grad_norm": _stats([r.final_grad_norm for r in rs]),
            "curve": _curve([r.f_trace for r in rs]),
        }
    return {
        "schema": 1,
        "config_hash": cfg.config_hash(),
        "family": cfg.family.value,
        "grad_tol": cfg.stop.grad_tol,
        "max_iters": cfg.stop.max_iters,
        "strategies": out,
    }


def _jsonable(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def summary_json(summary: dict) -> str:
    """Canonical text: non-finite numbers become ``null``, keys keep insertion order."""
    return json.dumps(_jsonable(summary), indent=1) + "\n"


def write_bench_outputs(results: Sequence[RunResult], summary: dict, out) -> Path:
    """Write traces, ``runs.csv``, ``summary.json`` and ``curves.svg`` under ``out``."""
    from .svg import render_curves

    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUNS_COLUMNS)
        for r in results:
            rel = f"traces/{safe_name(r.strategy)}/{r.index:06d}.csv"
            path = root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(r.csv_text)
            w.writerow([r.strategy, r.index, "" if r.seed is None else r.seed, r.status, rel])
    (root / "summary.json").write_text(summary_json(summary))
    (root / "curves.svg").write_text(render_curves(summary))
    return root / "summary.json"
