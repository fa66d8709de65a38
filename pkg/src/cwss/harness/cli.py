"""Command line: ``cwss generate|train|bench|verify``.

Exit codes: 0 success, 1 validation error, 2 property-suite failure,
3 runtime or IO error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from ..l2o.adam import AdamMoments
from ..l2o.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from ..l2o.model import L2OModel
from ..l2o.train import LogRow, ProblemSampler, train, write_training_log
from ..problems import ProblemFormatError
from ..seeding import stream_rng
from .bench import run_bench, summarize, write_bench_outputs
from .config import ConfigError, ExperimentConfig, load_config
from .dataset import DatasetError, generate_dataset, load_dataset
from .verify import run_all

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_VALIDATION", "EXIT_PROPERTY", "EXIT_RUNTIME"]

EXIT_OK, EXIT_VALIDATION, EXIT_PROPERTY, EXIT_RUNTIME = 0, 1, 2, 3
CHECKPOINT_EVERY = 25

log = logging.getLogger("cwss")


class PropertyFailure(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cwss", description="BFGS with coordinate-wise step sizes")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="JSON config file (overlays the preset)")
        p.add_argument("--preset", choices=("desk", "paper"), help="base preset (default: desk)")
        p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        if data:
            p.add_argument("--data", required=True, help="dataset directory written by 'generate'")

    g = sub.add_parser("generate", help="write a dataset of problem instances")
    common(g, data=False)

    t = sub.add_parser("train", help="meta-train the L2O model on the train split")
    common(t)
    t.add_argument("--checkpoint", help="checkpoint path (default: <out>/checkpoint.json)")
    t.add_argument("--resume", action="store_true", help="continue from --checkpoint if it exists")

    b = sub.add_parser("bench", help="run strategies on the test split")
    common(b)
    b.add_argument("--strategy", action="append", help="ls | hgd | l2o | fixed:<alpha> (repeatable)")
    b.add_argument("--checkpoint", help="trained model, required for l2o")
    b.add_argument("--workers", type=int, help="parallel worker processes")
    b.add_argument("--monitor", action="store_true", help="add condition-monitor columns to traces")

    v = sub.add_parser("verify", help="run the property suites over a dataset")
    common(v)
    v.add_argument("--max-instances", type=int, default=8)
    return ap


def _overrides(args) -> dict:
    o = {}
    if args.seed is not None:
        o["seed"] = args.seed
    if getattr(args, "strategy", None):
        o["strategies"] = list(args.strategy)
    if getattr(args, "workers", None) is not None:
        o["workers"] = args.workers
    if getattr(args, "monitor", False):
        o["monitor"] = True
    return o


def _resolve(args, dataset=None) -> ExperimentConfig:
    if dataset is not None and args.config is None and args.preset is None:
        base = dataset.config
        return ExperimentConfig.from_dict(_overrides(args), base) if _overrides(args) else base
    cfg = load_config(args.config, args.preset, _overrides(args))
    if dataset is not None:
        dcfg = dataset.config
        if cfg.family != dcfg.family or cfg.dims != dcfg.dims:
            raise ConfigError(f"family/dims: config ({cfg.family.value} {cfg.dims}) does not match "
                              f"the dataset ({dcfg.family.value} {dcfg.dims})")
    return cfg


def _out(args, default) -> Path:
    p = Path(args.out) if args.out else Path(default)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_generate(args) -> int:
    if not args.out:
        raise ConfigError("--out: required for generate")
    cfg = _resolve(args)
    path = generate_dataset(cfg, args.out)
    log.info("wrote %d instances, manifest %s", cfg.n_train + cfg.n_test, path)
    print(path)
    return EXIT_OK


def _read_log(path: Path, before: int) -> List[LogRow]:
    if not path.exists():
        return []
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            if int(r["update"]) < before:
                rows.append(LogRow(int(r["update"]), float(r["mean_meta_loss"]), int(r["diverged_count"])))
    return rows


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    cfg = _resolve(args, ds)
    if len(ds.train) == 0:
        raise DatasetError(f"{args.data}: no instances in the train split")
    out = _out(args, args.data)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.json"
    log_path = out / "training_log.csv"
    model, moments, adam_t, start = None, None, 0, 0
    if args.resume and ckpt.exists():
        model, moments, adam_t, start = load_checkpoint(ckpt)
        log.info("resuming from %s at update %d", ckpt, start)
    if model is None:
        model = L2OModel.init(stream_rng(cfg.seed, "model_init"))
        moments = AdamMoments.zeros_like(model.params)
    history = _read_log(log_path, start) if start else []

    def on_update(res):
        if res.update_count % CHECKPOINT_EVERY == 0:
            save_checkpoint(ckpt, res.model, res.moments, res.adam_t, res.update_count)
            with open(log_path, "w", newline="") as fh:
                write_training_log(history + res.log, fh)
        log.info("update %d/%d meta loss %.6g diverged %d", res.update_count, cfg.meta.total_updates,
                 res.log[-1].mean_meta_loss, res.log[-1].diverged_count)

    res = train(model, cfg.meta, ProblemSampler(ds.train, cfg.seed), moments, adam_t, start, on_update)
    save_checkpoint(ckpt, res.model, res.moments, res.adam_t, max(res.update_count, start))
    with open(log_path, "w", newline="") as fh:
        write_training_log(history + res.log, fh)
    print(ckpt)
    return EXIT_OK


def cmd_bench(args) -> int:
    ds = load_dataset(args.data)
    cfg = _resolve(args, ds)
    model = None
    if "l2o" in cfg.strategies:
        if not args.checkpoint:
            raise ConfigError("--checkpoint: required when benchmarking l2o")
        model = load_checkpoint(args.checkpoint)[0]
    test = ds.test[:]  # load and validate everything before running
    out = _out(args, Path(args.data) / "bench")
    results = run_bench(cfg, test, model)
    path = write_bench_outputs(results, summarize(results, cfg), out)
    print(path)
    return EXIT_OK


def cmd_verify(args) -> int:
    ds = load_dataset(args.data)
    cfg = _resolve(args, ds)
    problems = (ds.test[:] + ds.train[:]) if args.max_instances is None else \
        (ds.test[:] + ds.train[:])[: args.max_instances]
    suites = run_all(problems, cfg.seed, max_instances=len(problems))
    report = {
        "suites": [
            {"name": s.name, "checked": s.checked, "ok": s.ok, "notes": s.notes,
             "failures": [vars(f) for f in s.failures]}
            for s in suites
        ]
    }
    for s in suites:
        print(f"{s.name}: {'ok' if s.ok else 'FAIL'} ({s.checked} checked, {len(s.failures)} failures)")
        for f in s.failures:
            print(f"  seed {f.seed}: {f.detail}")
    if args.out:
        (_out(args, args.out) / "verify_report.json").write_text(json.dumps(report, indent=1) + "\n")
    if not all(s.ok for s in suites):
        raise PropertyFailure("property suite failure")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "bench": cmd_bench, "verify": cmd_verify}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DatasetError, ProblemFormatError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PropertyFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except Exception as exc:  # noqa: BLE001 - anything else is a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
