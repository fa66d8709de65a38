"""Meta-training: inner BFGS rollouts driven by the model, one Adam step per inner iteration."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..bfgs import BfgsError, CwssMatrix, apply_step, default_x0, init_state, search_direction
from ..seeding import stream_rng
from .adam import AdamMoments, adam_step
from .model import L2OModel, L2ORunState, init_run_state, l2o_backward, l2o_forward, meta_loss, meta_loss_seed

__all__ = ["MetaConfig", "ProblemSampler", "LogRow", "TrainResult", "train", "write_training_log"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetaConfig:
    adam_lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch: int = 64
    total_updates: int = 200
    inner_K: int = 30
    lambda_reg: float = 1e-3
    grad_clip: float = 1.0
    grad_tol: float = 1e-10
    hidden_init_std: float = 0.1

    def __post_init__(self):
        for name in ("adam_lr", "adam_eps", "grad_clip", "grad_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.batch < 1 or self.inner_K < 1 or self.total_updates < 0:
            raise ValueError("batch and inner_K must be >= 1, total_updates >= 0")
        if self.lambda_reg < 0 or self.hidden_init_std < 0:
            raise ValueError("lambda_reg and hidden_init_std must be non-negative")


class ProblemSampler:
    """Deterministic batches drawn from an indexable collection of problems.

    Everything a draw needs (which instances, their starting points, the
    LSTM state initialisation) is a function of ``(seed, update, slot)``
    only, so training can resume mid-way and reproduce the same batches.
    """

    def __init__(self, problems: Sequence, seed: int):
        if len(problems) == 0:
            raise ValueError("no training problems")
        self.problems = problems
        self.seed = seed

    def draw(self, update: int, size: int):
        n_avail = len(self.problems)
        idx = stream_rng(self.seed, "batch", update).choice(n_avail, size, replace=n_avail < size)
        out = []
        for slot, i in enumerate(idx):
            p = self.problems[int(i)]
            x0 = default_x0(p.n, stream_rng(self.seed, "train_x0", update, slot))
            out.append((p, x0, stream_rng(self.seed, "train_runstate", update, slot)))
        return out


@dataclass(frozen=True)
class LogRow:
    update: int
    mean_meta_loss: float
    diverged_count: int


@dataclass
class TrainResult:
    model: L2OModel
    log: List[LogRow]
    moments: AdamMoments
    adam_t: int
    update_count: int


def _rollout_update(model, cfg, items, moments, t):
    states = [init_state(p, x0) for p, x0, _ in items]
    run_states = [init_run_state(p.n, model.hd, rng, cfg.hidden_init_std) for p, _, rng in items]
    alive = [True] * len(items)
    losses = []
    diverged = 0
    for _ in range(cfg.inner_K):
        live = [j for j, st in enumerate(states) if alive[j] and np.linalg.norm(st.grad) > cfg.grad_tol]
        if not live:
            break
        dirs = {j: search_direction(states[j]) for j in live}
        X = np.concatenate([states[j].x for j in live])
        G = np.concatenate([states[j].grad for j in live])
        D = np.concatenate([dirs[j] for j in live])
        rs = L2ORunState(np.concatenate([run_states[j].h for j in live]),
                         np.concatenate([run_states[j].c for j in live]))
        P, new_rs, tape = l2o_forward(model, rs, X, G, D)
        seed = np.zeros(X.shape[0])
        step_losses = []
        off = 0
        for j in live:
            n = states[j].x.shape[0]
            sl = slice(off, off + n)
            off += n
            Pj = CwssMatrix(P.p[sl])
            try:
                new = apply_step(states[j], Pj, items[j][0], dirs[j])
            except BfgsError:
                alive[j] = False
                diverged += 1
                continue
            states[j] = new
            run_states[j] = L2ORunState(new_rs.h[sl], new_rs.c[sl])
            seed[sl] = meta_loss_seed(dirs[j], new.grad, Pj, cfg.lambda_reg)
            step_losses.append(meta_loss(new.f, Pj, cfg.lambda_reg))
        if not step_losses:
            continue
        # batch mean over the problems that survived this step
        grads = l2o_backward(model, tape, X, D, None, P, cfg.lambda_reg, seed=seed / len(step_losses))
        t += 1
        model.params, moments = adam_step(model.params, grads, moments, cfg, t)
        losses.extend(step_losses)
    mean_loss = float(np.mean(losses)) if losses else math.nan
    return moments, t, mean_loss, diverged


def train(model: L2OModel, cfg: MetaConfig, sampler: ProblemSampler,
          moments: Optional[AdamMoments] = None, adam_t: int = 0, start_update: int = 0,
          on_update: Optional[Callable[[TrainResult], None]] = None) -> TrainResult:
    """Run outer updates ``start_update .. cfg.total_updates - 1`` in place on ``model``.

    ``on_update`` is called after every outer update with the current
    :class:`TrainResult` (the harness uses it for periodic checkpoints).
    """
    if moments is None:
        moments = AdamMoments.zeros_like(model.params)
    result = TrainResult(model, [], moments, adam_t, start_update)
    for u in range(start_update, cfg.total_updates):
        items = sampler.draw(u, cfg.batch)
        moments, adam_t, mean_loss, diverged = _rollout_update(model, cfg, items, moments, adam_t)
        result.log.append(LogRow(u, mean_loss, diverged))
        result.moments, result.adam_t, result.update_count = moments, adam_t, u + 1
        log.debug("update %d: meta loss %.6g, diverged %d", u, mean_loss, diverged)
        if on_update is not None:
            on_update(result)
    return result


def write_training_log(rows: Sequence[LogRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["update", "mean_meta_loss", "diverged_count"])
    for r in rows:
        w.writerow([r.update, "%.17g" % r.mean_meta_loss, r.diverged_count])
