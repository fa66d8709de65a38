"""Step-size strategies: fixed scalar, Armijo backtracking, hypergradient descent on P.

A strategy is any callable ``strategy(problem, state, d) -> CwssMatrix`` where
``d = H_k grad f(x_k)`` is the vector the step subtracts after scaling.
Strategies with per-run memory also define ``reset(problem)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Protocol, Tuple

import numpy as np

from .bfgs import BfgsError, BfgsState, CwssMatrix

__all__ = [
    "StepStrategy",
    "LineSearchConfig",
    "HgdConfig",
    "LineSearchError",
    "backtracking_line_search",
    "hypergradient",
    "hgd_refine",
    "hgd_strategy",
    "FixedStep",
    "LineSearch",
    "Hgd",
]


class StepStrategy(Protocol):
    name: str

    def __call__(self, problem, state: BfgsState, d: np.ndarray) -> CwssMatrix: ...


class LineSearchError(BfgsError):
    pass


@dataclass(frozen=True)
class LineSearchConfig:
    alpha0: float = 1.0
    shrink: float = 0.8
    c1: float = 1e-4
    max_backtracks: int = 100

    def __post_init__(self):
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not 0 < self.c1 < 1:
            raise ValueError("c1 must lie in (0, 1)")


@dataclass(frozen=True)
class HgdConfig:
    eta: float = 1e-2
    inner_steps: int = 20
    clip_min: float = 1e-8

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")


def backtracking_line_search(problem, state: BfgsState, d, cfg: LineSearchConfig = LineSearchConfig()) -> CwssMatrix:
    """Largest ``alpha0 * shrink**j`` satisfying Armijo for the step ``x - alpha d``.

    Sufficient decrease reads ``f(x - a d) <= f(x) - c1 a g^T d``; ``g^T d``
    must be positive, i.e. ``-d`` is a descent direction.
    """
    slope = float(state.grad @ d)
    if not slope > 0:
        raise LineSearchError(f"-d is not a descent direction (g.d = {slope:g})")
    alpha = cfg.alpha0
    for _ in range(cfg.max_backtracks + 1):
        f_trial = problem.value(state.x - alpha * d)
        if np.isfinite(f_trial) and f_trial <= state.f - cfg.c1 * alpha * slope:
            return CwssMatrix.scalar(d.shape[0], alpha)
        alpha *= cfg.shrink
    raise LineSearchError(f"Armijo condition not met after {cfg.max_backtracks} backtracks")


def hypergradient(problem, x, d, P: CwssMatrix) -> np.ndarray:
    """Diagonal of d f(x - P d) / dP, i.e. ``-grad f(x - p*d) * d``."""
    with np.errstate(over="ignore", invalid="ignore"):
        trial = x - P.p * d
        if not np.all(np.isfinite(trial)):
            raise BfgsError("hypergradient trial point is non-finite")
        g = problem.grad(trial)
        if not np.all(np.isfinite(g)):
            raise BfgsError("gradient at hypergradient trial point is non-finite")
        hg = -g * d
    if not np.all(np.isfinite(hg)):
        raise BfgsError("hypergradient is non-finite")
    return hg


def hgd_refine(problem, x, d, cfg: HgdConfig = HgdConfig(),
               record: bool = False) -> Tuple[np.ndarray, Optional[List[float]]]:
    """Run the inner hypergradient loop from ``P = I``.

    Returns the final diagonal and, when ``record`` is set, the objective
    ``f(x - p_i * d)`` for ``i = 0 .. inner_steps``.
    """
    p = np.ones_like(d)
    phis = [problem.value(x - p * d)] if record else None
    for _ in range(cfg.inner_steps):
        # fresh trial-point gradient at the current p
        p = np.maximum(p - cfg.eta * hypergradient(problem, x, d, CwssMatrix(p)), cfg.clip_min)
        if record:
            phis.append(problem.value(x - p * d))
    return p, phis


def hgd_strategy(problem, state: BfgsState, d, cfg: HgdConfig = HgdConfig()) -> CwssMatrix:
    return CwssMatrix(hgd_refine(problem, state.x, d, cfg)[0])


class FixedStep:
    def __init__(self, alpha: float):
        if not alpha > 0:
            raise ValueError("fixed step must be positive")
        self.alpha = float(alpha)
        self.name = f"fixed:{alpha:g}"

    def __call__(self, problem, state, d):
        return CwssMatrix.scalar(d.shape[0], self.alpha)


class LineSearch:
    name = "ls"

    def __init__(self, cfg: LineSearchConfig = LineSearchConfig()):
        self.cfg = cfg

    def __call__(self, problem, state, d):
        return backtracking_line_search(problem, state, d, self.cfg)


class Hgd:
    name = "hgd"

    def __init__(self, cfg: HgdConfig = HgdConfig()):
        self.cfg = cfg

    def __call__(self, problem, state, d):
        return hgd_strategy(problem, state, d, self.cfg)
