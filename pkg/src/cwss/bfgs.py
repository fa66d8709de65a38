"""BFGS with a diagonal coordinate-wise step-size matrix.

The iteration is ``x_{k+1} = x_k - p * (H_k g_k)`` where ``H_k`` approximates
the inverse Hessian and ``p`` is the diagonal of the step-size matrix chosen
by a strategy. ``H`` is maintained directly in inverse form.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from .numerics import as_vector

__all__ = [
    "BfgsError",
    "RunAborted",
    "CwssMatrix",
    "BfgsState",
    "StopCriteria",
    "ConvergenceRecord",
    "init_state",
    "search_direction",
    "update_inverse_hessian",
    "apply_step",
    "run",
    "default_x0",
    "TRACE_COLUMNS",
    "write_trace_csv",
    "read_trace_csv",
    "format_float",
]

CURVATURE_EPS = 1e-12
RESYMMETRIZE_EVERY = 50
TRACE_COLUMNS = ("k", "f", "grad_norm", "p_dev_frob", "skipped", "elapsed_ms")


class BfgsError(RuntimeError):
    pass


class RunAborted(BfgsError):
    """A run stopped early; ``trace`` holds the records produced so far."""

    def __init__(self, message: str, trace: List["ConvergenceRecord"]):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True, eq=False)
class CwssMatrix:
    """Diagonal step-size matrix stored as its diagonal ``p``."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 1:
            raise ValueError("step sizes must be a 1-D vector")
        if not np.all(np.isfinite(p)) or not np.all(p > 0):
            raise ValueError("step sizes must be finite and strictly positive")
        object.__setattr__(self, "p", p)

    @classmethod
    def identity(cls, n: int) -> "CwssMatrix":
        return cls(np.ones(n))

    @classmethod
    def scalar(cls, n: int, alpha: float) -> "CwssMatrix":
        return cls(np.full(n, float(alpha)))

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def deviation(self) -> float:
        """Frobenius norm of ``P - I``."""
        return float(np.linalg.norm(self.p - 1.0))


@dataclass
class BfgsState:
    x: np.ndarray
    h_inv: np.ndarray
    grad: np.ndarray
    f: float
    k: int = 0
    last_skip: bool = False


@dataclass(frozen=True)
class StopCriteria:
    grad_tol: float = 1e-10
    max_iters: int = 1000

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class ConvergenceRecord:
    k: int
    f: float
    grad_norm: float
    p_dev_frob: float
    skipped: bool
    elapsed_ms: float
    extras: dict = field(default_factory=dict)
    x: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None


def default_x0(n: int, rng: np.random.Generator) -> np.ndarray:
    """Standard Gaussian direction scaled to unit norm."""
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def init_state(problem, x0, h_inv=None) -> BfgsState:
    x0 = as_vector(x0, "x0").copy()
    if x0.shape[0] != problem.n:
        raise BfgsError(f"x0 has length {x0.shape[0]}, problem dimension is {problem.n}")
    f0 = problem.value(x0)
    g0 = problem.grad(x0)
    if not np.isfinite(f0) or not np.all(np.isfinite(g0)):
        raise BfgsError("objective or gradient is non-finite at x0")
    h = np.eye(problem.n) if h_inv is None else np.array(h_inv, dtype=np.float64)
    return BfgsState(x0, h, g0, f0)


def search_direction(state: BfgsState) -> np.ndarray:
    d = state.h_inv @ state.grad
    if not np.all(np.isfinite(d)):
        raise BfgsError("search direction is non-finite")
    return d


def update_inverse_hessian(h_inv, s, y, curvature_eps: float = CURVATURE_EPS):
    """Inverse BFGS update ``(I - r s y^T) H (I - r y s^T) + r s s^T`` with ``r = 1/y^T s``.

    Returns ``(H_new, skipped)``. The update is skipped, leaving ``H``
    untouched, unless ``y^T s > curvature_eps * |s| |y|``.
    """
    ys = float(y @ s)
    if not ys > curvature_eps * np.linalg.norm(s) * np.linalg.norm(y):
        return h_inv, True
    rho = 1.0 / ys
    hy = h_inv @ y
    # expanded rank-two form, O(n^2)
    h_new = (
        h_inv
        - rho * (np.outer(s, hy) + np.outer(hy, s))
        + (rho * rho * float(y @ hy) + rho) * np.outer(s, s)
    )
    return h_new, False


def apply_step(state: BfgsState, P: CwssMatrix, problem, d=None,
               curvature_eps: float = CURVATURE_EPS) -> BfgsState:
    if P.n != state.x.shape[0]:
        raise BfgsError(f"step-size matrix has size {P.n}, state has {state.x.shape[0]}")
    if d is None:
        d = search_direction(state)
    # overflow is reported as BfgsError below, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        x_new = state.x - P.p * d
        if not np.all(np.isfinite(x_new)):
            raise BfgsError("step produced a non-finite iterate")
        f_new = problem.value(x_new)
        g_new = problem.grad(x_new)
    if not np.isfinite(f_new) or not np.all(np.isfinite(g_new)):
        raise BfgsError("objective is non-finite at the new iterate")
    h_new, skipped = update_inverse_hessian(state.h_inv, x_new - state.x, g_new - state.grad, curvature_eps)
    k = state.k + 1
    if k % RESYMMETRIZE_EVERY == 0:
        h_new = 0.5 * (h_new + h_new.T)
    return BfgsState(x_new, h_new, g_new, f_new, k, skipped)


def run(problem, x0, strategy, stop: StopCriteria = StopCriteria(), h_inv0=None,
        observer: Optional[Callable] = None, keep_iterates: bool = False) -> List[ConvergenceRecord]:
    """Iterate until ``|grad| <= stop.grad_tol`` or ``stop.max_iters`` steps.

    ``strategy(problem, state, d)`` must return a :class:`CwssMatrix`; if it
    has a ``reset(problem)`` method, that is called first. ``observer``, when
    given, is called as ``observer(state, P, d)`` before each step and may
    return a dict that is stored in the record's ``extras``.
    """
    t0 = time.perf_counter()
    state = init_state(problem, x0, h_inv0)
    if hasattr(strategy, "reset"):
        strategy.reset(problem)

    def record(st, p, extras):
        return ConvergenceRecord(
            st.k, st.f, float(np.linalg.norm(st.grad)),
            0.0 if p is None else float(np.linalg.norm(p - 1.0)),
            st.last_skip, (time.perf_counter() - t0) * 1e3, extras,
            st.x.copy() if keep_iterates else None,
            None if p is None or not keep_iterates else p.copy(),
        )

    trace = [record(state, None, {})]
    while trace[-1].grad_norm > stop.grad_tol and state.k < stop.max_iters:
        try:
            d = search_direction(state)
            P = strategy(problem, state, d)
            extras = (observer(state, P, d) or {}) if observer is not None else {}
            state = apply_step(state, P, problem, d)
        except (BfgsError, ValueError, ArithmeticError) as exc:
            raise RunAborted(f"run aborted at k={state.k}: {exc}", trace) from exc
        trace[-1].extras.update(extras)
        trace.append(record(state, P.p, {}))
    return trace


def format_float(v: float) -> str:
    return "%.17g" % v


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format_float(float(v))


def write_trace_csv(records: Sequence[ConvergenceRecord], fh, extra_columns: Iterable[str] = ()) -> None:
    """One row per record. Extra columns are read from ``record.extras``."""
    extra_columns = tuple(extra_columns)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TRACE_COLUMNS + extra_columns)
    for r in records:
        row = [r.k, r.f, r.grad_norm, r.p_dev_frob, r.skipped, r.elapsed_ms]
        row += [r.extras.get(c, float("nan")) for c in extra_columns]
        w.writerow([_cell(v) for v in row])


def read_trace_csv(fh) -> List[ConvergenceRecord]:
    if isinstance(fh, str):
        fh = io.StringIO(fh)
    reader = csv.reader(fh)
    header = next(reader)
    if tuple(header[: len(TRACE_COLUMNS)]) != TRACE_COLUMNS:
        raise ValueError(f"unexpected trace header {header}")
    extra = header[len(TRACE_COLUMNS):]
    out = []
    for row in reader:
        k, f, gn, dev, sk, ms = row[: len(TRACE_COLUMNS)]
        # flag columns come back as 0.0/1.0
        extras = {name: float(cell) for name, cell in zip(extra, row[len(TRACE_COLUMNS):])}
        out.append(ConvergenceRecord(int(k), float(f), float(gn), float(dev), sk == "1", float(ms), extras))
    return out
