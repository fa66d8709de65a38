"""Property suites run over the instances of a dataset.

Each suite returns a :class:`SuiteResult`; failures carry the instance seed
and enough state (hex-encoded) to reproduce the check by hand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..bfgs import (
    BfgsError,
    CwssMatrix,
    RunAborted,
    StopCriteria,
    apply_step,
    default_x0,
    init_state,
    run,
    search_direction,
)
from ..numerics import finite_diff_grad, hex_array
from ..problems import least_squares_problem
from ..seeding import stream_rng
from ..strategies import Hgd, LineSearch
from ..theory import (
    Theorem1Params,
    TheoryError,
    check_theorem1,
    check_theorem2,
    gain_radius,
    monitor_theorem2_contraction,
    verify_gain_inequality,
)

__all__ = [
    "SuiteResult",
    "Failure",
    "Theorem1Clamp",
    "relative_error",
    "gradient_suite",
    "gain_suite",
    "theorem1_suite",
    "theorem2_suite",
    "run_all",
    "GRAD_RTOL",
]

GRAD_RTOL = 1e-5


@dataclass
class Failure:
    suite: str
    seed: Optional[int]
    detail: str
    state: Dict[str, object] = field(default_factory=dict)


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    failures: List[Failure] = field(default_factory=list)
    notes: Dict[str, object] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def relative_error(a, b, floor: float = 1e-12) -> float:
    """``|a - b| / max(|a|, |b|, floor)`` in the 2-norm."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def _point(problem, rng) -> np.ndarray:
    return rng.standard_normal(problem.n)


def gradient_suite(problems: Sequence, seed: int = 0, points: int = 5, rtol: float = GRAD_RTOL) -> SuiteResult:
    res = SuiteResult("gradient")
    for i, p in enumerate(problems):
        rng = stream_rng(seed, "verify_grad", i)
        for _ in range(points):
            x = _point(p, rng)
            err = relative_error(p.grad(x), finite_diff_grad(p.value, x))
            res.checked += 1
            if not err < rtol:
                res.failures.append(Failure("gradient", p.seed, f"relative error {err:.3g} >= {rtol:g}",
                                            {"x": hex_array(x)}))
    return res


def sample_state(problem, rng, max_steps: int = 20):
    """A BFGS-LS state after a random number of steps from a unit-norm x0.

    Returns ``(state, running_max_d)``; stops early once the gradient is tiny.
    """
    st = init_state(problem, default_x0(problem.n, rng))
    ls = LineSearch()
    rmax = 0.0
    for _ in range(int(rng.integers(0, max_steps + 1))):
        if np.linalg.norm(st.grad) <= 1e-8:
            break
        d = search_direction(st)
        rmax = max(rmax, float(np.linalg.norm(d)))
        st = apply_step(st, ls(problem, st, d), problem, d)
    return st, rmax


def gain_suite(problems: Sequence, seed: int = 0, states: int = 1) -> SuiteResult:
    res = SuiteResult("gain")
    for i, p in enumerate(problems):
        rng = stream_rng(seed, "verify_gain", i)
        for _ in range(states):
            st, rmax = sample_state(p, rng)
            if np.linalg.norm(st.grad) <= 1e-8:
                continue
            d = st.h_inv @ st.grad
            try:
                lhs, rhs, ok = verify_gain_inequality(p, st.x, st.h_inv, p.lipschitz, gain_radius(d, rmax))
            except TheoryError as exc:
                lhs, rhs, ok = float("nan"), float("nan"), False
                detail = str(exc)
            else:
                detail = f"lhs {lhs!r} > rhs {rhs!r}"
            res.checked += 1
            if not ok:
                res.failures.append(Failure("gain", p.seed, detail, {"x": hex_array(st.x), "k": st.k}))
    return res


class Theorem1Clamp:
    """Line-search step clipped into the admissible band of the smooth-case conditions.

    Upper edge ``alpha / (L |H|_2)``; lower edge ``beta g^T H g / |H g|^2``.
    When the band is empty the upper edge wins, and the step will fail the
    lower check (the suite then excludes the run).
    """

    name = "t1clamp"

    def __init__(self, L: float, alpha: float = 1.99, beta: float = 1e-2):
        self.params = Theorem1Params(alpha, beta, L)
        self.ls = LineSearch()

    def __call__(self, problem, state, d):
        p = self.ls(problem, state, d).p
        h_norm = float(np.linalg.eigvalsh(0.5 * (state.h_inv + state.h_inv.T))[-1])
        hi = self.params.alpha / (self.params.L * h_norm)
        lo = self.params.beta * float(state.grad @ d) / float(d @ d)
        return CwssMatrix(np.minimum(np.maximum(p, lo), hi))


def theorem1_suite(problems: Sequence, seed: int = 0, grad_tol: float = 1e-8, max_iters: int = 2000,
                   min_rate: float = 0.95) -> SuiteResult:
    """Runs whose every step passes both conditions must reach ``grad_tol`` at rate >= ``min_rate``."""
    res = SuiteResult("theorem1")
    eligible = converged = 0
    for i, p in enumerate(problems):
        strat = Theorem1Clamp(p.lipschitz)
        flags = []

        def observe(state, P, d, strat=strat, flags=flags):
            flags.append(all(check_theorem1(P, state.h_inv, state.grad, strat.params)))

        x0 = default_x0(p.n, stream_rng(seed, "verify_t1", i))
        try:
            trace = run(p, x0, strat, StopCriteria(grad_tol, max_iters), observer=observe)
        except RunAborted as exc:
            res.failures.append(Failure("theorem1", p.seed, f"run aborted: {exc}", {"x0": hex_array(x0)}))
            continue
        if not all(flags):
            continue
        eligible += 1
        converged += trace[-1].grad_norm <= grad_tol
        res.checked += 1
    res.notes.update(eligible=eligible, converged=converged)
    if eligible and converged < min_rate * eligible:
        res.failures.append(Failure("theorem1", None, f"{converged}/{eligible} eligible runs converged, "
                                                      f"need {min_rate:.0%}"))
    return res


def convex_quadratic(seed: int, n: int = 20) -> "object":
    """``1/2 |A x - b|^2`` with square Gaussian ``A``: strongly convex, unique optimum."""
    rng = stream_rng(seed, "quadratic")
    while True:
        A = rng.standard_normal((n, n))
        if np.linalg.cond(A) < 1e3:
            break
    b = rng.standard_normal(n)
    return least_squares_problem(A, b, seed=seed, known_optimum=np.linalg.solve(A, b))


def exact_L(problem) -> float:
    A = problem.payload.A
    return float(np.linalg.eigvalsh(A.T @ A)[-1])


def exact_gamma(h_inv) -> float:
    return 1.0 / float(np.linalg.eigvalsh(0.5 * (h_inv + h_inv.T))[-1])


def contraction_steps(problem, strategy, x0, max_iters: int = 200, p_override: Optional[Callable] = None):
    """Run BFGS on a quadratic; list ``(k, theorem2_ok, contracted, state, P)`` per step.

    ``gamma`` is exact (eigenvalues of ``H_k``) and so is ``L``. If
    ``p_override(state, gamma, L)`` is given it replaces the strategy's P.
    """
    L = exact_L(problem)
    st = init_state(problem, x0)
    if hasattr(strategy, "reset"):
        strategy.reset(problem)
    out = []
    for _ in range(max_iters):
        if np.linalg.norm(st.grad) <= 1e-10:
            break
        d = search_direction(st)
        gamma = exact_gamma(st.h_inv)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                P = p_override(st, gamma, L) if p_override else strategy(problem, st, d)
                new = apply_step(st, P, problem, d)
        except (BfgsError, ValueError, ArithmeticError):
            break
        t2 = check_theorem2(P, gamma, L)
        ok = monitor_theorem2_contraction([st.x, new.x], problem.known_optimum)[0]
        out.append((st.k, t2, ok, st, P))
        st = new
    return out


def theorem2_suite(problems: Sequence, seed: int = 0, n: int = 20) -> SuiteResult:
    """Admissible steps must not move away from x* on strongly convex quadratics.

    Steps come from LS and HGD (checked only where they pass the
    convex-case condition) and from the largest admissible scalar step
    ``2 gamma / L``.
    """
    res = SuiteResult("theorem2")
    for i, p in enumerate(problems):
        q = convex_quadratic(p.seed if p.seed is not None else seed + i, n)
        x0 = default_x0(n, stream_rng(seed, "verify_t2", i))
        runs = [
            ("ls", LineSearch(), None),
            ("hgd", Hgd(), None),
            ("scalar_max", LineSearch(), lambda st, gamma, L: CwssMatrix.scalar(n, 2.0 * gamma / L)),
        ]
        for name, strat, override in runs:
            for k, t2, ok, st, P in contraction_steps(q, strat, x0, p_override=override):
                if not t2:
                    continue
                res.checked += 1
                if not ok:
                    res.failures.append(Failure("theorem2", q.seed, f"{name} step {k} moved away from x*",
                                                {"x": hex_array(st.x), "p": hex_array(P.p)}))
    return res


def run_all(problems: Sequence, seed: int = 0, max_instances: int = 8) -> List[SuiteResult]:
    sub = list(problems[:max_instances])
    return [
        gradient_suite(sub, seed),
        gain_suite(sub, seed),
        theorem1_suite(sub, seed),
        theorem2_suite(sub, seed),
    ]
