"""Runtime checks for the step-size conditions behind the convergence results.

* ``check_theorem1`` / ``check_theorem2``: pointwise conditions on ``P_k``.
* ``monitor_theorem2_contraction`` / ``monitor_theorem3``: trajectory monitors.
* ``cwss_gain_matrix`` / ``verify_gain_inequality``: the construction showing a
  diagonal step can beat the exact scalar step, and a numeric certificate.
* ``condition_observer``: plugs the checks into :func:`cwss.bfgs.run` so the
  trace CSV gains the columns in :data:`MONITOR_COLUMNS`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .bfgs import CwssMatrix
from .numerics import as_vector, spectral_norm

__all__ = [
    "TheoryError",
    "Theorem1Params",
    "ConditionReport",
    "MONITOR_COLUMNS",
    "CONTRACTION_SLACK",
    "GAIN_SLACK",
    "check_theorem1",
    "check_theorem2",
    "condition_report",
    "condition_observer",
    "monitor_theorem2_contraction",
    "monitor_theorem3",
    "GainMatrix",
    "cwss_gain_matrix",
    "gain_radius",
    "exact_scalar_step",
    "verify_gain_inequality",
]

MONITOR_COLUMNS = ("t1_upper", "t1_lower", "t2_ok", "gamma_est")
CONTRACTION_SLACK = 1e-9
GAIN_SLACK = 1e-9


class TheoryError(ValueError):
    pass


@dataclass(frozen=True)
class Theorem1Params:
    alpha: float = 1.99
    beta: float = 1e-2
    L: float = 1.0

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")


@dataclass(frozen=True)
class ConditionReport:
    theorem1_upper_ok: bool
    theorem1_lower_ok: bool
    theorem2_ok: bool
    p_dev_frob: float
    gamma_est: float
    h_cond: float


def _theorem1(p, h_inv, grad, params: Theorem1Params, h_norm: float):
    grad = as_vector(grad, "grad")
    if not np.any(grad):
        raise TheoryError("condition undefined at a zero gradient")
    hg = h_inv @ grad
    upper = bool(p.max() <= params.alpha / (params.L * h_norm))
    lower = bool(1.0 / p.min() <= float(hg @ hg) / (params.beta * float(grad @ hg)))
    return upper, lower


def check_theorem1(P: CwssMatrix, h_inv, grad, params: Theorem1Params) -> Tuple[bool, bool]:
    """``(upper, lower)`` step-size bounds for the smooth case.

    upper: ``max p <= alpha / (L |H|_2)``.
    lower: ``1 / min p <= |H g|^2 / (beta g^T H g)``.
    """
    h_inv = np.asarray(h_inv, dtype=np.float64)
    return _theorem1(P.p, h_inv, grad, params, spectral_norm(h_inv))


def check_theorem2(P: CwssMatrix, gamma: float, L: float) -> bool:
    """Every entry in ``(0, 2 gamma / L]``."""
    if not (gamma > 0 and L > 0):
        raise TheoryError("gamma and L must be positive")
    p = np.asarray(P.p if isinstance(P, CwssMatrix) else P, dtype=np.float64)
    return bool(np.all(p > 0) and np.all(p <= 2.0 * gamma / L))


def condition_report(P: CwssMatrix, h_inv, grad, params: Theorem1Params) -> ConditionReport:
    """All monitored quantities for one state; ``gamma_est = 1 / |H|_2``."""
    h_inv = np.asarray(h_inv, dtype=np.float64)
    h_norm = spectral_norm(h_inv)
    upper, lower = _theorem1(P.p, h_inv, grad, params, h_norm)
    gamma = 1.0 / h_norm
    eig = np.linalg.eigvalsh(0.5 * (h_inv + h_inv.T))
    cond = float(eig[-1] / eig[0]) if eig[0] > 0 else float("inf")
    return ConditionReport(upper, lower, check_theorem2(P, gamma, params.L), P.deviation(), gamma, cond)


def condition_observer(L: float, alpha: float = 1.99, beta: float = 1e-2) -> Callable:
    """Observer for :func:`cwss.bfgs.run` filling :data:`MONITOR_COLUMNS`."""
    params = Theorem1Params(alpha, beta, L)

    def observe(state, P, d):
        r = condition_report(P, state.h_inv, state.grad, params)
        return {"t1_upper": r.theorem1_upper_ok, "t1_lower": r.theorem1_lower_ok,
                "t2_ok": r.theorem2_ok, "gamma_est": r.gamma_est}

    return observe


def monitor_theorem2_contraction(iterates: Sequence, x_star, slack: float = CONTRACTION_SLACK) -> List[bool]:
    """``|x_{k+1} - x*| <= |x_k - x*| + slack`` for each consecutive pair."""
    x_star = as_vector(x_star, "x_star")
    dist = [float(np.linalg.norm(np.asarray(x) - x_star)) for x in iterates]
    return [b <= a + slack for a, b in zip(dist, dist[1:])]


def monitor_theorem3(ps: Sequence) -> Tuple[np.ndarray, bool]:
    """Deviations ``|P_k - I|_F`` and whether the last quarter's mean is below the first's.

    Quarters hold ``max(1, N // 4)`` entries. A sequence that is identically
    zero at the end counts as a pass.
    """
    devs = np.array([float(np.linalg.norm(np.asarray(getattr(p, "p", p)) - 1.0)) for p in ps])
    if devs.size == 0:
        return devs, True
    q = max(1, devs.size // 4)
    first, last = devs[:q].mean(), devs[-q:].mean()
    return devs, bool(last < first or last == 0.0)


@dataclass(frozen=True)
class GainMatrix:
    p: np.ndarray
    valid: bool  # every entry positive, i.e. usable as a CwssMatrix


def cwss_gain_matrix(alpha_star: float, grad_trial, d, L: float, R: float, literal_sign: bool = False) -> GainMatrix:
    """Diagonal step that improves on the exact scalar step ``alpha_star``.

    ``grad_trial`` is the gradient at ``x - alpha_star d``. The entries are
    ``alpha_star + grad_trial_i d_i / (L R)``: one gradient step on ``P``
    (``df/dp_i = -grad_trial_i d_i``) starting from ``alpha_star I``.
    ``literal_sign=True`` flips the correction to ``-`` (an ascent step on
    ``P``), kept only to demonstrate that variant fails.
    """
    if not (L > 0 and R > 0):
        raise TheoryError("L and R must be positive")
    g = as_vector(grad_trial, "grad_trial")
    d = as_vector(d, "d")
    corr = g * d / (L * R)
    p = alpha_star - corr if literal_sign else alpha_star + corr
    return GainMatrix(p, bool(np.all(p > 0)))


def gain_radius(d, running_max_norm: float = 0.0) -> float:
    """``R`` used with :func:`cwss_gain_matrix`.

    ``1.1`` times the running max of ``|d|_2``, raised to ``max_i d_i^2``
    when that is larger: the inequality's smoothness step needs
    ``R >= d_i^2`` for every coordinate.
    """
    d = as_vector(d, "d")
    dn = float(np.linalg.norm(d))
    return max(1.1 * max(running_max_norm, dn), float(np.max(d * d)))


def exact_scalar_step(problem, x, d, tol: float = 1e-12, max_grow: int = 200, max_bisect: int = 500) -> float:
    """Minimizer of ``phi(a) = f(x - a d)`` over ``a >= 0`` by bisection on ``phi'``.

    ``phi'(a) = -grad(x - a d)^T d``. The bracket starts at ``[0, 1]`` and
    doubles until ``phi'`` turns non-negative; bisection stops once the
    bracket is narrower than ``tol``.
    """
    x = as_vector(x, "x")
    d = as_vector(d, "d")

    def dphi(a):
        v = -float(problem.grad(x - a * d) @ d)
        if not np.isfinite(v):
            raise TheoryError(f"non-finite directional derivative at alpha={a:g}")
        return v

    if not dphi(0.0) < 0:
        raise TheoryError("-d is not a descent direction")
    lo, hi = 0.0, 1.0
    for _ in range(max_grow):
        if dphi(hi) >= 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise TheoryError("could not bracket the line minimizer")
    for _ in range(max_bisect):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if dphi(mid) < 0:
            lo = mid
        else:
            hi = mid
    else:
        raise TheoryError("bisection did not reach the requested width")
    return 0.5 * (lo + hi)


def verify_gain_inequality(problem, x, h_inv, L: float, R: Optional[float] = None,
                           slack: float = GAIN_SLACK) -> Tuple[float, float, bool]:
    """Check ``f(x - P d) <= f(x - a* d) - |g~ * d|^2 / (2 L R)`` for the gain matrix ``P``.

    ``d = H grad f(x)``, ``a*`` is the exact scalar step and ``g~`` the
    gradient at ``x - a* d``. ``R`` defaults to ``gain_radius(d)`` and is
    raised to ``max_i d_i^2`` if given smaller. Returns ``(lhs, rhs, ok)``.
    """
    x = as_vector(x, "x")
    d = np.asarray(h_inv, dtype=np.float64) @ problem.grad(x)
    R = gain_radius(d) if R is None else max(float(R), float(np.max(d * d)))
    a_star = exact_scalar_step(problem, x, d)
    y = x - a_star * d
    g_trial = problem.grad(y)
    gain = cwss_gain_matrix(a_star, g_trial, d, L, R)
    lhs = float(problem.value(x - gain.p * d))
    gd = g_trial * d
    rhs = float(problem.value(y)) - float(gd @ gd) / (2.0 * L * R)
    return lhs, rhs, bool(lhs <= rhs + slack)
