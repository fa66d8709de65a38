"""Objective families: sparse least squares, ridge logistic regression, log-sum-exp.

Every instance is an :class:`ObjectiveProblem` exposing ``value``/``grad`` plus
an analytic gradient-Lipschitz bound. Generators are deterministic in their
seed, and instances round-trip through JSON exactly (hex-float arrays).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .numerics import NumericsError, as_vector, hex_array, spectral_norm, unhex_array

__all__ = [
    "ProblemKind",
    "ProblemFormatError",
    "LeastSquaresPayload",
    "LogisticPayload",
    "LogSumExpPayload",
    "ObjectiveProblem",
    "least_squares_problem",
    "logistic_problem",
    "logsumexp_problem",
    "gen_least_squares",
    "gen_logistic",
    "gen_logsumexp",
    "generate",
    "problem_to_json",
    "problem_from_json",
    "save_problem",
    "load_problem",
    "SPARSITY",
    "DEFAULT_RHO",
]

SPARSITY = 0.9
DEFAULT_RHO = 1e-2
SCHEMA = 1


class ProblemKind(str, enum.Enum):
    LEAST_SQUARES = "least_squares"
    LOGISTIC = "logistic"
    LOGSUMEXP = "logsumexp"


class ProblemFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LeastSquaresPayload:
    A: np.ndarray
    b: np.ndarray

    def value(self, x):
        r = self.A @ x - self.b
        return 0.5 * float(r @ r)

    def grad(self, x):
        return self.A.T @ (self.A @ x - self.b)


@dataclass(frozen=True, eq=False)
class LogisticPayload:
    features: np.ndarray
    labels: np.ndarray
    rho: float

    def value(self, x):
        z = self.features @ x
        # -[b log h(z) + (1-b) log(1-h(z))] = log(1+e^z) - b z
        nll = np.mean(np.logaddexp(0.0, z) - self.labels * z)
        return float(nll) + self.rho * float(x @ x)

    def grad(self, x):
        z = self.features @ x
        m = self.features.shape[0]
        return self.features.T @ (expit(z) - self.labels) / m + 2.0 * self.rho * x


@dataclass(frozen=True, eq=False)
class LogSumExpPayload:
    a: np.ndarray
    b: np.ndarray

    def value(self, x):
        return float(logsumexp(self.a @ x - self.b))

    def grad(self, x):
        return self.a.T @ softmax(self.a @ x - self.b)


Payload = Union[LeastSquaresPayload, LogisticPayload, LogSumExpPayload]


@dataclass(frozen=True, eq=False)
class ObjectiveProblem:
    kind: ProblemKind
    n: int
    m: int
    payload: Payload
    lipschitz: float
    seed: Optional[int] = None
    known_optimum: Optional[np.ndarray] = None
    known_optimal_value: Optional[float] = None

    def _check(self, x) -> np.ndarray:
        x = as_vector(x, "x", allow_nonfinite=True)
        if x.shape[0] != self.n:
            raise NumericsError(f"x has length {x.shape[0]}, problem dimension is {self.n}")
        return x

    def value(self, x) -> float:
        return self.payload.value(self._check(x))

    def grad(self, x) -> np.ndarray:
        return self.payload.grad(self._check(x))

    __call__ = value


def least_squares_problem(A, b, seed=None, known_optimum=None) -> ObjectiveProblem:
    A = np.asarray(A, dtype=np.float64)
    b = as_vector(b, "b")
    m, n = A.shape
    if b.shape[0] != m:
        raise NumericsError(f"b has length {b.shape[0]}, expected {m}")
    L = spectral_norm(A.T @ A)
    if not L > 0:
        raise NumericsError("A is zero: the objective is constant")
    if known_optimum is None:
        # minimum-norm solution of the normal equations
        known_optimum = np.linalg.lstsq(A, b, rcond=None)[0]
    payload = LeastSquaresPayload(A, b)
    return ObjectiveProblem(
        ProblemKind.LEAST_SQUARES, n, m, payload, L, seed,
        known_optimum, payload.value(known_optimum),
    )


def logistic_problem(features, labels, rho=DEFAULT_RHO, seed=None) -> ObjectiveProblem:
    features = np.asarray(features, dtype=np.float64)
    labels = as_vector(labels, "labels")
    m, n = features.shape
    if labels.shape[0] != m:
        raise NumericsError(f"labels has length {labels.shape[0]}, expected {m}")
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise NumericsError("labels must be 0 or 1")
    if not rho > 0:
        raise NumericsError("rho must be positive")
    L = spectral_norm(features.T @ features) / (4.0 * m) + 2.0 * rho
    return ObjectiveProblem(
        ProblemKind.LOGISTIC, n, m, LogisticPayload(features, labels, float(rho)), L, seed
    )


def logsumexp_problem(a, b, seed=None) -> ObjectiveProblem:
    a = np.asarray(a, dtype=np.float64)
    b = as_vector(b, "b")
    m, d = a.shape
    if b.shape[0] != m:
        raise NumericsError(f"b has length {b.shape[0]}, expected {m}")
    # Hessian is A^T (diag(s) - s s^T) A; the middle factor has norm <= 1/2 and
    # x^T H x is a variance of a_i^T x under s, so it is also <= max |a_i|^2 |x|^2
    L = min(0.5 * spectral_norm(a.T @ a), float(np.max(np.sum(a * a, axis=1))))
    payload = LogSumExpPayload(a, b)
    x0 = np.zeros(d)
    return ObjectiveProblem(
        ProblemKind.LOGSUMEXP, d, m, payload, max(L, np.finfo(float).tiny), seed,
        x0, payload.value(x0),
    )


def gen_least_squares(m: int, n: int, seed: int) -> ObjectiveProblem:
    """Gaussian ``A`` (m x n) with exactly ``ceil(0.9 m n)`` entries zeroed, Gaussian ``b``."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    n_zero = math.ceil(SPARSITY * m * n)
    if n_zero >= m * n:
        raise ValueError(f"{m}x{n} is too small: sparsification would zero every entry of A")
    rng = np.random.default_rng(seed)
    while True:
        A = rng.standard_normal((m, n))
        A.flat[rng.choice(m * n, size=n_zero, replace=False)] = 0.0
        b = rng.standard_normal(m)
        if np.any(A.T @ A):
            return least_squares_problem(A, b, seed=seed)


def gen_logistic(m: int, n: int, rho: float = DEFAULT_RHO, seed: int = 0) -> ObjectiveProblem:
    """Gaussian features, labels from a random hyperplane thresholded at sigmoid 0.5."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((m, n))
    w_true = rng.standard_normal(n)
    labels = (expit(features @ w_true) >= 0.5).astype(np.float64)
    return logistic_problem(features, labels, rho, seed=seed)


def gen_logsumexp(m: int, d: int, seed: int) -> ObjectiveProblem:
    """Log-sum-exp recentred so that the origin is the minimiser.

    ``a_hat`` is uniform on [0, 1], ``b`` standard normal, and each row is
    shifted by the auxiliary gradient at zero: ``a_i = a_hat_i - grad f_hat(0)``.
    """
    if m < 1 or d < 1:
        raise ValueError("m and d must be >= 1")
    rng = np.random.default_rng(seed)
    a_hat = rng.uniform(0.0, 1.0, size=(m, d))
    b = rng.standard_normal(m)
    g0 = a_hat.T @ softmax(-b)
    return logsumexp_problem(a_hat - g0, b, seed=seed)


def generate(kind: Union[ProblemKind, str], dims: dict, seed: int) -> ObjectiveProblem:
    kind = ProblemKind(kind)
    if kind is ProblemKind.LEAST_SQUARES:
        return gen_least_squares(dims["m"], dims["n"], seed)
    if kind is ProblemKind.LOGISTIC:
        return gen_logistic(dims["m"], dims["n"], dims.get("rho", DEFAULT_RHO), seed)
    return gen_logsumexp(dims["m"], dims["d"], seed)


def problem_to_json(p: ObjectiveProblem) -> dict:
    out = {"schema": SCHEMA, "kind": p.kind.value, "n": p.n, "m": p.m, "seed": p.seed}
    pl = p.payload
    if isinstance(pl, LeastSquaresPayload):
        out["payload"] = {"A": hex_array(pl.A), "b": hex_array(pl.b)}
    elif isinstance(pl, LogisticPayload):
        out["payload"] = {
            "features": hex_array(pl.features),
            "labels": hex_array(pl.labels),
            "rho": float(pl.rho).hex(),
        }
    else:
        out["payload"] = {"a": hex_array(pl.a), "b": hex_array(pl.b)}
    out["lipschitz"] = float(p.lipschitz).hex()
    if p.known_optimum is not None:
        out["known_optimum"] = hex_array(p.known_optimum)
        out["known_optimal_value"] = float(p.known_optimal_value).hex()
    return out


def problem_from_json(data: dict) -> ObjectiveProblem:
    try:
        if data.get("schema") != SCHEMA:
            raise ProblemFormatError(f"unsupported schema {data.get('schema')!r}")
        kind = ProblemKind(data["kind"])
        n, m = int(data["n"]), int(data["m"])
        seed = data.get("seed")
        pl = data["payload"]
        if kind is ProblemKind.LEAST_SQUARES:
            payload = LeastSquaresPayload(unhex_array(pl["A"], (m, n)), unhex_array(pl["b"], (m,)))
        elif kind is ProblemKind.LOGISTIC:
            labels = unhex_array(pl["labels"], (m,))
            if not np.all((labels == 0.0) | (labels == 1.0)):
                raise ProblemFormatError("labels must be 0 or 1")
            payload = LogisticPayload(
                unhex_array(pl["features"], (m, n)), labels, float.fromhex(pl["rho"])
            )
        else:
            payload = LogSumExpPayload(unhex_array(pl["a"], (m, n)), unhex_array(pl["b"], (m,)))
        lipschitz = float.fromhex(data["lipschitz"])
        x_star = f_star = None
        if "known_optimum" in data:
            x_star = unhex_array(data["known_optimum"], (n,))
            f_star = float.fromhex(data["known_optimal_value"])
    except ProblemFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFormatError(f"malformed problem record: {exc}") from exc
    arrays = [v for v in vars(payload).values() if isinstance(v, np.ndarray)]
    if not all(np.all(np.isfinite(a)) for a in arrays) or not (lipschitz > 0 and math.isfinite(lipschitz)):
        raise ProblemFormatError("non-finite or invalid values in problem record")
    return ObjectiveProblem(kind, n, m, payload, lipschitz, seed, x_star, f_star)


def save_problem(p: ObjectiveProblem, path) -> None:
    Path(path).write_text(json.dumps(problem_to_json(p), separators=(",", ":")))


def load_problem(path) -> ObjectiveProblem:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProblemFormatError(f"{path}: not valid JSON ({exc})") from exc
    try:
        return problem_from_json(data)
    except ProblemFormatError as exc:
        raise ProblemFormatError(f"{path}: {exc}") from exc
