"""Dense linear-algebra and numerical-testing helpers shared across the package.

Vectors and matrices are plain float64 numpy arrays; the helpers here add the
shape/finiteness checks the rest of the code relies on.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "NumericsError",
    "SpectralNormError",
    "as_vector",
    "as_matrix",
    "matvec",
    "spectral_norm",
    "finite_diff_grad",
    "cholesky_probe",
    "hex_array",
    "unhex_array",
]


class NumericsError(ValueError):
    """Bad shapes or non-finite values."""


class SpectralNormError(RuntimeError):
    """Power iteration did not reach the requested tolerance."""

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


def as_vector(v, name: str = "vector", allow_nonfinite: bool = False) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise NumericsError(f"{name} must be 1-D, got shape {arr.shape}")
    if not allow_nonfinite and not np.all(np.isfinite(arr)):
        raise NumericsError(f"{name} has non-finite entries")
    return arr


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise NumericsError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"{name} has non-finite entries")
    return arr


def matvec(m, v) -> np.ndarray:
    m = as_matrix(m)
    v = as_vector(v)
    if m.shape[1] != v.shape[0]:
        raise NumericsError(f"dimension mismatch: {m.shape} @ ({v.shape[0]},)")
    return m @ v


def spectral_norm(m, tol: float = 1e-10, max_iter: int = 10_000, seed: int = 0) -> float:
    """Largest absolute eigenvalue of the symmetric part of ``m``.

    Power iteration runs on ``S^T S`` (``S = (m + m^T)/2``) and the Rayleigh
    quotient is square-rooted at the end. Stops once the relative change of
    the estimate drops below ``tol``. If the iterate collapses to zero or half
    the budget passes without convergence, the iteration restarts once from
    a fresh random vector.
    """
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise NumericsError(f"spectral_norm needs a square matrix, got {m.shape}")
    s = 0.5 * (m + m.T)
    if not np.any(s):
        return 0.0
    a = s.T @ s
    rng = np.random.default_rng(seed)
    best = 0.0
    budget = [max_iter // 2, max_iter - max_iter // 2]
    for attempt, iters in enumerate(budget):
        v = rng.standard_normal(a.shape[0])
        v /= np.linalg.norm(v)
        est = 0.0
        for _ in range(iters):
            w = a @ v
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            new_est = float(v @ w)
            v = w / nw
            best = max(best, new_est)
            if est > 0.0 and abs(new_est - est) <= tol * new_est:
                return float(np.sqrt(new_est))
            est = new_est
    raise SpectralNormError(
        f"power iteration did not converge in {max_iter} iterations", float(np.sqrt(best))
    )


def finite_diff_grad(f: Callable[[np.ndarray], float], x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``."""
    if not h > 0:
        raise NumericsError("step h must be positive")
    x = as_vector(x, "x")
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp, fm = f(xp), f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericsError(f"non-finite function value perturbing coordinate {i}")
        out[i] = (fp - fm) / (2.0 * h)
    return out


def cholesky_probe(m) -> bool:
    """True when ``m`` admits a Cholesky factorisation (numerically SPD)."""
    try:
        np.linalg.cholesky(np.asarray(m, dtype=np.float64))
    except np.linalg.LinAlgError:
        return False
    return True


def hex_array(a) -> list:
    """Nested lists of hex-float strings; exact for every float64."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 0:
        return float(arr).hex()
    return [hex_array(row) for row in arr] if arr.ndim > 1 else [float(x).hex() for x in arr]


def unhex_array(data: Sequence | str, shape: tuple[int, ...] | None = None) -> np.ndarray:
    if isinstance(data, str):
        arr = np.array(float.fromhex(data))
    else:
        arr = np.array(_unhex_nested(data), dtype=np.float64)
    if shape is not None and arr.shape != tuple(shape):
        raise NumericsError(f"expected shape {tuple(shape)}, got {arr.shape}")
    return arr


def _unhex_nested(data):
    if isinstance(data, str):
        return float.fromhex(data)
    return [_unhex_nested(item) for item in data]
