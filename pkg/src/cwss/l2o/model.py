"""Coordinate-wise LSTM + MLP head emitting diagonal step sizes in (0, 2).

Every coordinate ``i`` is a row: the input ``(x_i, g_i, d_i)`` goes through one
shared LSTM cell step and a ``tanh`` MLP head to a scalar ``z_i``, and the step
size is ``2 * sigmoid(z_i)``. Rows are independent, so problems of any
dimension (or a stack of several problems) run through the same parameters.

Backpropagation covers a single cell step: the incoming hidden and cell
states are constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from scipy.special import expit

from ..bfgs import CwssMatrix

__all__ = [
    "L2OModel",
    "L2ORunState",
    "param_shapes",
    "INPUT_CLIP",
    "init_run_state",
    "l2o_forward",
    "l2o_backward",
    "meta_loss",
    "meta_loss_seed",
]

INPUT_CLIP = 10.0
# keeps 2*sigmoid(z) strictly inside (0, 2) in float64
LOGIT_CLIP = 30.0


def param_shapes(hd: int, hm: int) -> Dict[str, tuple]:
    return {
        "W": (4 * hd, 3),
        "U": (4 * hd, hd),
        "b": (4 * hd,),
        "W1": (hm, hd),
        "b1": (hm,),
        "w2": (hm,),
        "b2": (1,),
    }


LSTM_KEYS = ("W", "U", "b")
MLP_KEYS = ("W1", "b1", "w2", "b2")


@dataclass
class L2OModel:
    params: Dict[str, np.ndarray]
    hd: int = 20
    hm: int = 20

    def __post_init__(self):
        shapes = param_shapes(self.hd, self.hm)
        if set(self.params) != set(shapes):
            raise ValueError(f"expected parameters {sorted(shapes)}, got {sorted(self.params)}")
        for k, shape in shapes.items():
            arr = np.asarray(self.params[k], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"parameter {k} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {k} has non-finite entries")
            self.params[k] = arr

    @classmethod
    def init(cls, rng: np.random.Generator, hd: int = 20, hm: int = 20) -> "L2OModel":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; output bias zero."""
        k_lstm = 1.0 / np.sqrt(hd)
        k_head = 1.0 / np.sqrt(hm)
        shapes = param_shapes(hd, hm)
        params = {}
        for key in ("W", "U", "b"):
            params[key] = rng.uniform(-k_lstm, k_lstm, shapes[key])
        params["W1"] = rng.uniform(-k_lstm, k_lstm, shapes["W1"])
        params["b1"] = rng.uniform(-k_lstm, k_lstm, shapes["b1"])
        params["w2"] = rng.uniform(-k_head, k_head, shapes["w2"])
        params["b2"] = np.zeros(1)
        return cls(params, hd, hm)

    def copy(self) -> "L2OModel":
        return L2OModel({k: v.copy() for k, v in self.params.items()}, self.hd, self.hm)

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())


@dataclass
class L2ORunState:
    h: np.ndarray
    c: np.ndarray


def init_run_state(n: int, hd: int, rng: np.random.Generator = None, std: float = 0.1) -> L2ORunState:
    """Gaussian(0, std^2) hidden and cell states; zeros when ``rng`` is None."""
    if rng is None:
        return L2ORunState(np.zeros((n, hd)), np.zeros((n, hd)))
    return L2ORunState(rng.normal(0.0, std, (n, hd)), rng.normal(0.0, std, (n, hd)))


def l2o_forward(model: L2OModel, run_state: L2ORunState, x, grad, d) -> Tuple[CwssMatrix, L2ORunState, dict]:
    prm, hd = model.params, model.hd
    u = np.clip(np.stack([x, grad, d], axis=1), -INPUT_CLIP, INPUT_CLIP)
    if run_state.h.shape != (u.shape[0], hd):
        raise ValueError(f"run state has shape {run_state.h.shape}, expected {(u.shape[0], hd)}")
    pre = u @ prm["W"].T + run_state.h @ prm["U"].T + prm["b"]
    i_g = expit(pre[:, :hd])
    f_g = expit(pre[:, hd:2 * hd])
    g_g = np.tanh(pre[:, 2 * hd:3 * hd])
    o_g = expit(pre[:, 3 * hd:])
    c = f_g * run_state.c + i_g * g_g
    tc = np.tanh(c)
    h = o_g * tc
    a1 = np.tanh(h @ prm["W1"].T + prm["b1"])
    z_raw = a1 @ prm["w2"] + prm["b2"][0]
    z = np.clip(z_raw, -LOGIT_CLIP, LOGIT_CLIP)
    s = expit(z)
    p = 2.0 * s
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
        raise FloatingPointError("non-finite activation in L2O forward pass")
    tape = {
        "u": u, "h_prev": run_state.h, "c_prev": run_state.c,
        "i": i_g, "f": f_g, "g": g_g, "o": o_g, "c": c, "tc": tc, "h": h,
        "a1": a1, "s": s, "z_live": np.abs(z_raw) < LOGIT_CLIP,
    }
    return CwssMatrix(p), L2ORunState(h, c), tape


def meta_loss(f_next: float, P: CwssMatrix, lambda_reg: float) -> float:
    """``f(x_{k+1}) + lambda * |P - I|_F^2``."""
    dev = P.p - 1.0
    return float(f_next) + lambda_reg * float(dev @ dev)


def meta_loss_seed(d, grad_next, P: CwssMatrix, lambda_reg: float) -> np.ndarray:
    """d(meta loss)/dp_i through the step ``x_{k+1} = x - p * d``."""
    return -np.asarray(grad_next) * np.asarray(d) + 2.0 * lambda_reg * (P.p - 1.0)


def l2o_backward(model: L2OModel, tape: dict, x, d, grad_next, P: CwssMatrix,
                 lambda_reg: float, seed=None) -> Dict[str, np.ndarray]:
    """Gradient of the summed meta loss w.r.t. every parameter.

    ``seed`` overrides the per-row loss derivative ``d loss / d p_i``
    (used when rows from several problems are stacked with weights).
    """
    prm, hd = model.params, model.hd
    n_rows = tape["u"].shape[0]
    if seed is None:
        seed = meta_loss_seed(d, grad_next, P, lambda_reg)
    seed = np.asarray(seed, dtype=np.float64)
    if seed.shape != (n_rows,) or P.n != n_rows:
        raise ValueError(f"tape has {n_rows} rows, got seed {seed.shape} and P of size {P.n}")
    s = tape["s"]
    dz = seed * 2.0 * s * (1.0 - s) * tape["z_live"]

    a1 = tape["a1"]
    g = {"w2": a1.T @ dz, "b2": np.array([dz.sum()])}
    da1 = np.outer(dz, prm["w2"])
    dpre1 = da1 * (1.0 - a1 * a1)
    g["W1"] = dpre1.T @ tape["h"]
    g["b1"] = dpre1.sum(axis=0)
    dh = dpre1 @ prm["W1"]

    i_g, f_g, g_g, o_g, tc = tape["i"], tape["f"], tape["g"], tape["o"], tape["tc"]
    do = dh * tc
    dc = dh * o_g * (1.0 - tc * tc)
    dpre = np.empty((n_rows, 4 * hd))
    dpre[:, :hd] = dc * g_g * i_g * (1.0 - i_g)
    dpre[:, hd:2 * hd] = dc * tape["c_prev"] * f_g * (1.0 - f_g)
    dpre[:, 2 * hd:3 * hd] = dc * i_g * (1.0 - g_g * g_g)
    dpre[:, 3 * hd:] = do * o_g * (1.0 - o_g)
    g["W"] = dpre.T @ tape["u"]
    g["U"] = dpre.T @ tape["h_prev"]
    g["b"] = dpre.sum(axis=0)
    return g
