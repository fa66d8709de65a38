"""Adam with bias correction and global-norm gradient clipping, over dicts of arrays."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

__all__ = ["AdamMoments", "clip_global_norm", "adam_step"]

Params = Dict[str, np.ndarray]


@dataclass
class AdamMoments:
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: Params) -> "AdamMoments":
        return cls({k: np.zeros_like(a) for k, a in params.items()},
                   {k: np.zeros_like(a) for k, a in params.items()})


def clip_global_norm(grads: Params, max_norm: float) -> Tuple[Params, float]:
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        return {k: g * scale for k, g in grads.items()}, total
    return grads, total


def adam_step(params: Params, grads: Params, moments: AdamMoments, cfg, t: int) -> Tuple[Params, AdamMoments]:
    """One Adam update at step ``t`` (1-based); returns new params and moments.

    ``cfg`` supplies ``adam_lr``, ``adam_beta1``, ``adam_beta2``, ``adam_eps``
    and ``grad_clip``.
    """
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    grads, _ = clip_global_norm(grads, cfg.grad_clip)
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new_params, m_new, v_new = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = b1 * moments.m[k] + (1.0 - b1) * g
        v = b2 * moments.v[k] + (1.0 - b2) * g * g
        new_params[k] = p - cfg.adam_lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
        m_new[k], v_new[k] = m, v
    return new_params, AdamMoments(m_new, v_new)
