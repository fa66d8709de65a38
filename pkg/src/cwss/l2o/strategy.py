"""Step-size strategy backed by a trained model."""

from __future__ import annotations

import numpy as np

from .model import L2OModel, init_run_state, l2o_forward

__all__ = ["L2OStrategy"]


class L2OStrategy:
    """Runs the model once per BFGS iteration, carrying LSTM state across iterations.

    ``reset`` draws a fresh hidden/cell state from ``rng`` (zeros if ``rng``
    is None), so one instance serves one run at a time.
    """

    name = "l2o"

    def __init__(self, model: L2OModel, rng: np.random.Generator = None, hidden_init_std: float = 0.1):
        self.model = model
        self.rng = rng
        self.hidden_init_std = hidden_init_std
        self.run_state = None

    def reset(self, problem):
        self.run_state = init_run_state(problem.n, self.model.hd, self.rng, self.hidden_init_std)

    def __call__(self, problem, state, d):
        if self.run_state is None or self.run_state.h.shape[0] != d.shape[0]:
            self.reset(problem)
        P, self.run_state, _ = l2o_forward(self.model, self.run_state, state.x, state.grad, d)
        return P
