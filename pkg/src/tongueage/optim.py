"""Mean-squared-error loss and RMSprop parameter updates.

The update keeps one running average of squared gradients per parameter
tensor:

    v     <- decay * v + (1 - decay) * g^2
    theta <- theta - lr * g / (sqrt(v) + epsilon)

Note the classical denominator ``sqrt(v) + epsilon``, not ``sqrt(v + eps)``.
Defaults: lr 0.001, decay 0.9, epsilon 1e-7; the hyperparameters travel in
checkpoint manifests so runs can be reproduced.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .errors import ShapeError


def mse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean squared error and its gradient w.r.t. the predictions.

    loss = (1/B) * sum((target_i - pred_i)^2)
    grad = (2/B) * (pred - target)
    """
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    if pred.size < 1:
        raise ShapeError("loss needs at least one prediction")
    n = pred.shape[0] if pred.ndim > 0 else 1
    diff = pred - target
    # mean over the batch axis only: each row contributes its full squared error
    loss = float(np.sum(np.square(diff.astype(np.float64))) / n)
    grad = (diff * pred.dtype.type(2.0 / n)).astype(pred.dtype)
    return loss, grad


@dataclass
class RmsPropState:
    """Per-parameter squared-gradient accumulators plus hyperparameters."""

    learning_rate: float = 0.001
    decay: float = 0.9
    epsilon: float = 1e-7
    v: List[np.ndarray] = field(default_factory=list)

    def ensure(self, params: Sequence[np.ndarray]) -> None:
        if not self.v:
            self.v = [np.zeros_like(p) for p in params]
        elif len(self.v) != len(params) or any(
            a.shape != p.shape for a, p in zip(self.v, params)
        ):
            raise ShapeError("optimizer state does not mirror the parameter shapes")


def rmsprop_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: RmsPropState,
) -> Tuple[Sequence[np.ndarray], RmsPropState]:
    """Apply one RMSprop update in place; returns (params, state) for chaining."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} params vs {len(grads)} grads")
    state.ensure(params)
    lr = state.learning_rate
    rho = state.decay
    eps = state.epsilon
    for p, g, v in zip(params, grads, state.v):
        if p.shape != g.shape:
            raise ShapeError(f"param shape {p.shape} != grad shape {g.shape}")
        v *= rho
        v += (1.0 - rho) * np.square(g)
        p -= lr * g / (np.sqrt(v) + eps)
    return params, state
