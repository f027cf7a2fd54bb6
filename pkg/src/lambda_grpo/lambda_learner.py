"""The learnable length-preference exponent lambda and its SGD update."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .weighting import softmax

DEFAULT_LAMBDA_LR = 0.1


@dataclass(frozen=True)
class LambdaState:
    value: float = 0.0
    learning_rate: float = DEFAULT_LAMBDA_LR
    steps_taken: int = 0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError(f"lambda must be finite, got {self.value}")
        # lr == 0 pins lambda (used for neutrality checks)
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")


def lambda_gradient(losses, h, lam: float, total_tokens: int) -> float:
    """Analytic dJ/dlambda of the lambda-GRPO objective for one group.

    With ``d_i = h_i**lam * log h_i`` and ``s = softmax(h**lam)``::

        dJ/dlam = G / total_tokens * sum_i L_i * s_i * (d_i - sum_j s_j d_j)

    The per-response losses ``L_i`` are constants here; only the softmax
    weights depend on lambda.
    """
    losses = np.asarray(losses, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if losses.shape != h.shape or losses.ndim != 1 or losses.size == 0:
        raise ValueError("losses and h must be non-empty 1-D arrays of equal length")
    if np.any(h <= 0):
        raise ValueError("h must be strictly positive; clamp before calling")
    if total_tokens <= 0:
        raise ValueError("total_tokens must be positive")
    G = h.size
    # sum_i s_i * (d_i - dbar) is zero analytically; skip the rounding residue
    if G == 1 or np.all(losses == losses[0]):
        return 0.0
    log_h = np.log(h)
    g = np.exp(lam * log_h)
    s = softmax(g)
    d = g * log_h
    centered = d - np.dot(s, d)
    return float(G / total_tokens * np.dot(losses, s * centered))


def update_lambda(state: LambdaState, gradient: float) -> LambdaState:
    """One plain SGD ascent step on J (no momentum, no weight decay)."""
    gradient = float(gradient)
    if not math.isfinite(gradient):
        raise ValueError(f"refusing lambda update with non-finite gradient {gradient}")
    value = state.value + state.learning_rate * gradient
    if not math.isfinite(value):
        raise ValueError("lambda update overflowed")
    return replace(state, value=value, steps_taken=state.steps_taken + 1)
