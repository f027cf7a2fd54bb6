"""Finite-difference oracles for the analytic lambda and policy gradients.

The numeric side only ever calls forward passes (``compute_weights``,
``unified_objective``, ``surrogate_objective``), never the analytic
gradient code it is checking.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lambda_learner import lambda_gradient
from .surrogate import ClipConfig, SurrogateBatch, surrogate_objective, unified_objective
from .toy import TabularPolicy
from .weighting import Scheme, WeightScheme, compute_weights

SCALE_R_CHOICES = (1 / 30, 1 / 15, 1 / 9)
DEFAULT_DELTA = 1e-4


def relative_error(analytic, numeric) -> np.ndarray:
    """``|a - n| / max(|a|, |n|)``, defined as 0 where both are exactly 0."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(a), np.abs(n))
    safe = np.where(denom > 0, denom, 1.0)
    return np.where(denom > 0, np.abs(a - n) / safe, 0.0)


def lambda_objective(losses, lengths, lam: float, scheme: WeightScheme) -> float:
    lengths = np.asarray(lengths)
    w = compute_weights(scheme, lengths, lam)
    return unified_objective(w, losses, int(lengths.sum()))


def finite_difference_lambda(losses, lengths, lam: float, scheme: WeightScheme, delta: float = DEFAULT_DELTA) -> float:
    hi = lambda_objective(losses, lengths, lam + delta, scheme)
    lo = lambda_objective(losses, lengths, lam - delta, scheme)
    return (hi - lo) / (2 * delta)


@dataclass(frozen=True)
class LambdaInstance:
    losses: np.ndarray
    lengths: np.ndarray
    lam: float
    scale_r: float


def random_lambda_instance(rng: np.random.Generator, min_group: int = 2, max_group: int = 8) -> LambdaInstance:
    G = int(rng.integers(min_group, max_group + 1))
    return LambdaInstance(
        losses=rng.normal(0.0, 3.0, size=G),
        lengths=rng.integers(1, 65, size=G),
        lam=float(rng.uniform(-3.0, 3.0)),
        scale_r=float(SCALE_R_CHOICES[rng.integers(len(SCALE_R_CHOICES))]),
    )


def lambda_gradient_pair(inst: LambdaInstance, delta: float = DEFAULT_DELTA) -> tuple[float, float]:
    """(analytic, central-difference) dJ/dlambda for one instance."""
    scheme = WeightScheme(Scheme.LAMBDA_GRPO, scale_r=inst.scale_r)
    w = compute_weights(scheme, inst.lengths, inst.lam)
    analytic = lambda_gradient(inst.losses, w.h, inst.lam, int(inst.lengths.sum()))
    numeric = finite_difference_lambda(inst.losses, inst.lengths, inst.lam, scheme, delta)
    return analytic, numeric


def check_lambda_gradient(trials: int, seed: int = 0, delta: float = DEFAULT_DELTA) -> float:
    """Max relative error of the analytic lambda gradient over random instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        a, n = lambda_gradient_pair(random_lambda_instance(rng), delta)
        worst = max(worst, float(relative_error(a, n)))
    return worst


def finite_difference_policy(
    batches: list[SurrogateBatch], clip: ClipConfig, policy: TabularPolicy, delta: float = DEFAULT_DELTA
) -> np.ndarray:
    """Central differences of the group-averaged objective w.r.t. every logit."""
    def objective(p):
        return np.mean([surrogate_objective(b, clip, p).objective for b in batches])

    flat = policy.logits.reshape(-1)
    grad = np.zeros_like(flat)
    probe = policy.copy()
    pflat = probe.logits.reshape(-1)
    for k in range(flat.size):
        pflat[k] = flat[k] + delta
        hi = objective(probe)
        pflat[k] = flat[k] - delta
        lo = objective(probe)
        pflat[k] = flat[k]
        grad[k] = (hi - lo) / (2 * delta)
    return grad.reshape(policy.table.shape)
