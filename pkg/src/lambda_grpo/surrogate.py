"""Token-level clipped surrogate, unified objective and its policy gradient.

All objectives here are to be *maximized*.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .group import RolloutGroup
from .toy import TabularPolicy, log_softmax
from .weighting import WeightVector

DEFAULT_EPS = 0.2


@dataclass(frozen=True)
class ClipConfig:
    eps_low: float = DEFAULT_EPS
    eps_high: float = DEFAULT_EPS
    kl_coeff: float = 0.0

    def __post_init__(self):
        if not 0 < self.eps_low < 1:
            raise ValueError(f"eps_low must lie in (0, 1), got {self.eps_low}")
        if not self.eps_high > 0:
            raise ValueError(f"eps_high must be positive, got {self.eps_high}")
        if not self.kl_coeff >= 0:
            raise ValueError(f"kl_coeff must be non-negative, got {self.kl_coeff}")


def _check_finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise ValueError("log-probabilities must be finite")


def importance_ratio(new_logp, old_logp):
    _check_finite(new_logp, old_logp)
    return np.exp(np.subtract(new_logp, old_logp))


def clipped_token_term(ratio, advantage, clip: ClipConfig):
    """``min(ratio * A, clip(ratio, 1 - eps_low, 1 + eps_high) * A)``."""
    ratio = np.asarray(ratio, dtype=np.float64)
    if np.any(ratio <= 0):
        raise ValueError("importance ratios must be positive")
    clipped = np.clip(ratio, 1.0 - clip.eps_low, 1.0 + clip.eps_high)
    out = np.minimum(ratio * advantage, clipped * advantage)
    return float(out) if out.ndim == 0 else out


def response_loss(tokens, clip: ClipConfig) -> float:
    """Sum of clipped token terms over one response's ``(ratio, advantage)`` pairs."""
    tokens = list(tokens)
    if not tokens:
        raise ValueError("a response must contain at least one token")
    ratios, advantages = np.array(tokens, dtype=np.float64).T
    return float(np.sum(clipped_token_term(ratios, advantages, clip)))


def unified_objective(f, losses, total_tokens: int) -> float:
    """``1/total_tokens * sum_i f_i * L_i``."""
    if isinstance(f, WeightVector):
        f = f.f
    f = np.asarray(f, dtype=np.float64)
    losses = np.asarray(losses, dtype=np.float64)
    if f.shape != losses.shape:
        raise ValueError(f"weights and losses disagree in shape: {f.shape} vs {losses.shape}")
    if total_tokens <= 0:
        raise ValueError("total_tokens must be positive")
    return float(np.dot(f, losses) / total_tokens)


def kl_penalty(ref_logp, new_logp):
    """Per-token estimator ``exp(d) - d - 1`` with ``d = ref_logp - new_logp``; always >= 0."""
    _check_finite(ref_logp, new_logp)
    d = np.subtract(ref_logp, new_logp)
    out = np.expm1(d) - d
    return np.maximum(out, 0.0)


@dataclass(frozen=True)
class SurrogateBatch:
    """One group's tokens flattened in response order.

    ``rows`` are context rows of the policy table; ``response_index`` maps
    each token to its response. ``advantages`` and ``weights`` are
    per-response.
    """

    rows: np.ndarray
    tokens: np.ndarray
    response_index: np.ndarray
    old_logp: np.ndarray
    ref_logp: np.ndarray
    advantages: np.ndarray
    weights: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        n = self.tokens.size
        for name in ("rows", "response_index", "old_logp", "ref_logp"):
            if getattr(self, name).size != n:
                raise ValueError(f"{name} must have one entry per token")
        G = self.lengths.size
        if self.advantages.size != G or self.weights.size != G:
            raise ValueError("advantages and weights must have one entry per response")
        if int(self.lengths.sum()) != n:
            raise ValueError("token count does not match response lengths")

    @property
    def total_tokens(self) -> int:
        return int(self.tokens.size)

    @property
    def token_advantages(self) -> np.ndarray:
        return self.advantages[self.response_index]

    @classmethod
    def from_group(
        cls,
        group: RolloutGroup,
        policy: TabularPolicy,
        advantages,
        weights,
        ref_policy: Optional[TabularPolicy] = None,
    ) -> "SurrogateBatch":
        rows = np.concatenate([policy.context_rows(group.prompt_id, r) for r in group.responses])
        tokens = np.concatenate(group.responses)
        old_logp = np.concatenate(group.old_logps)
        if ref_policy is None:
            ref_logp = old_logp.copy()
        else:
            ref_logp = ref_policy.log_probs(rows)[np.arange(tokens.size), tokens]
        if isinstance(weights, WeightVector):
            weights = weights.f
        return cls(
            rows=rows,
            tokens=tokens,
            response_index=np.repeat(np.arange(group.size), group.lengths),
            old_logp=old_logp,
            ref_logp=ref_logp,
            advantages=np.asarray(advantages, dtype=np.float64),
            weights=np.asarray(weights, dtype=np.float64),
            lengths=group.lengths,
        )


@dataclass(frozen=True)
class SurrogateResult:
    objective: float
    losses: np.ndarray
    grad: Optional[np.ndarray] = None


def _new_logp(batch: SurrogateBatch, logits_table: np.ndarray):
    lp = log_softmax(logits_table[batch.rows])
    return lp, lp[np.arange(batch.total_tokens), batch.tokens]


def surrogate_objective(batch: SurrogateBatch, clip: ClipConfig, policy: TabularPolicy) -> SurrogateResult:
    """Unified objective of one group under the current policy, minus the KL term."""
    _, new_logp = _new_logp(batch, policy.table)
    ratio = importance_ratio(new_logp, batch.old_logp)
    terms = clipped_token_term(ratio, batch.token_advantages, clip)
    losses = np.bincount(batch.response_index, weights=terms, minlength=batch.lengths.size)
    J = unified_objective(batch.weights, losses, batch.total_tokens)
    if clip.kl_coeff > 0:
        J -= clip.kl_coeff * float(kl_penalty(batch.ref_logp, new_logp).mean())
    return SurrogateResult(objective=J, losses=losses)


def policy_gradient(batch: SurrogateBatch, clip: ClipConfig, policy: TabularPolicy) -> SurrogateResult:
    """Objective, per-response losses and dJ/dlogits (same shape as ``policy.table``).

    A token whose clipped branch is strictly smaller contributes nothing,
    since the clamped ratio does not depend on the parameters; ties take the
    unclipped branch.
    """
    table = policy.table
    if batch.rows.size and (batch.rows.max() >= table.shape[0] or batch.rows.min() < 0):
        raise ValueError("batch references contexts outside the policy table")
    lp, new_logp = _new_logp(batch, table)
    adv = batch.token_advantages
    ratio = importance_ratio(new_logp, batch.old_logp)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip.eps_low, 1.0 + clip.eps_high) * adv
    active = unclipped <= clipped
    terms = np.where(active, unclipped, clipped)
    losses = np.bincount(batch.response_index, weights=terms, minlength=batch.lengths.size)
    T = batch.total_tokens
    J = unified_objective(batch.weights, losses, T)

    # d J / d new_logp per token
    coef = np.where(active, batch.weights[batch.response_index] * unclipped, 0.0) / T
    if clip.kl_coeff > 0:
        d = batch.ref_logp - new_logp
        J -= clip.kl_coeff * float(kl_penalty(batch.ref_logp, new_logp).mean())
        # d/dnew (exp(d) - d - 1) = 1 - exp(d)
        coef = coef - clip.kl_coeff * (-np.expm1(d)) / T

    # d new_logp / d row = onehot(token) - softmax(row)
    dlogits = -np.exp(lp) * coef[:, None]
    dlogits[np.arange(T), batch.tokens] += coef
    grad = np.zeros_like(table)
    np.add.at(grad, batch.rows, dlogits)
    return SurrogateResult(objective=J, losses=losses, grad=grad)
