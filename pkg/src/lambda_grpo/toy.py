"""Desk-scale verifiable-reward environment.

Prompts are digit pairs ``(a, b)``; the verifiable answer is ``(a + b) % 10``.
A response is a token sequence over a 13-token vocabulary and is well formed
when it ends ``... BOX d EOS`` with exactly one BOX, where ``d`` is a digit.
Tokens before the BOX (digits or FILLER) are free-form preamble, so response
length can vary without affecting correctness.

The policy is a logit table indexed by (prompt bucket, position, previous
token). Positions at or beyond ``n_positions - 1`` share the last row.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .group import RolloutGroup

DIGITS = tuple(range(10))
BOX = 10
EOS = 11
FILLER = 12
VOCAB_SIZE = 13
TOKEN_NAMES = tuple(str(d) for d in DIGITS) + ("BOX", "EOS", "FILLER")
# previous-token slot used at position 0
START = VOCAB_SIZE
N_PREV = VOCAB_SIZE + 1

REWARD_CORRECT = 1.0
REWARD_WRONG_ANSWER = -0.5
REWARD_MALFORMED = -1.0


@dataclass(frozen=True)
class ToyTask:
    a: int
    b: int

    def __post_init__(self):
        for v in (self.a, self.b):
            if not 0 <= v <= 9:
                raise ValueError(f"operands must be digits, got {(self.a, self.b)}")

    @property
    def target(self) -> int:
        return (self.a + self.b) % 10


def make_task_set(size: int, operand_max: int = 9, rng: Optional[np.random.Generator] = None) -> list[ToyTask]:
    """Draw ``size`` distinct operand pairs from ``[0, operand_max]**2``.

    Pairs repeat only when ``size`` exceeds the number of distinct pairs.
    """
    if size < 1:
        raise ValueError("task set size must be at least 1")
    if not 0 <= operand_max <= 9:
        raise ValueError(f"operand_max must be a digit, got {operand_max}")
    rng = np.random.default_rng(0) if rng is None else rng
    n = operand_max + 1
    pairs = rng.permutation(n * n)
    if size > pairs.size:
        pairs = np.concatenate([pairs, rng.integers(0, n * n, size - pairs.size)])
    return [ToyTask(int(p // n), int(p % n)) for p in pairs[:size]]


@dataclass(frozen=True)
class SampledResponse:
    tokens: np.ndarray
    logps: np.ndarray
    well_formed: bool
    answer: Optional[int]


def parse_response(tokens, logps=None) -> SampledResponse:
    tokens = np.asarray(tokens, dtype=np.int64)
    logps = np.zeros(tokens.size) if logps is None else np.asarray(logps, dtype=np.float64)
    well_formed = False
    answer = None
    # truncated responses (no EOS) are malformed
    if tokens.size >= 3 and tokens[-1] == EOS:
        body = tokens[:-1]
        if (
            body[-2] == BOX
            and body[-1] in DIGITS
            and np.count_nonzero(body == BOX) == 1
            and np.count_nonzero(body == EOS) == 0
        ):
            well_formed = True
            answer = int(body[-1])
    return SampledResponse(tokens=tokens, logps=logps, well_formed=well_formed, answer=answer)


def score_response(task: ToyTask, response) -> float:
    """+1 correct, -0.5 well-formed but wrong, -1 malformed."""
    if not isinstance(response, SampledResponse):
        response = parse_response(response)
    if not response.well_formed:
        return REWARD_MALFORMED
    return REWARD_CORRECT if response.answer == task.target else REWARD_WRONG_ANSWER


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class TabularPolicy:
    """Categorical next-token policy with one logit row per context."""

    def __init__(self, logits: np.ndarray):
        logits = np.array(logits, dtype=np.float64)
        if logits.ndim != 4 or logits.shape[2:] != (N_PREV, VOCAB_SIZE):
            raise ValueError(
                f"logit table must have shape (buckets, positions, {N_PREV}, {VOCAB_SIZE}), got {logits.shape}"
            )
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits must be finite")
        self.logits = logits

    @classmethod
    def uniform(cls, n_buckets: int, n_positions: int) -> "TabularPolicy":
        return cls(np.zeros((n_buckets, n_positions, N_PREV, VOCAB_SIZE)))

    @classmethod
    def format_prior(cls, n_buckets: int, n_positions: int, strength: float) -> "TabularPolicy":
        """Digit-agnostic starting point that already leans toward ``BOX d EOS``.

        Adds ``strength`` to BOX in every context not preceded by BOX, to the
        digits right after BOX, and to EOS after a digit. Every bucket gets
        the same rows, so which digit answers which prompt is left to learn.
        """
        logits = np.zeros((n_buckets, n_positions, N_PREV, VOCAB_SIZE))
        not_box = [p for p in range(N_PREV) if p != BOX]
        logits[:, :, not_box, BOX] += strength
        logits[:, :, BOX, :10] += strength
        logits[:, :, :10, EOS] += strength
        return cls(logits)

    @property
    def n_buckets(self) -> int:
        return self.logits.shape[0]

    @property
    def n_positions(self) -> int:
        return self.logits.shape[1]

    @property
    def n_rows(self) -> int:
        return self.n_buckets * self.n_positions * N_PREV

    @property
    def num_params(self) -> int:
        return self.logits.size

    @property
    def table(self) -> np.ndarray:
        """(n_rows, VOCAB_SIZE) view sharing memory with ``logits``."""
        return self.logits.reshape(self.n_rows, VOCAB_SIZE)

    def copy(self) -> "TabularPolicy":
        return TabularPolicy(self.logits.copy())

    def bucket_of(self, prompt_id: int) -> int:
        return int(prompt_id) % self.n_buckets

    def row_index(self, bucket, position, prev):
        position = np.minimum(position, self.n_positions - 1)
        return (np.asarray(bucket) * self.n_positions + position) * N_PREV + np.asarray(prev)

    def context_rows(self, prompt_id: int, tokens) -> np.ndarray:
        """Row index of the context in which each token of a response was emitted."""
        tokens = np.asarray(tokens, dtype=np.int64)
        prev = np.empty_like(tokens)
        prev[0] = START
        prev[1:] = tokens[:-1]
        return self.row_index(self.bucket_of(prompt_id), np.arange(tokens.size), prev)

    def log_probs(self, rows) -> np.ndarray:
        return log_softmax(self.table[rows])


def policy_logp_and_grad(policy: TabularPolicy, context, token: int):
    """Log-probability of ``token`` in ``context`` and its gradient.

    ``context`` is ``(bucket, position, prev_token)``. The gradient is
    nonzero only in that context's logit row, so it is returned sparsely as
    ``(logp, row_index, d_logp/d_row)``.
    """
    bucket, position, prev = context
    if not 0 <= bucket < policy.n_buckets:
        raise ValueError(f"unknown bucket {bucket}")
    if position < 0:
        raise ValueError(f"position must be non-negative, got {position}")
    if not 0 <= prev < N_PREV:
        raise ValueError(f"unknown previous token {prev}")
    if not 0 <= token < VOCAB_SIZE:
        raise ValueError(f"unknown token {token}")
    row = int(policy.row_index(bucket, position, prev))
    logp = log_softmax(policy.table[row])
    grad = -np.exp(logp)
    grad[token] += 1.0
    return float(logp[token]), row, grad


def sample_group(
    policy: TabularPolicy,
    task: ToyTask,
    prompt_id: int,
    group_size: int,
    max_len: int,
    rng: np.random.Generator,
) -> RolloutGroup:
    """Ancestral sampling of ``group_size`` responses, scored with the rule reward."""
    if group_size < 1:
        raise ValueError("group_size must be at least 1")
    if max_len < 2:
        raise ValueError("max_len must be at least 2")
    bucket = policy.bucket_of(prompt_id)
    table = policy.table
    tokens = np.full((group_size, max_len), -1, dtype=np.int64)
    logps = np.zeros((group_size, max_len))
    lengths = np.zeros(group_size, dtype=np.int64)
    prev = np.full(group_size, START, dtype=np.int64)
    active = np.ones(group_size, dtype=bool)
    for t in range(max_len):
        u = rng.random(group_size)
        lp = log_softmax(table[policy.row_index(bucket, t, prev)])
        cdf = np.cumsum(np.exp(lp), axis=1)
        choice = np.minimum((cdf < (u * cdf[:, -1])[:, None]).sum(axis=1), VOCAB_SIZE - 1)
        idx = np.flatnonzero(active)
        tokens[idx, t] = choice[idx]
        logps[idx, t] = lp[idx, choice[idx]]
        lengths[idx] += 1
        active &= choice != EOS
        prev = choice
        if not active.any():
            break

    responses, old_logps, rewards = [], [], []
    for i in range(group_size):
        n = lengths[i]
        resp = parse_response(tokens[i, :n], logps[i, :n])
        responses.append(resp.tokens)
        old_logps.append(resp.logps)
        rewards.append(score_response(task, resp))
    return RolloutGroup(prompt_id=prompt_id, responses=responses, rewards=np.array(rewards), old_logps=old_logps)


def entropy_per_row(policy: TabularPolicy, rows) -> np.ndarray:
    lp = policy.log_probs(rows)
    return -(np.exp(lp) * lp).sum(axis=-1)


def policy_entropy(policy: TabularPolicy, group: RolloutGroup) -> float:
    """Mean Shannon entropy (nats) over every generated token's context."""
    rows = np.concatenate([policy.context_rows(group.prompt_id, r) for r in group.responses])
    return float(entropy_per_row(policy, rows).mean())
