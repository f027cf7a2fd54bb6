"""Group-level statistics for one prompt's rollout group."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_STD_FLOOR = 1e-6


@dataclass(frozen=True)
class RolloutGroup:
    """G sampled responses for one prompt.

    ``responses`` and ``old_logps`` hold one integer / float array per
    response; ``old_logps`` are the per-token log-probabilities recorded
    under the sampling policy.
    """

    prompt_id: int
    responses: list[np.ndarray]
    rewards: np.ndarray
    old_logps: list[np.ndarray]
    lengths: np.ndarray = field(init=False)

    def __post_init__(self):
        G = len(self.responses)
        if G < 1:
            raise ValueError("a rollout group needs at least one response")
        if len(self.rewards) != G or len(self.old_logps) != G:
            raise ValueError(
                f"group fields disagree in count: {G} responses, "
                f"{len(self.rewards)} rewards, {len(self.old_logps)} logp arrays"
            )
        lengths = np.array([len(r) for r in self.responses], dtype=np.int64)
        if np.any(lengths < 1):
            raise ValueError("every response must contain at least one token")
        for resp, lp in zip(self.responses, self.old_logps):
            if len(lp) != len(resp):
                raise ValueError("old_logps must have one entry per token")
        object.__setattr__(self, "rewards", np.asarray(self.rewards, dtype=np.float64))
        object.__setattr__(self, "lengths", lengths)

    @property
    def size(self) -> int:
        return len(self.responses)

    @property
    def total_tokens(self) -> int:
        return int(self.lengths.sum())


@dataclass(frozen=True)
class GroupStats:
    mean_reward: float
    std_reward: float
    mean_len: float
    std_len: float


def group_stats(group: RolloutGroup) -> GroupStats:
    """Population mean/std of rewards and lengths."""
    lengths = group.lengths.astype(np.float64)
    return GroupStats(
        mean_reward=float(group.rewards.mean()),
        std_reward=float(group.rewards.std()),
        mean_len=float(lengths.mean()),
        std_len=float(lengths.std()),
    )


def compute_advantages(rewards, std_floor: float = DEFAULT_STD_FLOOR) -> np.ndarray:
    """Group-normalized advantages ``(R - mean) / max(std, std_floor)``.

    Groups whose rewards are all identical get zero advantage whatever the
    floor is, so they contribute no gradient.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.ndim != 1 or rewards.size == 0:
        raise ValueError("rewards must be a non-empty 1-D sequence")
    if std_floor < 0:
        raise ValueError(f"std_floor must be non-negative, got {std_floor}")
    if np.all(rewards == rewards[0]):
        return np.zeros_like(rewards)
    centered = rewards - rewards.mean()
    return centered / max(rewards.std(), std_floor)


def standardize_lengths(lengths) -> np.ndarray:
    """z-scores of response lengths (population std); all zeros when std is 0."""
    lengths = np.asarray(lengths, dtype=np.float64)
    if lengths.ndim != 1 or lengths.size == 0:
        raise ValueError("lengths must be a non-empty 1-D sequence")
    if np.all(lengths == lengths[0]):
        return np.zeros_like(lengths)
    return (lengths - lengths.mean()) / lengths.std()
