"""Per-response aggregation weights f(o_i) for the unified token-level objective.

Every scheme shares the clipped surrogate
``J = 1/sum|o_i| * sum_i f_i * L_i`` and differs only in ``f``:

* GRPO:        f_i = mean_len / |o_i|
* DAPO:        f_i = 1
* Dr. GRPO:    f_i = mean_len
* lambda-GRPO: f = G * softmax(h ** lam), with h = max(1 + scale_r * z, h_floor)
  and z the standardized lengths.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .group import standardize_lengths

DEFAULT_SCALE_R = 1.0 / 9.0
DEFAULT_H_FLOOR = 1e-3


class Scheme(str, enum.Enum):
    GRPO = "grpo"
    DAPO = "dapo"
    DR_GRPO = "dr-grpo"
    LAMBDA_GRPO = "lambda-grpo"

    @classmethod
    def parse(cls, name: str) -> "Scheme":
        key = name.strip().lower().replace("_", "-")
        aliases = {"drgrpo": "dr-grpo", "lambda": "lambda-grpo", "lambdagrpo": "lambda-grpo"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown scheme {name!r}; choose one of {choices}") from None


@dataclass(frozen=True)
class WeightScheme:
    kind: Scheme
    scale_r: float = DEFAULT_SCALE_R
    h_floor: float = DEFAULT_H_FLOOR

    def __post_init__(self):
        object.__setattr__(self, "kind", Scheme(self.kind))
        if not self.scale_r > 0:
            raise ValueError(f"scale_r must be positive, got {self.scale_r}")
        if not 0 < self.h_floor < 1:
            raise ValueError(f"h_floor must lie in (0, 1), got {self.h_floor}")


@dataclass(frozen=True)
class WeightVector:
    """Weights for one group. ``h``, ``g`` and ``s`` are only set for lambda-GRPO."""

    f: np.ndarray
    h: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None


def softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max())
    return e / e.sum()


def compute_h(z, scale_r: float = DEFAULT_SCALE_R, h_floor: float = DEFAULT_H_FLOOR) -> np.ndarray:
    """Map standardized lengths to positive values centred on 1.

    ``1 + scale_r * z`` goes non-positive for z < -1/scale_r; those entries
    are clamped to ``h_floor`` so that ``h ** lam`` and ``log h`` exist.
    """
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("z must be finite")
    if not scale_r > 0:
        raise ValueError(f"scale_r must be positive, got {scale_r}")
    if not h_floor > 0:
        raise ValueError(f"h_floor must be positive, got {h_floor}")
    return np.maximum(1.0 + scale_r * z, h_floor)


def lambda_weights(h, lam: float) -> WeightVector:
    """f = G * softmax(h ** lam), with the power taken as exp(lam * log h)."""
    h = np.asarray(h, dtype=np.float64)
    g = np.exp(lam * np.log(h))
    s = softmax(g)
    return WeightVector(f=h.size * s, h=h, g=g, s=s)


def compute_weights(scheme: WeightScheme, lengths, lam: float = 0.0) -> WeightVector:
    lengths = np.asarray(lengths)
    if lengths.ndim != 1 or lengths.size == 0:
        raise ValueError("lengths must be a non-empty 1-D sequence")
    if np.any(lengths <= 0):
        raise ValueError("response lengths must be positive")
    lengths = lengths.astype(np.float64)
    mu = lengths.mean()

    kind = scheme.kind
    if kind is Scheme.GRPO:
        return WeightVector(f=mu / lengths)
    if kind is Scheme.DAPO:
        return WeightVector(f=np.ones_like(lengths))
    if kind is Scheme.DR_GRPO:
        return WeightVector(f=np.full_like(lengths, mu))

    if not np.isfinite(lam):
        raise ValueError(f"lambda must be finite, got {lam}")
    z = standardize_lengths(lengths)
    h = compute_h(z, scheme.scale_r, scheme.h_floor)
    return lambda_weights(h, lam)
