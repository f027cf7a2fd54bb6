"""Training configuration and its flat key/value file format."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path

import yaml

from .group import DEFAULT_STD_FLOOR
from .surrogate import DEFAULT_EPS, ClipConfig
from .toy import VOCAB_SIZE
from .weighting import DEFAULT_H_FLOOR, DEFAULT_SCALE_R, Scheme, WeightScheme

# Values used for the LLM-scale runs this toy setup stands in for. Kept for
# reference only; desk-scale defaults below are much smaller.
LLM_SCALE = {
    "batch_size": 1024,
    "mini_batch_size": 256,
    "micro_batch_size": 8,
    "max_response_len": 2048,
    "total_steps": 160,
    "scale_r": 1 / 9,
    "lambda_learning_rate": 0.1,
}


@dataclass(frozen=True)
class TrainConfig:
    scheme: str = Scheme.LAMBDA_GRPO.value
    group_size: int = 8
    prompts_per_batch: int = 32
    mini_batches_per_step: int = 1
    total_steps: int = 200
    policy_learning_rate: float = 50.0
    lambda_learning_rate: float = 0.1
    lambda_init: float = 0.0
    scale_r: float = DEFAULT_SCALE_R
    eps_low: float = DEFAULT_EPS
    eps_high: float = DEFAULT_EPS
    kl_coeff: float = 0.0
    std_floor: float = DEFAULT_STD_FLOOR
    h_floor: float = DEFAULT_H_FLOOR
    max_response_len: int = 16
    task_set_size: int = 10
    operand_max: int = 9
    vocab_size: int = VOCAB_SIZE
    position_buckets: int = 4
    prior_strength: float = 1.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme).value)
        for name in ("group_size", "prompts_per_batch", "mini_batches_per_step",
                     "max_response_len", "task_set_size", "position_buckets"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.total_steps < 0:
            raise ValueError("total_steps must be non-negative")
        if self.max_response_len < 2:
            raise ValueError("max_response_len must be at least 2")
        if self.mini_batches_per_step > self.prompts_per_batch:
            raise ValueError("mini_batches_per_step cannot exceed prompts_per_batch")
        if not self.policy_learning_rate > 0:
            raise ValueError("policy_learning_rate must be positive")
        if not self.lambda_learning_rate >= 0:
            raise ValueError("lambda_learning_rate must be non-negative")
        if self.vocab_size != VOCAB_SIZE:
            raise ValueError(f"the toy vocabulary has exactly {VOCAB_SIZE} tokens")
        if not (math.isfinite(self.prior_strength) and self.prior_strength >= 0):
            raise ValueError("prior_strength must be finite and non-negative")
        if not 0 <= self.operand_max <= 9:
            raise ValueError("operand_max must be a digit")
        # delegate range checks
        self.weight_scheme()
        self.clip_config()

    def weight_scheme(self) -> WeightScheme:
        return WeightScheme(Scheme(self.scheme), scale_r=self.scale_r, h_floor=self.h_floor)

    def clip_config(self) -> ClipConfig:
        return ClipConfig(eps_low=self.eps_low, eps_high=self.eps_high, kl_coeff=self.kl_coeff)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, value in data.items():
            kwargs[key] = _coerce(key, value, known[key].type)
        return cls(**kwargs)


def _coerce(key, value, type_name):
    if isinstance(value, (dict, list)):
        raise ValueError(f"config key {key!r} must be a scalar")
    if type_name == "str":
        return str(value)
    if type_name == "int":
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ValueError(f"config key {key!r} must be an integer, got {value!r}")
        return int(value)
    if type_name == "float":
        if isinstance(value, str):
            # accept fractions such as "1/9"
            try:
                return float(Fraction(value.strip()))
            except (ValueError, ZeroDivisionError):
                raise ValueError(f"config key {key!r} must be a number, got {value!r}") from None
        return float(value)
    return value


def load_config(path) -> TrainConfig:
    """Read a flat ``key: value`` YAML file."""
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a flat mapping of keys to values")
    return TrainConfig.from_dict(data)


def dump_config(config: TrainConfig) -> str:
    lines = [f"{k}: {v!r}" if isinstance(v, float) else f"{k}: {v}" for k, v in config.to_dict().items()]
    return "\n".join(lines) + "\n"
