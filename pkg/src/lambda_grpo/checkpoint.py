"""Single-file JSON checkpoints.

Layout::

    {"magic": "LAMBDA-GRPO-CKPT", "version": 1,
     "config": {...}, "config_digest": "<sha256>",
     "step": k, "lambda": {"value", "learning_rate", "steps_taken"},
     "policy": <array>, "ref_policy": <array>,
     "rng": {"seed": s, "next_step": k}}

Arrays are stored as ``{"dtype", "shape", "data"}`` with ``data`` the
base64 of the little-endian float64 buffer, so reloads are bit-exact.
Random streams are derived from ``(seed, step, slot)``, so the stream
state is fully described by the seed and the next step index.
"""
from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .lambda_learner import LambdaState
from .toy import TabularPolicy

MAGIC = "LAMBDA-GRPO-CKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: TrainConfig
    policy: TabularPolicy
    ref_policy: TabularPolicy
    lambda_state: LambdaState
    step: int


def _encode(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return {"dtype": "<f8", "shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def _decode(blob: dict) -> np.ndarray:
    if blob.get("dtype") != "<f8":
        raise CheckpointError(f"unsupported array dtype {blob.get('dtype')!r}")
    raw = base64.b64decode(blob["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(blob["shape"]).astype(np.float64)


def save_checkpoint(path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    payload = {
        "magic": MAGIC,
        "version": VERSION,
        "config": ckpt.config.to_dict(),
        "config_digest": ckpt.config.digest(),
        "step": ckpt.step,
        "lambda": {
            "value": ckpt.lambda_state.value,
            "learning_rate": ckpt.lambda_state.learning_rate,
            "steps_taken": ckpt.lambda_state.steps_taken,
        },
        "policy": _encode(ckpt.policy.logits),
        "ref_policy": _encode(ckpt.ref_policy.logits),
        "rng": {"seed": ckpt.config.seed, "next_step": ckpt.step},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=1))
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("magic") != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    if payload.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('version')!r}")
    config = TrainConfig.from_dict(payload["config"])
    if config.digest() != payload["config_digest"]:
        raise CheckpointError("config digest mismatch; checkpoint is corrupt or was edited")
    lam = payload["lambda"]
    return Checkpoint(
        config=config,
        policy=TabularPolicy(_decode(payload["policy"])),
        ref_policy=TabularPolicy(_decode(payload["ref_policy"])),
        lambda_state=LambdaState(
            value=float(lam["value"]),
            learning_rate=float(lam["learning_rate"]),
            steps_taken=int(lam["steps_taken"]),
        ),
        step=int(payload["step"]),
    )
