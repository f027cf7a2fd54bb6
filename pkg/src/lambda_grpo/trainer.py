"""Training loop: rollouts, weighting, joint policy / lambda updates, metrics."""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .group import RolloutGroup, compute_advantages
from .lambda_learner import LambdaState, lambda_gradient, update_lambda
from .surrogate import SurrogateBatch, policy_gradient
from .toy import REWARD_CORRECT, TabularPolicy, ToyTask, entropy_per_row, make_task_set, sample_group
from .weighting import Scheme, compute_weights

log = logging.getLogger(__name__)

METRICS_HEADER = "step,mean_reward,accuracy,mean_response_len,mean_entropy,lambda,objective"
METRICS_FILE = "metrics.csv"
FINAL_CHECKPOINT = "checkpoint.json"

# stream tags mixed into the seed sequence
_TASK_SET_STREAM = 0
_TASK_PICK_STREAM = 1
_ROLLOUT_STREAM = 2


@dataclass(frozen=True)
class StepMetrics:
    step: int
    mean_reward: float
    accuracy: float
    mean_response_len: float
    mean_entropy: float
    lambda_: float
    objective: float

    def csv_row(self) -> str:
        vals = (self.mean_reward, self.accuracy, self.mean_response_len, self.mean_entropy, self.lambda_, self.objective)
        return ",".join([str(self.step)] + [_fmt(v) for v in vals])


def _fmt(x: float) -> str:
    s = f"{x:.12f}"
    return "0.000000000000" if s == "-0.000000000000" else s


def task_set_for(config: TrainConfig) -> list[ToyTask]:
    rng = np.random.default_rng([config.seed, _TASK_SET_STREAM])
    return make_task_set(config.task_set_size, config.operand_max, rng)


def pick_prompts(config: TrainConfig, step: int) -> np.ndarray:
    rng = np.random.default_rng([config.seed, _TASK_PICK_STREAM, step])
    return rng.integers(0, config.task_set_size, size=config.prompts_per_batch)


def rollout_stream(config: TrainConfig, step: int, slot: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, _ROLLOUT_STREAM, step, slot])


def initial_policy(config: TrainConfig) -> TabularPolicy:
    return TabularPolicy.format_prior(config.task_set_size, config.position_buckets, config.prior_strength)


def _map(workers: int, fn, items):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class StepResult:
    policy: TabularPolicy
    lambda_state: LambdaState
    metrics: StepMetrics
    groups: list[RolloutGroup]


def train_step(
    config: TrainConfig,
    policy: TabularPolicy,
    lambda_state: LambdaState,
    prompt_ids: Sequence[int],
    tasks: Sequence[ToyTask],
    step: int,
    ref_policy: Optional[TabularPolicy] = None,
    workers: int = 1,
) -> StepResult:
    """One optimization step on a batch of prompts.

    Rollouts are drawn from the frozen pre-step policy. The groups are then
    split into ``mini_batches_per_step`` consecutive mini-batches; each one
    gets a policy ascent step and, for lambda-GRPO, a lambda step using the
    gradient averaged over its groups.
    """
    scheme = config.weight_scheme()
    clip = config.clip_config()
    old_policy = policy

    def rollout(slot):
        pid = int(prompt_ids[slot])
        return sample_group(old_policy, tasks[pid], pid, config.group_size,
                            config.max_response_len, rollout_stream(config, step, slot))

    groups = _map(workers, rollout, range(len(prompt_ids)))

    rewards = np.concatenate([g.rewards for g in groups])
    lengths = np.concatenate([g.lengths for g in groups])
    rows = np.concatenate([old_policy.context_rows(g.prompt_id, r) for g in groups for r in g.responses])
    entropy = float(entropy_per_row(old_policy, rows).mean())
    advantages = [compute_advantages(g.rewards, config.std_floor) for g in groups]

    policy = old_policy.copy()
    objectives = []
    for mb in np.array_split(np.arange(len(groups)), config.mini_batches_per_step):
        lam = lambda_state.value
        current = policy

        def group_update(i):
            g = groups[i]
            w = compute_weights(scheme, g.lengths, lam)
            batch = SurrogateBatch.from_group(g, current, advantages[i], w, ref_policy)
            res = policy_gradient(batch, clip, current)
            lam_grad = 0.0
            if scheme.kind is Scheme.LAMBDA_GRPO:
                lam_grad = lambda_gradient(res.losses, w.h, lam, batch.total_tokens)
            return res.objective, res.grad, lam_grad

        results = _map(workers, group_update, mb)
        # fixed reduction order (group index) keeps results independent of workers
        grad = np.zeros_like(current.table)
        lam_grad = 0.0
        obj = 0.0
        for o, gr, lg in results:
            grad += gr
            lam_grad += lg
            obj += o
        n = len(results)
        objectives.append(obj / n)
        policy = TabularPolicy(current.logits + config.policy_learning_rate * (grad / n).reshape(current.logits.shape))
        if scheme.kind is Scheme.LAMBDA_GRPO:
            lambda_state = update_lambda(lambda_state, lam_grad / n)

    metrics = StepMetrics(
        step=step,
        mean_reward=float(rewards.mean()),
        accuracy=float(np.mean(rewards == REWARD_CORRECT)),
        mean_response_len=float(lengths.mean()),
        mean_entropy=entropy,
        lambda_=lambda_state.value,
        objective=float(np.mean(objectives)),
    )
    return StepResult(policy=policy, lambda_state=lambda_state, metrics=metrics, groups=groups)


def dump_rollouts(step: int, groups: Sequence[RolloutGroup], stream) -> None:
    """One JSON line per response: step, slot, prompt, reward, token ids, sampling logps."""
    for slot, g in enumerate(groups):
        for i, (toks, lps) in enumerate(zip(g.responses, g.old_logps)):
            rec = {
                "step": step,
                "slot": slot,
                "prompt": g.prompt_id,
                "response": i,
                "reward": float(g.rewards[i]),
                "tokens": [int(t) for t in toks],
                "logps": [float(x) for x in lps],
            }
            stream.write(json.dumps(rec) + "\n")


class Trainer:
    """Owns the mutable run state and writes metrics / checkpoints to ``out_dir``."""

    def __init__(self, config: TrainConfig, out_dir, workers: int = 1,
                 checkpoint_every: int = 0, dump_stream=None):
        self.config = config
        self.out_dir = Path(out_dir)
        self.workers = max(1, int(workers))
        self.checkpoint_every = checkpoint_every
        self.dump_stream = dump_stream
        self.tasks = task_set_for(config)
        self.policy = initial_policy(config)
        self.ref_policy = self.policy.copy()
        self.lambda_state = LambdaState(config.lambda_init, config.lambda_learning_rate)
        self.step = 0
        self.history: list[StepMetrics] = []
        self.on_step: Optional[Callable[[StepMetrics], None]] = None

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint, out_dir, **kwargs) -> "Trainer":
        trainer = cls(ckpt.config, out_dir, **kwargs)
        trainer.policy = ckpt.policy
        trainer.ref_policy = ckpt.ref_policy
        trainer.lambda_state = ckpt.lambda_state
        trainer.step = ckpt.step
        return trainer

    @property
    def metrics_path(self) -> Path:
        return self.out_dir / METRICS_FILE

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(self.config, self.policy, self.ref_policy, self.lambda_state, self.step)

    def _prepare_output(self, resume: bool) -> None:
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            if resume and self.metrics_path.exists():
                lines = self.metrics_path.read_text().splitlines()
                if not lines or lines[0] != METRICS_HEADER:
                    raise ValueError(f"{self.metrics_path} does not look like a metrics file")
                kept = lines[: 1 + self.step]
                if len(kept) != 1 + self.step:
                    log.warning("metrics file has fewer rows than the checkpoint step; earlier rows are missing")
                self.metrics_path.write_text("\n".join(kept) + "\n")
            else:
                self.metrics_path.write_text(METRICS_HEADER + "\n")
        except OSError as exc:
            raise OSError(f"cannot write to output directory {self.out_dir}: {exc}") from exc

    def run(self, resume: bool = False) -> Checkpoint:
        """Train until ``config.total_steps`` and write the final checkpoint."""
        self._prepare_output(resume)
        with self.metrics_path.open("a") as fh:
            while self.step < self.config.total_steps:
                step = self.step
                prompt_ids = pick_prompts(self.config, step)
                res = train_step(self.config, self.policy, self.lambda_state, prompt_ids, self.tasks,
                                 step, self.ref_policy if self.config.kl_coeff > 0 else None, self.workers)
                if self.dump_stream is not None:
                    dump_rollouts(step, res.groups, self.dump_stream)
                m = res.metrics
                if not all(math.isfinite(v) for v in (m.mean_reward, m.mean_entropy, m.lambda_, m.objective)):
                    raise FloatingPointError(f"non-finite metrics at step {step}: {m}")
                self.policy, self.lambda_state = res.policy, res.lambda_state
                self.step += 1
                self.history.append(m)
                fh.write(m.csv_row() + "\n")
                fh.flush()
                if self.on_step is not None:
                    self.on_step(m)
                if self.checkpoint_every and self.step % self.checkpoint_every == 0:
                    save_checkpoint(self.out_dir / f"checkpoint_step{self.step:05d}.json", self.checkpoint())
        ckpt = self.checkpoint()
        save_checkpoint(self.out_dir / FINAL_CHECKPOINT, ckpt)
        return ckpt


def train_run(config: TrainConfig, out_dir, **kwargs) -> tuple[Checkpoint, list[StepMetrics]]:
    trainer = Trainer(config, out_dir, **kwargs)
    ckpt = trainer.run()
    return ckpt, trainer.history


def resume_run(checkpoint_path, out_dir=None, **kwargs) -> tuple[Checkpoint, list[StepMetrics]]:
    """Continue a run from a checkpoint; metrics rows after its step are rewritten."""
    checkpoint_path = Path(checkpoint_path)
    ckpt = load_checkpoint(checkpoint_path)
    out_dir = checkpoint_path.parent if out_dir is None else out_dir
    trainer = Trainer.from_checkpoint(ckpt, out_dir, **kwargs)
    final = trainer.run(resume=True)
    return final, trainer.history


def read_metrics(path) -> dict[str, np.ndarray]:
    """Load a metrics CSV into column arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if ",".join(header) != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected metrics header {header}")
        rows = [[float(x) for x in r] for r in reader if r]
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    return {name: data[:, j] for j, name in enumerate(header)}
