"""Random off-policy batches on a small tabular policy."""
import numpy as np

from lambda_grpo.group import compute_advantages
from lambda_grpo.surrogate import SurrogateBatch
from lambda_grpo.toy import TabularPolicy, ToyTask, sample_group
from lambda_grpo.weighting import Scheme, WeightScheme, compute_weights


def off_policy_setup(seed=0, n_buckets=1, n_positions=4, n_groups=3, group_size=4, max_len=6,
                     drift=0.6, scheme=Scheme.LAMBDA_GRPO, lam=0.7, with_ref=False):
    """Sample groups under an old policy, then perturb it so ratios leave [0.8, 1.2]."""
    rng = np.random.default_rng(seed)
    old = TabularPolicy(rng.normal(0, 1.0, size=(n_buckets, n_positions, 14, 13)))
    new = TabularPolicy(old.logits + rng.normal(0, drift, size=old.logits.shape))
    ref = TabularPolicy(old.logits + rng.normal(0, drift, size=old.logits.shape)) if with_ref else None
    ws = WeightScheme(scheme)
    batches = []
    for k in range(n_groups):
        task = ToyTask(int(rng.integers(10)), int(rng.integers(10)))
        g = sample_group(old, task, k, group_size, max_len, rng)
        rewards = rng.normal(size=group_size)  # continuous rewards keep advantages nonzero
        adv = compute_advantages(rewards)
        w = compute_weights(ws, g.lengths, lam)
        batches.append(SurrogateBatch.from_group(g, new, adv, w, ref))
    return new, batches
