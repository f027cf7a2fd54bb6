import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lambda_grpo.surrogate import (
    ClipConfig,
    clipped_token_term,
    importance_ratio,
    kl_penalty,
    policy_gradient,
    response_loss,
    surrogate_objective,
    unified_objective,
)
from lambda_grpo.weighting import Scheme, WeightScheme, compute_weights
from builders import off_policy_setup
from oracles import direct_dapo, direct_drgrpo, direct_grpo

CLIP = ClipConfig(0.2, 0.2)


def test_importance_ratio_examples():
    assert importance_ratio(-1.0, -1.0) == 1.0
    assert importance_ratio(-1.0, -2.0) == pytest.approx(math.e, rel=1e-15)
    assert importance_ratio(-3.0, -1.0) == pytest.approx(math.exp(-2), rel=1e-15)
    with pytest.raises(ValueError):
        importance_ratio(float("nan"), 0.0)


def test_clipped_token_term_examples():
    assert clipped_token_term(1.5, 1.0, CLIP) == pytest.approx(1.2)
    assert clipped_token_term(0.5, -1.0, CLIP) == pytest.approx(-0.8)
    for adv in (-2.0, 0.0, 0.3):
        assert clipped_token_term(1.0, adv, ClipConfig(0.1, 0.5)) == adv
    with pytest.raises(ValueError):
        clipped_token_term(0.0, 1.0, CLIP)


def test_asymmetric_clip():
    c = ClipConfig(0.2, 0.28)
    assert clipped_token_term(1.5, 1.0, c) == pytest.approx(1.28)
    assert clipped_token_term(0.5, -1.0, c) == pytest.approx(-0.8)


@given(st.floats(0.01, 5), st.floats(-5, 5))
def test_min_property(ratio, adv):
    term = clipped_token_term(ratio, adv, CLIP)
    assert term <= ratio * adv + 1e-15
    if 0.8 <= ratio <= 1.2:
        assert term == ratio * adv


def test_response_loss_examples():
    assert response_loss([(1.0, 0.5), (1.0, 0.5)], CLIP) == 1.0
    assert response_loss([(1.5, 1.0)], CLIP) == pytest.approx(1.2)
    assert response_loss([(1.5, 1.0), (0.5, -1.0)], CLIP) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        response_loss([], CLIP)


def test_unified_objective_examples(rng):
    assert unified_objective([1, 1], [3, 5], 4) == 2.0
    L = rng.normal(size=2)
    f_grpo = compute_weights(WeightScheme(Scheme.GRPO), [10, 20]).f
    assert unified_objective(f_grpo, L, 30) == pytest.approx(0.5 * (L[0] / 10 + L[1] / 20), rel=1e-13)
    f_dr = compute_weights(WeightScheme(Scheme.DR_GRPO), [10, 20]).f
    assert unified_objective(f_dr, L, 30) == pytest.approx(0.5 * (L[0] + L[1]), rel=1e-13)
    with pytest.raises(ValueError):
        unified_objective([1.0], [1.0, 2.0], 3)


def test_kl_examples():
    assert kl_penalty(-1.3, -1.3) == 0.0
    assert kl_penalty(-1.0, -2.0) == pytest.approx(math.e - 2, rel=1e-12)
    assert kl_penalty(-2.0, -1.0) == pytest.approx(math.exp(-1), rel=1e-12)


@given(st.floats(-20, 0), st.floats(-20, 0))
def test_kl_nonnegative(a, b):
    v = kl_penalty(a, b)
    assert v >= 0
    if a != b and abs(a - b) > 1e-6:
        assert v > 0


def _random_group(rng):
    G = int(rng.integers(1, 9))
    lengths = rng.integers(1, 65, size=G)
    adv = rng.normal(size=G)
    responses = [[(float(rng.uniform(0.5, 1.6)), float(adv[i])) for _ in range(lengths[i])] for i in range(G)]
    return lengths, responses


@pytest.mark.parametrize("kind,direct", [
    (Scheme.GRPO, direct_grpo),
    (Scheme.DAPO, direct_dapo),
    (Scheme.DR_GRPO, direct_drgrpo),
])
def test_scheme_equivalence(kind, direct, rng):
    for _ in range(200):
        lengths, responses = _random_group(rng)
        L = [response_loss(toks, CLIP) for toks in responses]
        f = compute_weights(WeightScheme(kind), lengths)
        got = unified_objective(f, L, int(lengths.sum()))
        want = direct(responses)
        assert abs(got - want) <= 1e-12 * max(abs(want), 1e-300)


def _flat_fd(batches, clip, policy, delta=1e-4):
    flat = policy.logits.reshape(-1)
    out = np.zeros_like(flat)
    p = policy.copy()
    pf = p.logits.reshape(-1)

    def J():
        return np.mean([surrogate_objective(b, clip, p).objective for b in batches])

    for k in range(flat.size):
        pf[k] = flat[k] + delta
        hi = J()
        pf[k] = flat[k] - delta
        lo = J()
        pf[k] = flat[k]
        out[k] = (hi - lo) / (2 * delta)
    return out


def _analytic(batches, clip, policy):
    return np.mean([policy_gradient(b, clip, policy).grad for b in batches], axis=0).reshape(-1)


@pytest.mark.parametrize("kl", [0.0, 0.3])
def test_policy_gradient_finite_difference(kl):
    policy, batches = off_policy_setup(seed=1, n_groups=2, with_ref=kl > 0)
    clip = ClipConfig(0.2, 0.2, kl)
    assert policy.num_params <= 2000
    ratios = np.concatenate([np.exp(policy.log_probs(b.rows)[np.arange(b.total_tokens), b.tokens] - b.old_logp)
                             for b in batches])
    assert np.any((ratios < 0.8) | (ratios > 1.2)), "setup should exercise the clip"
    a = _analytic(batches, clip, policy)
    n = _flat_fd(batches, clip, policy)
    denom = np.maximum(np.abs(a), np.abs(n))
    err = np.where(denom > 0, np.abs(a - n) / np.where(denom > 0, denom, 1), 0)
    assert err.max() <= 1e-4


def test_objective_consistent_between_paths():
    policy, batches = off_policy_setup(seed=2, with_ref=True)
    clip = ClipConfig(0.2, 0.28, 0.1)
    for b in batches:
        r1 = surrogate_objective(b, clip, policy)
        r2 = policy_gradient(b, clip, policy)
        assert r1.objective == pytest.approx(r2.objective, rel=1e-14)
        np.testing.assert_allclose(r1.losses, r2.losses, rtol=1e-14)


def test_zero_advantage_gives_zero_gradient():
    policy, batches = off_policy_setup(seed=3)
    b = batches[0]
    from dataclasses import replace

    b0 = replace(b, advantages=np.zeros_like(b.advantages), old_logp=policy.log_probs(b.rows)[np.arange(b.total_tokens), b.tokens])
    res = policy_gradient(b0, CLIP, policy)
    assert np.all(res.grad == 0) and res.objective == 0


def test_strictly_clipped_token_contributes_nothing():
    from lambda_grpo.surrogate import SurrogateBatch
    from lambda_grpo.toy import TabularPolicy

    policy = TabularPolicy.uniform(1, 2)
    # new logp = -ln 13, old logp far lower -> ratio >> 1.2 with positive advantage
    b = SurrogateBatch(
        rows=np.array([0]), tokens=np.array([3]), response_index=np.array([0]),
        old_logp=np.array([-np.log(13) - 2.0]), ref_logp=np.array([0.0]),
        advantages=np.array([1.0]), weights=np.array([1.0]), lengths=np.array([1]),
    )
    res = policy_gradient(b, CLIP, policy)
    assert res.objective == pytest.approx(1.2)
    assert np.all(res.grad == 0)


def test_policy_gradient_rejects_foreign_rows():
    from lambda_grpo.surrogate import SurrogateBatch
    from lambda_grpo.toy import TabularPolicy

    policy = TabularPolicy.uniform(1, 1)
    b = SurrogateBatch(
        rows=np.array([10_000]), tokens=np.array([0]), response_index=np.array([0]),
        old_logp=np.array([0.0]), ref_logp=np.array([0.0]),
        advantages=np.array([1.0]), weights=np.array([1.0]), lengths=np.array([1]),
    )
    with pytest.raises(ValueError):
        policy_gradient(b, CLIP, policy)


def test_clip_config_validation():
    with pytest.raises(ValueError):
        ClipConfig(0.0, 0.2)
    with pytest.raises(ValueError):
        ClipConfig(0.2, -0.1)
    with pytest.raises(ValueError):
        ClipConfig(0.2, 0.2, -1.0)
