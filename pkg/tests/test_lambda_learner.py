import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lambda_grpo.lambda_learner import LambdaState, lambda_gradient, update_lambda
from lambda_grpo.weighting import compute_h
from oracles import central_difference, lambda_weights_by_hand


def objective_by_hand(losses, lengths, lam, scale_r):
    f = lambda_weights_by_hand(lengths, lam, scale_r)
    return sum(fi * Li for fi, Li in zip(f, losses)) / sum(lengths)


def test_constant_losses_give_zero():
    h = [0.7, 1.0, 1.3]
    for c in (0.0, 2.5, -7.0):
        for lam in (-2.0, 0.0, 1.7):
            assert lambda_gradient([c, c, c], h, lam, 30) == 0.0


def test_single_response_gives_zero():
    assert lambda_gradient([4.2], [1.3], 2.0, 10) == 0.0


def test_two_response_example_matches_finite_difference():
    # lengths [10, 20] -> h = [8/9, 10/9]
    L = [2.0, 1.0]
    analytic = lambda_gradient(L, [8 / 9, 10 / 9], 0.0, 30)
    numeric = central_difference(lambda lam: objective_by_hand(L, [10, 20], lam, 1 / 9), 0.0, 1e-4)
    assert abs(analytic - numeric) / abs(numeric) <= 1e-6
    # frozen: (2/30) * (2 - 1) * 0.5 * 0.5 * (ln(8/9) - ln(10/9))
    frozen = (2 / 30) * 0.25 * (math.log(8 / 9) - math.log(10 / 9))
    assert analytic == pytest.approx(frozen, rel=1e-12)
    assert analytic == pytest.approx(-0.00371907, rel=1e-5)


@given(
    st.lists(st.tuples(st.integers(1, 64), st.floats(-10, 10)), min_size=2, max_size=8),
    st.floats(-3, 3),
    st.sampled_from([1 / 30, 1 / 15, 1 / 9]),
)
def test_matches_hand_finite_difference(pairs, lam, r):
    lengths, losses = map(list, zip(*pairs))
    arr = np.array(lengths, dtype=float)
    z = np.zeros_like(arr) if arr.std() == 0 else (arr - arr.mean()) / arr.std()
    h = compute_h(z, r)
    analytic = lambda_gradient(losses, h, lam, sum(lengths))
    numeric = central_difference(lambda x: objective_by_hand(losses, lengths, x, r), lam, 1e-4)
    assert abs(analytic - numeric) <= 1e-5 * max(abs(analytic), abs(numeric)) + 1e-11


def test_reflection_antisymmetry():
    # G=2 with h reflected around 1: swapping the losses flips the sign
    h = [1 - 0.2, 1 + 0.2]
    for lam in (-1.5, 0.0, 0.8, 2.5):
        a = lambda_gradient([3.0, -1.0], h, lam, 12)
        b = lambda_gradient([-1.0, 3.0], h, lam, 12)
        assert a == pytest.approx(-b, rel=1e-12)


def test_rejects_non_positive_h():
    with pytest.raises(ValueError):
        lambda_gradient([1.0, 2.0], [0.0, 1.0], 1.0, 5)
    with pytest.raises(ValueError):
        lambda_gradient([1.0], [1.0, 1.0], 1.0, 5)


def test_update_examples():
    s = LambdaState(0.0, 0.1)
    assert update_lambda(s, 0.0).value == 0.0
    s1 = update_lambda(s, 0.5)
    assert s1.value == pytest.approx(0.05) and s1.steps_taken == 1
    s2 = update_lambda(update_lambda(s, 0.3), -0.7)
    assert s2.value == pytest.approx(0.1 * (0.3 - 0.7), abs=1e-15)
    assert s2.steps_taken == 2


def test_update_rejects_non_finite_and_keeps_state():
    s = LambdaState(0.3, 0.1, 4)
    with pytest.raises(ValueError):
        update_lambda(s, float("nan"))
    assert s == LambdaState(0.3, 0.1, 4)


def test_lambda_gradient_agrees_with_weighting_module():
    from lambda_grpo.gradcheck import check_lambda_gradient

    assert check_lambda_gradient(200, seed=3) < 1e-5
