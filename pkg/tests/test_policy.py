import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spo_lab import policy as pol
from spo_lab.errors import ActionSpaceError, RatioOverflowError

finite = st.floats(-50, 50, allow_nan=False)


def test_uniform_categorical_log_prob():
    d = pol.categorical(np.zeros(4))
    for a in range(4):
        assert pol.log_prob(d, a) == pytest.approx(math.log(0.25), abs=1e-15)


def test_standard_normal_log_density_at_mode():
    d = pol.gaussian([0.0], [0.0])
    assert pol.log_prob(d, [0.0]) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)


def test_categorical_masses_sum_to_one():
    rng = np.random.default_rng(0)
    for _ in range(50):
        logits = rng.standard_normal(int(rng.integers(2, 10))) * 3
        d = pol.categorical(logits)
        total = sum(math.exp(pol.log_prob(d, a)) for a in range(logits.size))
        assert abs(total - 1.0) <= 1e-10
        assert abs(pol.probs(d).sum() - 1.0) <= 1e-12


def test_out_of_range_action_raises():
    d = pol.categorical(np.zeros(3))
    with pytest.raises(ActionSpaceError):
        pol.log_prob(d, 3)
    with pytest.raises(ActionSpaceError):
        pol.log_prob(d, -1)
    with pytest.raises(ActionSpaceError):
        pol.log_prob(pol.gaussian([0.0, 0.0], [0.0, 0.0]), [1.0])


def test_entropy_examples():
    assert pol.entropy(pol.categorical([50.0, 0.0, 0.0])) < 1e-10
    for k in (2, 5, 9):
        assert pol.entropy(pol.categorical(np.zeros(k))) == pytest.approx(math.log(k), abs=1e-14)
    assert pol.entropy(pol.gaussian([0.0, 0.0], [0.0, 0.0])) == pytest.approx(2.837877066409345, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(shift=st.lists(finite, min_size=3, max_size=3), log_std=st.lists(st.floats(-3, 1), min_size=3, max_size=3))
def test_gaussian_entropy_ignores_mean(shift, log_std):
    assert pol.entropy(pol.gaussian(np.zeros(3), log_std)) == pol.entropy(pol.gaussian(shift, log_std))


def test_log_std_is_clamped():
    d = pol.gaussian([0.0, 0.0], [-100.0, 100.0])
    assert d.log_std.tolist() == [-20.0, 2.0]


def test_degenerate_categorical_always_samples_zero():
    with np.errstate(divide="ignore"):
        d = pol.categorical(np.log([1.0, 0.0, 0.0]))
    rng = np.random.default_rng(1)
    assert all(pol.sample(d, rng).action == 0 for _ in range(1000))


def test_gaussian_sampling_is_reproducible():
    d = pol.gaussian([0.3, -1.0], [0.1, -0.5])
    a = pol.sample(d, np.random.default_rng(42))
    b = pol.sample(d, np.random.default_rng(42))
    assert np.array_equal(a.action, b.action)
    assert a.log_prob == pol.log_prob(d, a.action)


def test_categorical_sample_frequencies():
    d = pol.categorical(np.log([0.5, 0.3, 0.2]))
    rng = np.random.default_rng(2)
    n = 100_000
    counts = np.bincount([pol.sample(d, rng).action for _ in range(n)], minlength=3)
    assert np.all(np.abs(counts / n - [0.5, 0.3, 0.2]) <= 0.01)


def test_batched_sampling_matches_frequencies():
    d = pol.categorical(np.tile(np.log([0.5, 0.3, 0.2]), (100_000, 1)))
    s = pol.sample(d, np.random.default_rng(3))
    assert np.all(np.abs(np.bincount(s.action, minlength=3) / 100_000 - [0.5, 0.3, 0.2]) <= 0.01)
    assert np.array_equal(s.log_prob, pol.log_prob(d, s.action))


def test_ratio_examples():
    assert pol.ratio(-1.3, -1.3) == 1.0
    assert pol.ratio(-0.7 + math.log(1.2), -0.7) == pytest.approx(1.2, rel=1e-14)


@settings(max_examples=200)
@given(a=finite, b=finite)
def test_ratio_reciprocal(a, b):
    assert pol.ratio(a, b) * pol.ratio(b, a) == pytest.approx(1.0, abs=1e-12)


def test_ratio_overflow_carries_both_log_probs():
    with pytest.raises(RatioOverflowError) as info:
        pol.ratio(750.0, 10.0)
    assert info.value.new_log_prob == 750.0 and info.value.old_log_prob == 10.0


def test_categorical_log_prob_gradient_is_onehot_minus_softmax():
    rng = np.random.default_rng(4)
    logits = rng.standard_normal(5)
    d = pol.categorical(logits)
    p = np.exp(logits) / np.exp(logits).sum()
    assert np.allclose(pol.log_prob_grad_logits(d, 2), np.eye(5)[2] - p, atol=1e-15)
    h = 1e-6
    fd = [(pol.log_prob(pol.categorical(logits + h * e), 2) - pol.log_prob(pol.categorical(logits - h * e), 2)) / (2 * h)
          for e in np.eye(5)]
    assert np.allclose(pol.log_prob_grad_logits(d, 2), fd, atol=1e-8)


def test_gaussian_log_prob_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    mean, log_std, x = rng.standard_normal(3), rng.uniform(-1, 0.5, 3), rng.standard_normal(3)
    gm, gs = pol.log_prob_grad_gaussian(pol.gaussian(mean, log_std), x)
    h = 1e-6
    for j, e in enumerate(np.eye(3)):
        fdm = (pol.log_prob(pol.gaussian(mean + h * e, log_std), x) - pol.log_prob(pol.gaussian(mean - h * e, log_std), x)) / (2 * h)
        fds = (pol.log_prob(pol.gaussian(mean, log_std + h * e), x) - pol.log_prob(pol.gaussian(mean, log_std - h * e), x)) / (2 * h)
        assert abs(gm[j] - fdm) <= 1e-5 and abs(gs[j] - fds) <= 1e-5


def test_entropy_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    logits = rng.standard_normal(4)
    h = 1e-6
    fd = [(pol.entropy(pol.categorical(logits + h * e)) - pol.entropy(pol.categorical(logits - h * e))) / (2 * h)
          for e in np.eye(4)]
    assert np.allclose(pol.entropy_grad_logits(pol.categorical(logits)), fd, atol=1e-8)


def test_mode():
    assert pol.mode(pol.categorical([0.1, 2.0, -1.0])) == 1
    assert np.array_equal(pol.mode(pol.gaussian([0.5, -0.5], [0.0, 0.0])), [0.5, -0.5])
