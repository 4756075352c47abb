import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrcoreset.data import LabeledDataset, add_intercept, synthesize_logistic
from lrcoreset.errors import ShapeError
from lrcoreset.metrics import (MetricSet, coefficient_mse, evaluate, relative_nll_error,
                               relative_roc, support_accuracy)


def brute_auc(scores, y):
    pos = [s for s, t in zip(scores, y) if t == 1]
    neg = [s for s, t in zip(scores, y) if t != 1]
    total = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p, q in itertools.product(pos, neg))
    return total / (len(pos) * len(neg))


@pytest.fixture(scope="module")
def split_pair():
    train = add_intercept(synthesize_logistic(300, 3, [1.0, -2.0, 0.5], seed=0))
    test = add_intercept(synthesize_logistic(80, 3, [1.0, -2.0, 0.5], seed=1))
    return train, test


def test_identity_values(split_pair):
    train, test = split_pair
    beta = np.array([0.1, 1.0, -2.0, 0.5])
    ms = evaluate(beta, beta, train, test, with_support=True)
    assert ms == MetricSet(0.0, 0.0, 1.0, 1.0)


def test_rel_nll_from_known_losses():
    # beta_full = 0 gives n log 2; solve for the beta_c whose loss is 10% higher
    X = np.array([[1.0], [1.0]])
    ds = LabeledDataset(X, [1, -1])
    n_log2 = 2 * math.log(2)
    # find b with nll = 1.1 * n log 2: log(1+e^-b) + log(1+e^b) = 1.1 * 2 log 2
    target = 1.1 * n_log2
    lo, hi = 0.0, 10.0
    for _ in range(200):
        mid = (lo + hi) / 2
        val = math.log1p(math.exp(-mid)) + math.log1p(math.exp(mid))
        lo, hi = (mid, hi) if val < target else (lo, mid)
    assert relative_nll_error([lo], [0.0], ds) == pytest.approx(0.1, abs=1e-12)


def test_rel_nll_row_order_invariant(split_pair):
    train, _ = split_pair
    perm = np.random.default_rng(0).permutation(train.n)
    a, b = np.array([0.0, 1.0, -1.0, 0.3]), np.array([0.2, 0.8, -1.5, 0.0])
    shuffled = train.take(perm)
    assert relative_nll_error(a, b, shuffled) == pytest.approx(relative_nll_error(a, b, train),
                                                               rel=1e-12)


def test_coef_mse_examples():
    assert coefficient_mse([1, 2], [1, 2]) == 0.0
    assert coefficient_mse([1, 0], [0, 1]) == 2.0
    assert coefficient_mse([3, 4], [0, 0]) == 25.0
    with pytest.raises(ShapeError):
        coefficient_mse([1], [1, 2])


def test_rel_roc_scaling_and_negation():
    X = np.array([[0.3], [-1.2], [0.8], [0.1], [-0.4], [2.0]])
    y = np.array([1, -1, -1, 1, -1, 1])
    test = LabeledDataset(X, y)
    beta = np.array([1.0])
    assert relative_roc(beta, beta, test) == 1.0
    assert relative_roc(2 * beta, beta, test) == 1.0
    a = brute_auc(X[:, 0], y)
    assert relative_roc(-beta, beta, test) == pytest.approx((1 - a) / a, abs=1e-15)


@given(st.integers(0, 10_000), st.floats(0.01, 100))
@settings(max_examples=30)
def test_rel_roc_positive_scaling_invariant(seed, c):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((12, 2))
    y = np.array([1, -1] * 6)
    test = LabeledDataset(X, y)
    b1, b2 = rng.standard_normal(2), rng.standard_normal(2)
    assert relative_roc(c * b1, b2, test) == pytest.approx(relative_roc(b1, b2, test), rel=1e-12)


def test_support_accuracy_examples():
    full = np.array([0.0, 1.0, 0.0, -2.0])
    assert support_accuracy(full, full, has_intercept=False) == 1.0
    beta_full = np.zeros(10)
    beta_full[[1, 4, 7]] = [1.0, -1.0, 0.5]
    assert support_accuracy(np.zeros(10), beta_full, has_intercept=False) == pytest.approx(0.7)
    assert support_accuracy([1, 1, 0, 0], [0, 0, 1, 1], has_intercept=False) == 0.0


def test_support_accuracy_skips_intercept_and_noise():
    assert support_accuracy([5.0, 1e-9, 1.0], [0.0, 0.0, 2.0]) == 1.0
