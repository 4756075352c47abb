import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lrcoreset.data import (LabeledDataset, PreprocessSpec, add_intercept, load_csv,
                            min_max_scale, read_prepared, split_dataset, split_indices,
                            synthesize_logistic, write_prepared)
from lrcoreset.errors import ConfigError, DataError, LabelError, UsageError

from conftest import write_census_like


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


# --- LabeledDataset ----------------------------------------------------------

def test_dataset_rejects_bad_labels_and_nan():
    with pytest.raises(LabelError):
        LabeledDataset(np.zeros((2, 1)), [0, 1])
    with pytest.raises(DataError):
        LabeledDataset(np.array([[np.nan], [1.0]]), [1, -1])
    with pytest.raises(DataError):
        LabeledDataset(np.array([[2.0], [1.0]]), [1, -1], has_intercept=True)


def test_dataset_is_read_only():
    ds = LabeledDataset(np.zeros((2, 1)), [1, -1])
    with pytest.raises(ValueError):
        ds.X[0, 0] = 1.0


# --- min_max_scale -----------------------------------------------------------

def test_scale_examples():
    np.testing.assert_allclose(min_max_scale([0, 5, 10]), [-1, 0, 1], atol=1e-15)
    np.testing.assert_allclose(min_max_scale([2, 4], (0, 1)), [0, 1], atol=1e-15)
    np.testing.assert_array_equal(min_max_scale([3, 3, 3]), [-1, -1, -1])
    # hand evaluation of (x - 1) / 4 * 2 - 1
    np.testing.assert_allclose(min_max_scale([1, 2, 5]), [-1, -0.5, 1], atol=1e-15)


def test_scale_rejects_non_finite():
    with pytest.raises(DataError):
        min_max_scale([1.0, np.inf])


finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(arrays(float, st.integers(1, 30), elements=finite))
def test_scale_is_idempotent(col):
    once = min_max_scale(col)
    np.testing.assert_allclose(min_max_scale(once), once, atol=1e-12)


@given(arrays(float, st.integers(1, 30), elements=finite),
       st.tuples(st.floats(-10, 0), st.floats(0.5, 10)))
def test_scale_hits_range(col, rng_):
    out = min_max_scale(col, rng_)
    assert out.min() == pytest.approx(rng_[0], abs=1e-9)
    if np.ptp(col) > 0:
        assert out.max() == pytest.approx(rng_[1], abs=1e-9)


# --- add_intercept -----------------------------------------------------------

def test_add_intercept_examples():
    ds = add_intercept(LabeledDataset([[2.0]], [1]))
    np.testing.assert_array_equal(ds.X, [[1.0, 2.0]])
    ds3 = add_intercept(LabeledDataset(np.arange(6.0).reshape(3, 2), [1, -1, 1]))
    assert ds3.X.shape == (3, 3)
    np.testing.assert_array_equal(ds3.X[:, 0], [1, 1, 1])
    with pytest.raises(UsageError):
        add_intercept(ds3)


# --- synthesize_logistic -----------------------------------------------------

def test_synthetic_zero_beta_is_balanced():
    n = 20000
    ds = synthesize_logistic(n, 3, np.zeros(3), seed=1)
    assert abs(ds.positive_fraction() - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_synthetic_is_deterministic():
    a = synthesize_logistic(100, 3, [1, 2, 3], seed=5)
    b = synthesize_logistic(100, 3, [1, 2, 3], seed=5)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.y, b.y)


def test_synthetic_strong_signal():
    beta = np.zeros(4)
    beta[0] = 10.0
    ds = synthesize_logistic(10000, 4, beta, seed=2)
    sel = ds.X[:, 0] > 1
    # sigma(10 x) > sigma(10) = 0.99995 on this subset
    assert np.mean(ds.y[sel] == 1) > 0.99


# --- split -------------------------------------------------------------------

def test_split_sizes():
    train, test = split_indices(1000, 0.05, seed=0)
    assert len(test) == 50 and len(train) == 950
    assert not set(train) & set(test)
    tr, te = split_indices(32561, 0.05, seed=0)
    assert len(tr) == 30932 and len(te) == 1629


def test_split_tail_mode():
    train, test = split_indices(10, 0.2, seed=0, mode="tail")
    np.testing.assert_array_equal(test, [8, 9])
    np.testing.assert_array_equal(train, np.arange(8))


@given(st.integers(1, 500), st.floats(0, 0.99), st.integers(0, 2**32 - 1))
@settings(max_examples=50)
def test_split_partition(n, frac, seed):
    train, test = split_indices(n, frac, seed)
    assert len(test) == math.ceil(frac * n - 1e-9)
    np.testing.assert_array_equal(np.sort(np.concatenate([train, test])), np.arange(n))
    again = split_indices(n, frac, seed)
    np.testing.assert_array_equal(again[0], train)
    np.testing.assert_array_equal(again[1], test)


# --- load_csv ----------------------------------------------------------------

CSV = """num,cat,label
0,a,yes
5,b,no
10,a,yes
"""


def test_load_csv_encodes_and_scales(tmp_path):
    path = _write(tmp_path / "t.csv", CSV)
    spec = PreprocessSpec("label", "yes", ["num"], ["cat"], test_fraction=0.0)
    split = load_csv(path, spec, seed=0)
    np.testing.assert_allclose(split.train.X, [[-1, 1, 0], [0, 0, 1], [1, 1, 0]], atol=1e-15)
    np.testing.assert_array_equal(split.train.y, [1, -1, 1])
    assert split.train.feature_names == ("num", "cat=a", "cat=b")
    assert split.test.n == 0


def test_load_csv_onehot_two_categories(tmp_path):
    path = _write(tmp_path / "t.csv", "c,label\na,1\nb,0\na,1\n")
    split = load_csv(path, PreprocessSpec("label", "1", (), ["c"], test_fraction=0.0), seed=0)
    np.testing.assert_array_equal(split.train.X, [[1, 0], [0, 1], [1, 0]])


def test_load_csv_test_uses_train_statistics(tmp_path):
    rows = "\n".join(f"{v},{'p' if v % 2 else 'q'}" for v in range(20))
    path = _write(tmp_path / "t.csv", "x,label\n" + rows + "\n")
    spec = PreprocessSpec("label", "p", ["x"], test_fraction=0.25, split_mode="tail")
    split = load_csv(path, spec, seed=0)
    # train holds 0..14, so 15..19 map above hi without clamping
    np.testing.assert_allclose(split.train.X[:, 0].min(), -1)
    np.testing.assert_allclose(split.train.X[:, 0].max(), 1)
    np.testing.assert_allclose(split.test.X[:, 0], -1 + 2 * np.arange(15, 20) / 14)


def test_load_csv_errors(tmp_path):
    path = _write(tmp_path / "t.csv", CSV)
    with pytest.raises(ConfigError):
        load_csv(path, PreprocessSpec("label", "yes", ["missing"]), seed=0)
    bad = _write(tmp_path / "bad.csv", "num,label\n1,yes\nx,no\n")
    with pytest.raises(DataError, match=r"line 3.*'num'"):
        load_csv(bad, PreprocessSpec("label", "yes", ["num"]), seed=0)
    three = _write(tmp_path / "three.csv", "num,label\n1,yes\n2,no\n3,maybe\n")
    with pytest.raises(LabelError):
        load_csv(three, PreprocessSpec("label", "yes", ["num"]), seed=0)
    with pytest.raises(FileNotFoundError):
        load_csv(str(tmp_path / "nope.csv"), PreprocessSpec("label", "yes"), seed=0)


def test_preprocess_spec_validation():
    with pytest.raises(ConfigError):
        PreprocessSpec("label", "1", ["a"], ["a"])
    with pytest.raises(ConfigError):
        PreprocessSpec("label", "1", ["label"])
    with pytest.raises(ConfigError):
        PreprocessSpec("label", "1", scale_range=(1, 1))


def test_load_csv_deterministic(tmp_path):
    rows = "\n".join(f"{i},{'abc'[i % 3]},{i % 2}" for i in range(100))
    path = _write(tmp_path / "t.csv", "x,c,label\n" + rows + "\n")
    spec = PreprocessSpec("label", "1", ["x"], ["c"])
    a, b = load_csv(path, spec, seed=4), load_csv(path, spec, seed=4)
    np.testing.assert_array_equal(a.train.X, b.train.X)
    np.testing.assert_array_equal(a.test.X, b.test.X)
    onehot = a.train.X[:, 1:]
    np.testing.assert_array_equal(onehot.sum(axis=1), 1)


def test_census_shaped_file(tmp_path):
    path = str(tmp_path / "adult.data")
    write_census_like(path)
    header = ["age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
              "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
              "hours-per-week", "native-country", "income"]
    spec = PreprocessSpec("income", ">50K",
                          ["age", "fnlwgt", "education-num", "capital-gain", "capital-loss",
                           "hours-per-week"],
                          ["workclass", "education", "marital-status", "occupation",
                           "relationship", "race", "sex", "native-country"],
                          header=header)
    split = load_csv(path, spec, seed=0, name="census")
    summary = write_prepared(split, str(tmp_path / "census"), 6)
    assert summary["n"] == 30932 and summary["n_test"] == 1629
    assert summary["pct_pos_all"] == pytest.approx(100 * 7841 / 32561, abs=1e-4)
    on_disk = json.loads((tmp_path / "census" / "summary.json").read_text())
    assert on_disk == summary


# --- prepared files ----------------------------------------------------------

def test_prepared_round_trip(tmp_path):
    full = synthesize_logistic(60, 3, [1, 0, -1], seed=0, name="rt")
    split = split_dataset(full, 0.1, seed=0)
    write_prepared(split, str(tmp_path / "rt"), 3)
    back = read_prepared(str(tmp_path / "rt"))
    np.testing.assert_array_equal(back.train.X, split.train.X)
    np.testing.assert_array_equal(back.test.y, split.test.y)
    first = (tmp_path / "rt" / "train.csv").read_bytes()
    write_prepared(split, str(tmp_path / "rt"), 3)
    assert (tmp_path / "rt" / "train.csv").read_bytes() == first


def test_load_csv_drop_first(tmp_path):
    path = _write(tmp_path / "t.csv", "c,label\nb,1\na,0\nc,1\nb,0\n")
    split = load_csv(path, PreprocessSpec("label", "1", (), ["c"], test_fraction=0.0,
                                          drop_first=True), seed=0)
    assert split.train.feature_names == ("c=a", "c=c")
    np.testing.assert_array_equal(split.train.X, [[0, 0], [1, 0], [0, 1], [0, 0]])


def test_load_csv_matches_label_text_exactly(tmp_path):
    # SUSY writes labels as full-precision exponent strings
    path = _write(tmp_path / "s.csv", "1.000000000000000000e+00,0.5\n0.000000000000000000e+00,0.1\n")
    spec = PreprocessSpec("label", "1.000000000000000000e+00", ["x"], header=["label", "x"],
                          test_fraction=0.0)
    np.testing.assert_array_equal(load_csv(path, spec, seed=0).train.y, [1, -1])
