"""Datasets, CSV ingestion and preprocessing.

Labels are stored as -1/+1 everywhere. Categorical columns are one-hot
encoded with the category set taken from the whole file, numeric columns are
min-max scaled with statistics from the training rows only.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import pandas as pd
from scipy.special import expit

from .errors import ConfigError, DataError, LabelError, UsageError

ColumnId = Union[str, int]

LABEL_HEADER = "label"


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Dense design matrix with -1/+1 labels.

    Arrays are copied and flagged read-only on construction, so instances can
    be shared freely between threads and worker processes.
    """

    X: np.ndarray
    y: np.ndarray
    has_intercept: bool = False
    name: str = "dataset"
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True)
        y = np.array(self.y, copy=True)
        if X.ndim != 2:
            raise DataError(f"X must be 2-dimensional, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DataError(f"y must have length {X.shape[0]}, got shape {y.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("X contains non-finite entries")
        if not np.all((y == 1) | (y == -1)):
            raise LabelError("labels must be -1 or +1")
        y = y.astype(np.int8)
        if self.has_intercept and (X.shape[1] == 0 or not np.all(X[:, 0] == 1.0)):
            raise DataError("has_intercept is set but column 0 is not all ones")
        if self.feature_names is not None and len(self.feature_names) != X.shape[1]:
            raise DataError("feature_names length does not match number of columns")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def take(self, indices) -> "LabeledDataset":
        """Rows ``indices`` (repeats allowed) as a new dataset."""
        indices = np.asarray(indices, dtype=np.intp)
        return LabeledDataset(self.X[indices], self.y[indices], self.has_intercept,
                              self.name, self.feature_names)

    def positive_fraction(self) -> float:
        return float(np.mean(self.y == 1)) if self.n else float("nan")


@dataclass(frozen=True)
class SplitDataset:
    train: LabeledDataset
    test: LabeledDataset

    def __post_init__(self):
        if self.train.d != self.test.d:
            raise DataError(f"train has {self.train.d} columns, test has {self.test.d}")


@dataclass(frozen=True)
class PreprocessSpec:
    """How to turn a delimited text file into a :class:`SplitDataset`.

    ``header`` supplies column names for files without a header row (the UCI
    census file, for instance). ``split_mode="tail"`` reserves the last rows
    of the file as the test set instead of a seeded shuffle. ``drop_first``
    omits the indicator of each categorical column's first category.
    """

    label_column: ColumnId
    positive_label: str
    numeric_columns: tuple = ()
    categorical_columns: tuple = ()
    scale_range: tuple = (-1.0, 1.0)
    test_fraction: float = 0.05
    delimiter: str = ","
    header: Optional[tuple] = None
    split_mode: str = "shuffle"
    drop_first: bool = False

    def __post_init__(self):
        object.__setattr__(self, "numeric_columns", tuple(self.numeric_columns))
        object.__setattr__(self, "categorical_columns", tuple(self.categorical_columns))
        object.__setattr__(self, "scale_range", tuple(float(v) for v in self.scale_range))
        if self.header is not None:
            object.__setattr__(self, "header", tuple(self.header))
        numeric, categorical = set(self.numeric_columns), set(self.categorical_columns)
        if numeric & categorical:
            raise ConfigError(f"columns both numeric and categorical: {sorted(map(str, numeric & categorical))}")
        if self.label_column in numeric | categorical:
            raise ConfigError("label column listed as a feature column")
        if len(self.scale_range) != 2 or not self.scale_range[0] < self.scale_range[1]:
            raise ConfigError(f"scale_range must be (lo, hi) with lo < hi, got {self.scale_range}")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must lie in [0, 1), got {self.test_fraction}")
        if self.split_mode not in ("shuffle", "tail"):
            raise ConfigError(f"unknown split_mode {self.split_mode!r}")


def min_max_scale(column, range=(-1.0, 1.0)) -> np.ndarray:
    """Affinely map ``column`` so its min goes to ``range[0]`` and its max to ``range[1]``.

    A constant column maps to ``range[0]``.
    """
    column = np.asarray(column, dtype=float)
    if column.size == 0:
        raise DataError("cannot scale an empty column")
    if not np.all(np.isfinite(column)):
        raise DataError("column contains non-finite values")
    return _scale_with(column, column.min(), column.max(), range)


def _scale_with(values, vmin, vmax, range):
    lo, hi = float(range[0]), float(range[1])
    if vmax == vmin:
        return np.full(values.shape, lo)
    return lo + (values - vmin) * ((hi - lo) / (vmax - vmin))


def add_intercept(ds: LabeledDataset) -> LabeledDataset:
    if ds.has_intercept:
        raise UsageError(f"dataset {ds.name!r} already has an intercept column")
    X = np.hstack([np.ones((ds.n, 1)), ds.X])
    names = None if ds.feature_names is None else ("(intercept)",) + ds.feature_names
    return LabeledDataset(X, ds.y, True, ds.name, names)


def synthesize_logistic(n: int, d: int, beta_true, seed: int, name: str = "synthetic") -> LabeledDataset:
    """Gaussian design with labels drawn from the logistic model at ``beta_true``."""
    if n < 1 or d < 1:
        raise ConfigError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    beta_true = np.asarray(beta_true, dtype=float)
    if beta_true.shape != (d,):
        raise ConfigError(f"beta_true must have length {d}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    prob = expit(X @ beta_true)
    y = np.where(rng.random(n) < prob, 1, -1)
    return LabeledDataset(X, y, False, name)


def split_indices(n: int, test_fraction: float, seed: int, mode: str = "shuffle"):
    """Disjoint sorted (train, test) row indices with ceil(test_fraction * n) test rows."""
    # guard against 0.05 * n landing a hair above an integer
    n_test = math.ceil(test_fraction * n - 1e-9) if test_fraction > 0 else 0
    if mode == "tail":
        order = np.arange(n)
    else:
        order = np.random.default_rng(seed).permutation(n)
    test = np.sort(order[n - n_test:]) if mode == "tail" else np.sort(order[:n_test])
    train = np.sort(order[:n - n_test]) if mode == "tail" else np.sort(order[n_test:])
    return train, test


def split_dataset(ds: LabeledDataset, test_fraction: float, seed: int) -> SplitDataset:
    train, test = split_indices(ds.n, test_fraction, seed)
    return SplitDataset(ds.take(train), ds.take(test))


def _resolve(columns, ident):
    if isinstance(ident, int) and not isinstance(ident, bool):
        if not 0 <= ident < len(columns):
            raise ConfigError(f"column index {ident} out of range (file has {len(columns)} columns)")
        return columns[ident]
    if ident not in columns:
        raise ConfigError(f"column {ident!r} not found; available: {list(columns)}")
    return ident


def _read_table(path, spec: PreprocessSpec) -> pd.DataFrame:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    kwargs = dict(sep=spec.delimiter, dtype=str, keep_default_na=False,
                  skipinitialspace=True, skip_blank_lines=True, encoding="utf-8")
    try:
        if spec.header is not None:
            df = pd.read_csv(path, header=None, names=list(spec.header), **kwargs)
        else:
            df = pd.read_csv(path, **kwargs)
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot parse delimited text: {exc}") from exc
    df.columns = [str(c).strip() for c in df.columns]
    return df.apply(lambda col: col.str.strip())


def load_csv(path, spec: PreprocessSpec, seed: int, name: Optional[str] = None) -> SplitDataset:
    """Read, encode, split and scale a delimited text file."""
    df = _read_table(path, spec)
    columns = list(df.columns)
    label_col = _resolve(columns, spec.label_column)
    numeric = [_resolve(columns, c) for c in spec.numeric_columns]
    categorical = [_resolve(columns, c) for c in spec.categorical_columns]
    header_lines = 0 if spec.header is not None else 1

    raw_labels = df[label_col].to_numpy()
    positive = str(spec.positive_label)
    others = [v for v in pd.unique(raw_labels) if v != positive]
    if len(others) > 1:
        raise LabelError(f"{path}: label column {label_col!r} has values {others[:5]} besides "
                         f"positive label {positive!r}; expected at most one other value")
    y = np.where(raw_labels == positive, 1, -1)

    numeric_block = np.empty((len(df), len(numeric)))
    for j, col in enumerate(numeric):
        values = pd.to_numeric(df[col], errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(values)
        if bad.any():
            row = int(np.argmax(bad))
            raise DataError(f"{path}: data row {row + 1} (line {row + 1 + header_lines}), "
                            f"column {col!r}: cannot parse {df[col].iloc[row]!r} as a finite number")
        numeric_block[:, j] = values

    names = list(numeric)
    onehot_blocks = []
    for col in categorical:
        values = df[col].to_numpy()
        categories = pd.unique(values)
        if spec.drop_first:
            categories = categories[1:]
        onehot_blocks.append((values[:, None] == categories[None, :]).astype(float))
        names.extend(f"{col}={cat}" for cat in categories)

    train_idx, test_idx = split_indices(len(df), spec.test_fraction, seed, spec.split_mode)
    if len(train_idx) == 0:
        raise DataError(f"{path}: no training rows")
    train_num, test_num = numeric_block[train_idx], numeric_block[test_idx]
    for j in range(len(numeric)):
        vmin, vmax = train_num[:, j].min(), train_num[:, j].max()
        train_num[:, j] = _scale_with(train_num[:, j], vmin, vmax, spec.scale_range)
        test_num[:, j] = _scale_with(test_num[:, j], vmin, vmax, spec.scale_range)

    onehot = np.hstack(onehot_blocks) if onehot_blocks else np.empty((len(df), 0))
    name = name or os.path.splitext(os.path.basename(path))[0]
    train = LabeledDataset(np.hstack([train_num, onehot[train_idx]]), y[train_idx], False, name, names)
    test = LabeledDataset(np.hstack([test_num, onehot[test_idx]]), y[test_idx], False, name, names)
    return SplitDataset(train, test)


def _write_matrix(path, ds: LabeledDataset):
    names = ds.feature_names or tuple(f"x{j}" for j in range(ds.d))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(list(names) + [LABEL_HEADER]) + "\n")
        for row, label in zip(ds.X, ds.y):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")


def summarize(split: SplitDataset, n_numeric: Optional[int] = None) -> dict:
    """Table-2 style summary: rows, features and percent positive."""
    n_all = split.train.n + split.test.n
    pos_all = int(np.sum(split.train.y == 1) + np.sum(split.test.y == 1))
    summary = {
        "name": split.train.name,
        "n": split.train.n,
        "n_test": split.test.n,
        "d": split.train.d,
        "pct_pos": round(100.0 * split.train.positive_fraction(), 4),
        "pct_pos_all": round(100.0 * pos_all / n_all, 4),
    }
    if n_numeric is not None:
        summary["d_numeric"] = n_numeric
    return summary


def write_prepared(split: SplitDataset, directory, n_numeric: Optional[int] = None) -> dict:
    """Write ``train.csv``, ``test.csv`` and ``summary.json`` into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    _write_matrix(os.path.join(directory, "train.csv"), split.train)
    _write_matrix(os.path.join(directory, "test.csv"), split.test)
    summary = summarize(split, n_numeric)
    with open(os.path.join(directory, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _read_matrix(path, name):
    df = pd.read_csv(path, dtype=float, float_precision="round_trip")
    if df.columns[-1] != LABEL_HEADER:
        raise DataError(f"{path}: last column must be {LABEL_HEADER!r}")
    X = df.iloc[:, :-1].to_numpy(dtype=float)
    y = df.iloc[:, -1].to_numpy().astype(int)
    return LabeledDataset(X, y, False, name, tuple(df.columns[:-1]))


def read_prepared(directory, name: Optional[str] = None) -> SplitDataset:
    """Inverse of :func:`write_prepared`."""
    name = name or os.path.basename(os.path.normpath(directory))
    for fname in ("train.csv", "test.csv"):
        if not os.path.exists(os.path.join(directory, fname)):
            raise FileNotFoundError(os.path.join(directory, fname))
    return SplitDataset(_read_matrix(os.path.join(directory, "train.csv"), name),
                        _read_matrix(os.path.join(directory, "test.csv"), name))


def with_intercept(split: SplitDataset) -> SplitDataset:
    return SplitDataset(add_intercept(split.train), add_intercept(split.test))
