"""Quality of a subsampled fit relative to the full-data fit."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import LabeledDataset
from .errors import DegenerateLabelsError, ShapeError
from .glm import nll, roc_auc

SUPPORT_ZERO = 1e-8

METRIC_NAMES = ("rel_nll_error", "coef_mse", "rel_roc", "support_acc")


@dataclass(frozen=True)
class MetricSet:
    rel_nll_error: float
    coef_mse: float
    rel_roc: float
    support_accuracy: Optional[float] = None

    def as_row(self) -> dict:
        return {"rel_nll_error": self.rel_nll_error, "coef_mse": self.coef_mse,
                "rel_roc": self.rel_roc, "support_acc": self.support_accuracy}


def _same_length(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"coefficient vectors differ in shape: {a.shape} vs {b.shape}")
    return a, b


def relative_nll_error(beta_c, beta_full, ds_train: LabeledDataset) -> float:
    ref = nll(beta_full, ds_train)
    if ref <= 0:
        raise DegenerateLabelsError("full-data log-loss is zero; relative error undefined")
    return abs(nll(beta_c, ds_train) - ref) / ref


def coefficient_mse(beta_c, beta_full) -> float:
    """Squared Euclidean distance (not divided by d)."""
    a, b = _same_length(beta_c, beta_full)
    diff = a - b
    return float(diff @ diff)


def relative_roc(beta_c, beta_full, ds_test: LabeledDataset) -> float:
    a, b = _same_length(beta_c, beta_full)
    return roc_auc(ds_test.X @ a, ds_test.y) / roc_auc(ds_test.X @ b, ds_test.y)


def support_accuracy(beta_c, beta_full, has_intercept: bool = True) -> float:
    """Fraction of non-intercept coordinates where both fits agree on zero vs nonzero."""
    a, b = _same_length(beta_c, beta_full)
    if has_intercept:
        a, b = a[1:], b[1:]
    if a.size == 0:
        return 1.0
    return float(np.mean((np.abs(a) > SUPPORT_ZERO) == (np.abs(b) > SUPPORT_ZERO)))


def evaluate(beta_c, beta_full, train: LabeledDataset, test: LabeledDataset,
             with_support: bool = False) -> MetricSet:
    return MetricSet(
        relative_nll_error(beta_c, beta_full, train),
        coefficient_mse(beta_c, beta_full),
        relative_roc(beta_c, beta_full, test),
        support_accuracy(beta_c, beta_full, train.has_intercept) if with_support else None,
    )
