"""Sampling scores for the seven subsampling methods and the shared sampler.

Every method produces a positive score per row; :func:`sample_coreset` turns
scores into probabilities ``p = s / sum(s)``, draws ``m`` rows i.i.d. with
replacement and weights each draw by ``1 / (p * n)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .data import LabeledDataset
from .errors import (ConfigError, DegeneratePilotError, SingularInformationError)
from .glm import FitConfig, FitResult, fit_weighted, predict_proba
from .linalg import leverage_scores, lewis_weights

log = logging.getLogger(__name__)

METHODS = ("uniform", "kmeans", "leverage", "monotonic", "lewis", "osmac_vc", "osmac_mse")
# methods whose scores depend on a random stream
RANDOMIZED = frozenset({"kmeans", "osmac_vc", "osmac_mse"})

SCORE_FLOOR = 1e-12
MONOTONIC_CONST = 132.0
KMEANS_MAX_ITER = 25
KMEANS_RTOL = 1e-4
PILOT_RETRIES = 10
OSMAC_MAX_COND = 1e12


@dataclass(frozen=True)
class SamplerConfig:
    method: str
    kmeans_k: int = 6
    kmeans_R: float = 1.0
    kmeans_cluster_subsample: Optional[int] = None
    lewis_t: int = 5
    pilot_fraction: float = 0.5
    leverage_binning: bool = False
    lambda_for_monotonic: Optional[float] = None
    label: Optional[str] = None  # name in output files; defaults to ``method``

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if self.kmeans_k < 1:
            raise ConfigError("kmeans_k must be >= 1")
        if not self.kmeans_R > 0:
            raise ConfigError("kmeans_R must be positive")
        if self.kmeans_cluster_subsample is not None and self.kmeans_cluster_subsample < 1:
            raise ConfigError("kmeans_cluster_subsample must be >= 1")
        if self.lewis_t < 1:
            raise ConfigError("lewis_t must be >= 1")
        if not 0 < self.pilot_fraction <= 1:
            raise ConfigError("pilot_fraction must lie in (0, 1]")
        if self.lambda_for_monotonic is not None and not self.lambda_for_monotonic > 0:
            raise ConfigError("lambda_for_monotonic must be positive")


@dataclass(frozen=True, eq=False)
class ScoreVector:
    s: np.ndarray
    method: str

    def __post_init__(self):
        s = np.array(self.s, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("scores must be a nonempty vector")
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("scores must be finite and strictly positive")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @classmethod
    def from_raw(cls, raw, method: str) -> "ScoreVector":
        """Clamp zero (or negative round-off) scores up to ``1e-12 * max``."""
        raw = np.asarray(raw, dtype=float)
        if not np.all(np.isfinite(raw)):
            raise SingularInformationError(f"{method}: non-finite raw scores")
        top = float(raw.max())
        if top <= 0:
            log.warning("%s: all raw scores are zero, falling back to uniform", method)
            return cls(np.ones_like(raw), method)
        return cls(np.maximum(raw, SCORE_FLOOR * top), method)

    @property
    def n(self) -> int:
        return self.s.shape[0]

    def probabilities(self) -> np.ndarray:
        return self.s / self.s.sum()


@dataclass(frozen=True, eq=False)
class CoresetSample:
    indices: np.ndarray
    weights: np.ndarray
    probabilities_used: np.ndarray

    @property
    def m(self) -> int:
        return self.indices.shape[0]


def sample_coreset(scores: ScoreVector, m: int, seed) -> CoresetSample:
    """Draw ``m`` rows with replacement from ``p = s / sum(s)``."""
    if m < 1:
        raise ConfigError(f"coreset size must be >= 1, got {m}")
    p = scores.probabilities()
    n = p.shape[0]
    rng = np.random.default_rng(seed)
    indices = rng.choice(n, size=m, replace=True, p=p)
    weights = 1.0 / (p[indices] * n)
    return CoresetSample(indices, weights, p)


# --- uniform -----------------------------------------------------------------

def scores_uniform(ds: LabeledDataset) -> ScoreVector:
    return ScoreVector(np.ones(ds.n), "uniform")


# --- k-means -----------------------------------------------------------------

def _sq_dists(Z, centers):
    out = np.empty((Z.shape[0], centers.shape[0]))
    for j, c in enumerate(centers):
        diff = Z - c
        out[:, j] = np.einsum("ij,ij->i", diff, diff)
    return out


def kmeans(Z, k: int, rng, max_iter: int = KMEANS_MAX_ITER, rtol: float = KMEANS_RTOL):
    """k-means++ seeding followed by Lloyd iterations; returns the (k, d) centers.

    Stops after ``max_iter`` Lloyd steps or once inertia improves by less than
    ``rtol`` relative. Empty clusters keep their previous center.
    """
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    centers = np.empty((k, Z.shape[1]))
    centers[0] = Z[rng.integers(n)]
    closest = _sq_dists(Z, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        idx = rng.choice(n, p=closest / total) if total > 0 else rng.integers(n)
        centers[j] = Z[idx]
        closest = np.minimum(closest, _sq_dists(Z, centers[j:j + 1])[:, 0])

    prev = np.inf
    for _ in range(max_iter):
        d2 = _sq_dists(Z, centers)
        labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(n), labels].sum())
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = Z[members].mean(axis=0)
        if prev == 0.0 or (np.isfinite(prev) and (prev - inertia) <= rtol * prev):
            break
        prev = inertia
    return centers


def scores_kmeans(ds: LabeledDataset, k: int = 6, R: float = 1.0,
                  cluster_subsample: Optional[int] = None, seed=0) -> ScoreVector:
    """Sensitivity upper bounds from a k-means clustering of ``Z_i = y_i x_i``.

    ``s_i = n / (1 + sum_j |G_j^(-i)| exp(-R ||mean(G_j^(-i)) - Z_i||))`` where
    the ``(-i)`` superscript removes row i from its own cluster only.
    """
    n = ds.n
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of rows n={n}")
    if not R > 0:
        raise ConfigError("R must be positive")
    Z = ds.X * ds.y[:, None].astype(float)
    rng = np.random.default_rng(seed)
    size = min(n, 10000) if cluster_subsample is None else min(n, cluster_subsample)
    sub = Z if size == n else Z[rng.choice(n, size=size, replace=False)]
    centers = kmeans(sub, k, rng)

    labels = np.argmin(_sq_dists(Z, centers), axis=1)
    counts = np.bincount(labels, minlength=k).astype(float)
    sums = np.zeros((k, Z.shape[1]))
    np.add.at(sums, labels, Z)
    means = np.divide(sums, counts[:, None], out=np.zeros_like(sums), where=counts[:, None] > 0)

    total = np.zeros(n)
    for j in range(k):
        if counts[j] == 0:
            continue
        diff = Z - means[j]
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        own = labels == j
        total[~own] += counts[j] * np.exp(-R * dist[~own])
        c = counts[j]
        if c > 1:
            # mean without Z_i is (c*mean - Z_i)/(c-1), so its distance to Z_i scales by c/(c-1)
            total[own] += (c - 1) * np.exp(-R * dist[own] * (c / (c - 1)))
    return ScoreVector.from_raw(n / (1.0 + total), "kmeans")


# --- leverage / Lewis --------------------------------------------------------

def _features(ds: LabeledDataset) -> np.ndarray:
    return ds.X[:, 1:] if ds.has_intercept else ds.X


def bin_probabilities(p) -> np.ndarray:
    """Round each probability up to ``min(p) * 2^k`` and renormalize."""
    p = np.asarray(p, dtype=float)
    pmin = p.min()
    # the small slack keeps exact powers of two from rounding up a bin
    exps = np.ceil(np.log2(p / pmin) - 1e-12)
    binned = pmin * np.exp2(np.maximum(exps, 0.0))
    return binned / binned.sum()


def scores_leverage(ds: LabeledDataset, binning: bool = False) -> ScoreVector:
    """Root leverage scores of ``Z_i = -y_i x_i`` (intercept column removed) plus ``1/n``."""
    Z = -_features(ds) * ds.y[:, None]
    tau = leverage_scores(Z)
    s = np.sqrt(np.clip(tau, 0.0, None)) + 1.0 / ds.n
    if binning:
        s = bin_probabilities(s / s.sum())
    return ScoreVector.from_raw(s, "leverage")


def scores_lewis(ds: LabeledDataset, t: int = 5) -> ScoreVector:
    Z = _features(ds) * ds.y[:, None]
    return ScoreVector.from_raw(lewis_weights(Z, t), "lewis")


# --- monotonic ---------------------------------------------------------------

def scores_monotonic(ds: LabeledDataset, lambda2: float) -> ScoreVector:
    """``(132 sqrt(k) ||x_(i)|| + 2) / i`` over rows sorted by decreasing norm, ``k = 1/(2 lambda2)``.

    Ties in the norm keep original row order.
    """
    if not lambda2 > 0:
        raise ConfigError("the monotonic method needs lambda2 > 0")
    k = 1.0 / (2.0 * lambda2)
    norms = np.linalg.norm(ds.X, axis=1)
    order = np.argsort(-norms, kind="stable")
    position = np.arange(1, ds.n + 1, dtype=float)
    s = np.empty(ds.n)
    s[order] = (MONOTONIC_CONST * math.sqrt(k) * norms[order] + 2.0) / position
    return ScoreVector.from_raw(s, "monotonic")


# --- OSMAC -------------------------------------------------------------------

def pilot_weights(y) -> np.ndarray:
    """Per-row weights ``n / (2 n_class)`` so each class carries total weight n/2."""
    y = np.asarray(y)
    n = y.shape[0]
    n_pos = int(np.sum(y == 1))
    counts = np.where(y == 1, n_pos, n - n_pos)
    return n / (2.0 * counts)


def pilot_estimate(ds: LabeledDataset, m_pilot: int, seed, fit: FitConfig = FitConfig()) -> FitResult:
    """Class-balanced fit on a uniform subsample of ``m_pilot`` rows."""
    if m_pilot < 2:
        raise ConfigError(f"pilot size must be >= 2, got {m_pilot}")
    rng = np.random.default_rng(seed)
    for _ in range(PILOT_RETRIES):
        idx = rng.choice(ds.n, size=m_pilot, replace=m_pilot > ds.n)
        y = ds.y[idx]
        if np.any(y == 1) and np.any(y == -1):
            return fit_weighted(ds.take(idx), pilot_weights(y), fit)
    raise DegeneratePilotError(f"pilot of {m_pilot} rows drew a single class {PILOT_RETRIES} times")


def osmac_information(ds: LabeledDataset, beta) -> np.ndarray:
    p = predict_proba(beta, ds.X)
    return (ds.X * (p * (1 - p))[:, None]).T @ ds.X / ds.n


def scores_osmac(ds: LabeledDataset, pilot_beta, variant: str = "vc") -> ScoreVector:
    """Residual-based scores ``|y01 - p| * ||x||`` (vc) or ``|y01 - p| * ||M^-1 x||`` (mse)."""
    if variant not in ("vc", "mse"):
        raise ConfigError(f"unknown OSMAC variant {variant!r}")
    y01 = (ds.y + 1) / 2.0
    p = predict_proba(pilot_beta, ds.X)
    resid = np.abs(y01 - p)
    if variant == "vc":
        return ScoreVector.from_raw(resid * np.linalg.norm(ds.X, axis=1), "osmac_vc")
    M = osmac_information(ds, pilot_beta)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > OSMAC_MAX_COND:
        raise SingularInformationError(f"OSMAC information matrix condition number {cond:.3g}")
    V = scipy.linalg.cho_solve(scipy.linalg.cho_factor(M), ds.X.T)
    return ScoreVector.from_raw(resid * np.linalg.norm(V, axis=0), "osmac_mse")


# --- dispatch ----------------------------------------------------------------

def pilot_size(m: int, fraction: float) -> int:
    return max(2, math.ceil(fraction * m))


def compute_scores(ds: LabeledDataset, cfg: SamplerConfig, *, m: int, seed=0,
                   fit: FitConfig = FitConfig(), allow_fallback: bool = False):
    """Scores for ``cfg.method``; returns ``(ScoreVector, fallback_used)``.

    ``m`` matters only for the OSMAC pilot size. With ``allow_fallback`` a
    singular OSMAC information matrix degrades ``osmac_mse`` to ``osmac_vc``.
    """
    method = cfg.method
    if method == "uniform":
        return scores_uniform(ds), False
    if method == "kmeans":
        return scores_kmeans(ds, cfg.kmeans_k, cfg.kmeans_R, cfg.kmeans_cluster_subsample, seed), False
    if method == "leverage":
        return scores_leverage(ds, cfg.leverage_binning), False
    if method == "lewis":
        return scores_lewis(ds, cfg.lewis_t), False
    if method == "monotonic":
        lam = cfg.lambda_for_monotonic if cfg.lambda_for_monotonic is not None else fit.lambda2
        return scores_monotonic(ds, lam), False
    pilot = pilot_estimate(ds, pilot_size(m, cfg.pilot_fraction), seed, fit)
    variant = method.split("_", 1)[1]
    try:
        return scores_osmac(ds, pilot.beta, variant), False
    except SingularInformationError as exc:
        if not (allow_fallback and variant == "mse"):
            raise
        log.warning("osmac_mse on %s: %s; using osmac_vc scores", ds.name, exc)
        return scores_osmac(ds, pilot.beta, "vc"), True
