"""Weighted, penalized logistic regression.

The fitted objective is

    J(beta) = 1/(2N) * sum_j w_j f(y_j x_j^T beta) + lambda2 ||beta||_2^2 + lambda1 ||beta||_1

with ``f(t) = log(1 + exp(-t))`` and ``N`` the number of rows unless overridden.
The intercept column, if present, is left out of both penalties.

L2-only problems are solved by damped Newton with Armijo backtracking; an L1
term switches to proximal Newton with a coordinate-descent inner solver, which
produces exact zeros.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.special import expit
from scipy.stats import rankdata

from .data import LabeledDataset
from .errors import DegenerateLabelsError, NumericalError, ShapeError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitConfig:
    lambda2: float = 1e-5
    lambda1: float = 0.0
    tol: float = 1e-8
    max_iter: int = 200

    def __post_init__(self):
        if self.lambda2 < 0 or self.lambda1 < 0:
            raise ValueError("penalties must be nonnegative")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter >= 1")


@dataclass(frozen=True, eq=False)
class FitResult:
    beta: np.ndarray
    converged: bool
    iterations: int
    objective: float
    grad_norm: float
    objective_trace: tuple = ()


def log1pexp_neg(t):
    """f(t) = log(1 + exp(-t)) without overflow."""
    return np.logaddexp(0.0, -t)


def predict_proba(beta, X) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != beta.shape[0]:
        raise ShapeError(f"X has shape {X.shape}, beta has length {beta.shape[0]}")
    return expit(X @ beta)


def nll(beta, ds: LabeledDataset) -> float:
    """Unregularized, unweighted log-loss sum over ``ds``."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (ds.d,):
        raise ShapeError(f"beta has length {beta.shape[0]}, dataset has {ds.d} columns")
    return float(np.sum(log1pexp_neg(ds.y * (ds.X @ beta))))


def roc_auc(scores, y) -> float:
    """Mann-Whitney AUC with midranks for ties."""
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y)
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("ROC-AUC needs both classes")
    ranks = rankdata(scores, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def penalty_mask(d: int, has_intercept: bool) -> np.ndarray:
    mask = np.ones(d)
    if has_intercept:
        mask[0] = 0.0
    return mask


class WeightedObjective:
    """Smooth part of J plus the L1 term, bound to one design matrix."""

    def __init__(self, X, y, weights, lambda2=0.0, lambda1=0.0, has_intercept=False,
                 normalizer: Optional[float] = None):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.w = np.asarray(weights, dtype=float)
        m = self.X.shape[0]
        if self.w.shape != (m,):
            raise ShapeError(f"weights must have length {m}, got {self.w.shape}")
        if not np.all(np.isfinite(self.w)) or np.any(self.w < 0) or not np.any(self.w > 0):
            raise ValueError("weights must be finite, nonnegative and not all zero")
        self.scale = 1.0 / (2.0 * (m if normalizer is None else normalizer))
        self.lambda2 = float(lambda2)
        self.lambda1 = float(lambda1)
        self.mask = penalty_mask(self.X.shape[1], has_intercept)

    def smooth(self, beta) -> float:
        margins = self.y * (self.X @ beta)
        pb = beta * self.mask
        return self.scale * float(self.w @ log1pexp_neg(margins)) + self.lambda2 * float(pb @ pb)

    def value(self, beta) -> float:
        return self.smooth(beta) + self.lambda1 * float(np.abs(beta * self.mask).sum())

    def gradient(self, beta) -> np.ndarray:
        """Gradient of the smooth part."""
        margins = self.y * (self.X @ beta)
        coef = -self.w * self.y * expit(-margins)
        return self.scale * (self.X.T @ coef) + 2.0 * self.lambda2 * self.mask * beta

    def hessian(self, beta) -> np.ndarray:
        margins = self.X @ beta
        curv = self.w * expit(margins) * expit(-margins)
        H = self.scale * (self.X.T @ (self.X * curv[:, None]))
        H[np.diag_indices_from(H)] += 2.0 * self.lambda2 * self.mask
        return H

    def residual(self, beta, grad=None) -> float:
        """Norm of the minimal-norm subgradient of J (the gradient when lambda1 = 0)."""
        g = self.gradient(beta) if grad is None else grad
        if self.lambda1 == 0.0:
            return float(np.linalg.norm(g))
        pen = self.mask > 0
        r = g.copy()
        nz = pen & (beta != 0)
        r[nz] += self.lambda1 * np.sign(beta[nz])
        z = pen & (beta == 0)
        r[z] = np.sign(g[z]) * np.maximum(np.abs(g[z]) - self.lambda1, 0.0)
        return float(np.linalg.norm(r))


def _newton_direction(H, g):
    """Solve H d = -g, adding diagonal damping until Cholesky succeeds."""
    scale = max(float(np.max(np.abs(np.diag(H)))), 1e-300)
    damping = 0.0
    for _ in range(30):
        try:
            c = scipy.linalg.cho_factor(H + damping * np.eye(H.shape[0]), check_finite=False)
            d = -scipy.linalg.cho_solve(c, g, check_finite=False)
            if np.all(np.isfinite(d)):
                return d
        except np.linalg.LinAlgError:
            pass
        damping = scale * 1e-12 if damping == 0.0 else damping * 10.0
    return -g


def _check_finite(value):
    if not np.isfinite(value):
        raise NumericalError("objective became non-finite")
    return value


def _gradient(obj, beta):
    g = obj.gradient(beta)
    if not np.all(np.isfinite(g)):
        raise NumericalError("gradient became non-finite")
    return g


def _fit_l2(obj: WeightedObjective, beta, config: FitConfig):
    f = _check_finite(obj.value(beta))
    trace = [f]
    g = _gradient(obj, beta)
    gnorm = float(np.linalg.norm(g))
    it = 0
    while gnorm > config.tol and it < config.max_iter:
        it += 1
        d = _newton_direction(obj.hessian(beta), g)
        slope = float(g @ d)
        if slope >= 0:
            d, slope = -g, -float(g @ g)
        step = 1.0
        accepted = finite_seen = False
        while step >= 1e-12:
            cand = beta + step * d
            f_new = obj.value(cand)
            if np.isfinite(f_new):
                finite_seen = True
                if f_new <= f + 1e-4 * step * slope:
                    accepted = True
                elif f_new <= f:
                    # decrease below the resolution of f: settle on the gradient
                    g_new = obj.gradient(cand)
                    accepted = float(np.linalg.norm(g_new)) < gnorm
                if accepted:
                    break
            step *= 0.5
        if not finite_seen:
            raise NumericalError("objective non-finite along the whole search direction")
        if not accepted:
            break
        beta, f = cand, _check_finite(f_new)
        trace.append(f)
        g = _gradient(obj, beta)
        gnorm = float(np.linalg.norm(g))
    return beta, it, f, gnorm, trace


def _prox_quadratic(H, g, beta, lam, mask, sweeps=200, tol=1e-14):
    """Minimize g^T d + d^T H d / 2 + lam * ||mask * (beta + d)||_1 by coordinate descent.

    Returns the new point ``beta + d`` with exact zeros on thresholded coordinates.
    """
    x = beta.copy()
    diag = np.diag(H).copy()
    # gradient of the model at x: g + H (x - beta)
    q = g.copy()
    for _ in range(sweeps):
        biggest = 0.0
        for j in range(x.shape[0]):
            hjj = diag[j]
            if hjj <= 0:
                continue
            old = x[j]
            z = old - q[j] / hjj
            if mask[j] > 0:
                thr = lam / hjj
                new = np.sign(z) * max(abs(z) - thr, 0.0)
            else:
                new = z
            delta = new - old
            if delta != 0.0:
                x[j] = new
                q += delta * H[:, j]
                biggest = max(biggest, abs(delta))
        if biggest <= tol * max(1.0, float(np.max(np.abs(x)))):
            break
    return x


def _fit_l1(obj: WeightedObjective, beta, config: FitConfig):
    f = _check_finite(obj.value(beta))
    trace = [f]
    g = _gradient(obj, beta)
    res = obj.residual(beta, g)
    lam = obj.lambda1
    it = 0
    while res > config.tol and it < config.max_iter:
        it += 1
        H = obj.hessian(beta)
        H[np.diag_indices_from(H)] += 1e-12 * max(float(np.max(np.diag(H))), 1e-300)
        target = _prox_quadratic(H, g, beta, lam, obj.mask)
        d = target - beta
        l1_now = float(np.abs(beta * obj.mask).sum())
        decrease = float(g @ d) + lam * (float(np.abs(target * obj.mask).sum()) - l1_now)
        if decrease >= 0:
            break
        step = 1.0
        accepted = finite_seen = False
        while step >= 1e-12:
            cand = target if step == 1.0 else beta + step * d
            f_new = obj.value(cand)
            finite_seen = finite_seen or bool(np.isfinite(f_new))
            if np.isfinite(f_new) and f_new <= f + 1e-4 * step * decrease:
                accepted = True
                break
            step *= 0.5
        if not finite_seen:
            raise NumericalError("objective non-finite along the whole search direction")
        if not accepted:
            break
        beta, f = cand, _check_finite(f_new)
        trace.append(f)
        g = _gradient(obj, beta)
        res = obj.residual(beta, g)
    return beta, it, f, res, trace


def fit_weighted(ds: LabeledDataset, weights, config: FitConfig = FitConfig(),
                 normalizer: Optional[float] = None, beta0=None) -> FitResult:
    """Fit the weighted penalized logistic regression on ``ds``.

    Parameters
    ----------
    ds : LabeledDataset
        The m rows to fit on (a coreset, or the full training set).
    weights : (m,) array
        Instance weights; a full-data fit uses all ones.
    config : FitConfig
    normalizer : float, optional
        N in the 1/(2N) factor of the data term; defaults to m.
    beta0 : array, optional
        Starting point, zeros by default.

    Returns
    -------
    FitResult
        Non-convergence within ``max_iter`` is reported through
        ``converged=False``, never raised.
    """
    obj = WeightedObjective(ds.X, ds.y, weights, config.lambda2, config.lambda1,
                            ds.has_intercept, normalizer)
    beta = np.zeros(ds.d) if beta0 is None else np.array(beta0, dtype=float)
    solver = _fit_l1 if config.lambda1 > 0 else _fit_l2
    # overflow surfaces as non-finite values, which the solvers check and report
    with np.errstate(over="ignore", invalid="ignore"):
        beta, it, f, res, trace = solver(obj, beta, config)
    converged = res <= config.tol
    if not converged:
        log.debug("fit on %s stopped after %d iterations with residual %.3g", ds.name, it, res)
    return FitResult(beta, converged, it, f, res, tuple(trace))
