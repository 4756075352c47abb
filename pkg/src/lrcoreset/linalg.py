"""Orthonormal bases, leverage scores and l1 Lewis weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import RankError, ShapeError

RANK_RTOL = 1e-10
WEIGHT_FLOOR = 1e-300


@dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    Q: np.ndarray
    r: int


def orthonormal_basis(Z) -> OrthonormalBasis:
    """Orthonormal basis of the column space of ``Z`` via pivoted QR.

    Pivots below ``1e-10`` times the largest one are treated as zero, so a
    rank deficient ``Z`` gives ``r < d`` columns.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {Z.shape}")
    n, d = Z.shape
    if d < 1 or n < d:
        raise ShapeError(f"need n >= d >= 1, got {n}x{d}")
    if not np.all(np.isfinite(Z)):
        raise ShapeError("matrix has non-finite entries")
    Q, R, _ = scipy.linalg.qr(Z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[0] == 0.0:
        raise RankError("matrix is identically zero")
    r = int(np.sum(diag > RANK_RTOL * diag[0]))
    return OrthonormalBasis(Q[:, :r], r)


def leverage_scores(Z) -> np.ndarray:
    """Diagonal of the hat matrix: squared row norms of an orthonormal basis."""
    Q = orthonormal_basis(Z).Q
    return np.einsum("ij,ij->i", Q, Q)


def lewis_update(Z, w) -> np.ndarray:
    """One sweep ``w_i <- sqrt(w_i * tau_i(W^{-1/2} Z))``."""
    tau = leverage_scores(Z / np.sqrt(w)[:, None])
    return np.sqrt(w * tau)


def lewis_weights(Z, t: int = 5) -> np.ndarray:
    """l1 Lewis weights by ``t`` fixed-point sweeps starting from ``w = 1``.

    Parameters
    ----------
    Z : (n, d) array
    t : int
        Number of sweeps. The map contracts in log space with factor 1/2, so
        ``t = 20`` is converged to about 1e-6 relative.

    Returns
    -------
    (n,) array of strictly positive weights.
    """
    Z = np.asarray(Z, dtype=float)
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    rank = orthonormal_basis(Z).r
    w = np.ones(Z.shape[0])
    for _ in range(t):
        basis = orthonormal_basis(Z / np.sqrt(w)[:, None])
        if basis.r < rank:
            raise RankError(f"reweighted matrix lost rank ({basis.r} < {rank})")
        w = np.sqrt(w * np.einsum("ij,ij->i", basis.Q, basis.Q))
        if np.any(w < WEIGHT_FLOOR):
            raise RankError("Lewis weight underflow")
    return w


def lewis_residual(Z, w) -> float:
    """max_i |w_i - update(w)_i|, zero exactly at the fixed point."""
    return float(np.max(np.abs(w - lewis_update(Z, w))))
