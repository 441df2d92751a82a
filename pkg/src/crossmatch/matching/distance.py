"""Rank-based robust Mahalanobis distance and the propensity caliper penalty."""

from __future__ import annotations

import numpy as np
from scipy import stats

from crossmatch.errors import InvalidInputError, InvalidParameterError

PENALTY_SCALE = 1000.0
CALIPER_SD_FRACTION = 0.5


class RobustMahalanobis:
    """Mahalanobis distance on column ranks with a tie-corrected rank covariance.

    Each column is replaced by its average ranks. The rank covariance is
    pre- and post-multiplied by the diagonal of ``sd(untied ranks) / sd(tied
    ranks)`` so heavily tied columns are not up-weighted. Distances are the
    quadratic form ``(r_i - r_j)' S^-1 (r_i - r_j)``. Columns that take a
    single value carry no information and are dropped. A singular adjusted
    covariance gets a ridge of ``1e-8 * trace / dim`` on its diagonal.
    """

    def __init__(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 1:
            raise InvalidInputError("robust Mahalanobis distance needs at least 2 rows and 1 column")
        n = X.shape[0]
        ranks = stats.rankdata(X, axis=0, method="average")
        keep = ranks.max(axis=0) > ranks.min(axis=0)
        self.columns = np.flatnonzero(keep)
        self.ranks = ranks[:, keep]
        self.ridge = 0.0
        if self.ranks.shape[1] == 0:
            self.inv_cov = np.zeros((0, 0))
            return
        cov = np.atleast_2d(np.cov(self.ranks, rowvar=False))
        untied_var = np.var(np.arange(1, n + 1), ddof=1)
        ratio = np.sqrt(untied_var / np.diag(cov))
        cov = cov * np.outer(ratio, ratio)
        dim = cov.shape[0]
        if np.linalg.cond(cov) > 1e12:
            self.ridge = 1e-8 * np.trace(cov) / dim
            cov = cov + self.ridge * np.eye(dim)
        self.inv_cov = np.linalg.inv(cov)

    def __call__(self, i: int, j: int) -> float:
        diff = self.ranks[i] - self.ranks[j]
        return float(diff @ self.inv_cov @ diff)

    def cross(self, rows_a, rows_b) -> np.ndarray:
        """Distance matrix between the rows indexed by ``rows_a`` and ``rows_b``."""
        A = self.ranks[np.asarray(rows_a, dtype=int)]
        B = self.ranks[np.asarray(rows_b, dtype=int)]
        diff = A[:, None, :] - B[None, :, :]
        out = np.einsum("abi,ij,abj->ab", diff, self.inv_cov, diff)
        return np.maximum(out, 0.0)


def robust_mahalanobis(X) -> RobustMahalanobis:
    return RobustMahalanobis(X)


def caliper_penalty(score_l, score_k, w):
    """``1000 * max(0, |score_l - score_k| - w)``; broadcasts over arrays."""
    if np.any(np.asarray(w) < 0):
        raise InvalidParameterError("caliper width must be nonnegative")
    out = PENALTY_SCALE * np.maximum(0.0, np.abs(np.asarray(score_l) - np.asarray(score_k)) - w)
    return float(out) if np.ndim(out) == 0 else out


def _group_var(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.var(x, ddof=1)) if x.size > 1 else 0.0


def caliper_width(treated_scores, control_scores, fraction: float = CALIPER_SD_FRACTION) -> float:
    """``fraction`` of the pooled within-group standard deviation of the scores."""
    return float(fraction * np.sqrt((_group_var(treated_scores) + _group_var(control_scores)) / 2.0))
