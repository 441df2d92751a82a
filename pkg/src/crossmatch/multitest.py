"""Family-wise error procedures, p-value combiners and FCR interval levels.

The ``*_mask`` functions operate on the last axis of arbitrarily shaped
arrays so the simulation harness can run thousands of families at once; the
unsuffixed functions wrap them for a single family and return a
:class:`RejectionSet`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy import stats

from crossmatch.errors import InvalidParameterError
from crossmatch.paired import PValueTriple


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 <= alpha < 1.0):
        raise InvalidParameterError(f"alpha must lie in [0, 1), got {alpha!r}")
    return alpha


def _check_pvalues(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(np.isnan(p)) or np.any((p < 0) | (p > 1)):
        raise InvalidParameterError("p-values must lie in [0, 1]")
    return p


@dataclass(frozen=True)
class RejectionSet:
    """Indices rejected by a step-down procedure and the threshold each index faced."""

    rejected: frozenset
    thresholds: np.ndarray = field(repr=False)

    def __contains__(self, i):
        return i in self.rejected

    def __len__(self):
        return len(self.rejected)

    def mask(self) -> np.ndarray:
        out = np.zeros(self.thresholds.size, dtype=bool)
        out[list(self.rejected)] = True
        return out

    def write_csv(self, path, pvalues, ids: Sequence | None = None) -> None:
        """Write ``hypothesis_id, p, threshold, rejected`` rows."""
        ids = list(range(len(pvalues))) if ids is None else list(ids)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["hypothesis_id", "p", "threshold", "rejected"])
            for i, (hid, p) in enumerate(zip(ids, pvalues)):
                w.writerow([hid, repr(float(p)), repr(float(self.thresholds[i])), int(i in self.rejected)])


@dataclass(frozen=True)
class WeightedFamily:
    pvalues: np.ndarray
    weights: np.ndarray
    alpha: float

    def __post_init__(self):
        p = _check_pvalues(self.pvalues)
        w = np.asarray(self.weights, dtype=float)
        if p.ndim != 1 or w.shape != p.shape:
            raise InvalidParameterError("pvalues and weights must be 1-D arrays of equal length")
        if np.any(~(w > 0)) or not np.all(np.isfinite(w)):
            raise InvalidParameterError("weights must be positive and finite")
        if p.size and abs(w.sum() - p.size) > 1e-9:
            raise InvalidParameterError(f"weights must sum to the family size {p.size}, got {w.sum()!r}")
        object.__setattr__(self, "pvalues", p)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "alpha", _check_alpha(self.alpha))

    @classmethod
    def normalized(cls, pvalues, weights, alpha) -> "WeightedFamily":
        """Rescale positive ``weights`` to sum to the family size."""
        w = np.asarray(weights, dtype=float)
        if w.size and np.all(w > 0):
            w = w * (w.size / w.sum())
        return cls(np.asarray(pvalues, dtype=float), w, alpha)


def _stepdown(p_sorted: np.ndarray, thr_sorted: np.ndarray, order: np.ndarray):
    passed = p_sorted <= thr_sorted
    prefix = np.cumprod(passed, axis=-1).astype(bool)
    mask = np.empty_like(prefix)
    thresholds = np.empty_like(thr_sorted)
    np.put_along_axis(mask, order, prefix, axis=-1)
    np.put_along_axis(thresholds, order, thr_sorted, axis=-1)
    return mask, thresholds


def holm_mask(p, alpha: float):
    """Holm's step-down procedure along the last axis.

    Returns ``(rejected_mask, thresholds)`` where ``thresholds[i]`` is
    ``alpha / (m - j + 1)`` for the position ``j`` hypothesis ``i`` takes in the
    ascending order (ties keep index order).
    """
    p = np.asarray(p, dtype=float)
    m = p.shape[-1]
    order = np.argsort(p, axis=-1, kind="stable")
    p_sorted = np.take_along_axis(p, order, axis=-1)
    thr = alpha / (m - np.arange(m))
    thr_sorted = np.broadcast_to(thr, p_sorted.shape).copy()
    return _stepdown(p_sorted, thr_sorted, order)


def weighted_holm_mask(p, w, alpha: float):
    """Weighted Holm along the last axis.

    With hypotheses ordered by ascending p-value, ``H_(i)`` is rejected when
    ``p_(j) <= w_(j) * alpha / sum(w_(j..m))`` for every ``j <= i``. Weights of
    exactly zero are allowed here and remove the hypothesis from the family.
    """
    p = np.asarray(p, dtype=float)
    w = np.broadcast_to(np.asarray(w, dtype=float), p.shape)
    excluded = w <= 0
    # Excluded hypotheses sort last and carry no weight, so they never block the others.
    key = np.where(excluded, np.inf, p)
    order = np.argsort(key, axis=-1, kind="stable")
    p_sorted = np.take_along_axis(key, order, axis=-1)
    w_sorted = np.take_along_axis(np.where(excluded, 0.0, w), order, axis=-1)
    tail = np.cumsum(w_sorted[..., ::-1], axis=-1)[..., ::-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        thr_sorted = np.where(w_sorted > 0, w_sorted * alpha / tail, 0.0)
    return _stepdown(p_sorted, thr_sorted, order)


def _as_rejection_set(mask, thresholds) -> RejectionSet:
    thresholds = np.array(thresholds, dtype=float)
    thresholds.setflags(write=False)
    return RejectionSet(frozenset(int(i) for i in np.flatnonzero(mask)), thresholds)


def holm(p, alpha: float) -> RejectionSet:
    p = _check_pvalues(p)
    alpha = _check_alpha(alpha)
    if p.size == 0:
        return RejectionSet(frozenset(), np.zeros(0))
    return _as_rejection_set(*holm_mask(p, alpha))


def weighted_holm(f: WeightedFamily) -> RejectionSet:
    if f.pvalues.size == 0:
        return RejectionSet(frozenset(), np.zeros(0))
    return _as_rejection_set(*weighted_holm_mask(f.pvalues, f.weights, f.alpha))


def fisher_combine_onesided(p1, p2):
    """Fisher's combination of two independent p-values (chi-square, 4 df)."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if np.any(~(p1 > 0)) or np.any(~(p2 > 0)) or np.any(p1 > 1) or np.any(p2 > 1):
        raise InvalidParameterError("Fisher combination needs p-values in (0, 1]")
    x = -2.0 * (np.log(p1) + np.log(p2))
    out = np.minimum(1.0, stats.chi2.sf(x, 4))
    return float(out) if out.ndim == 0 else out


def concordant_fisher_array(right1, left1, right2, left2):
    """Concordant Fisher global-null p-value on arrays of one-sided p-values."""
    f_right = fisher_combine_onesided(right1, right2)
    f_left = fisher_combine_onesided(left1, left2)
    return np.minimum(1.0, 2.0 * np.minimum(f_left, f_right))


def concordant_fisher_global(t: PValueTriple, u: PValueTriple) -> float:
    """``2 * min(F(q1, q2), F(p1, p2))`` capped at 1, for two independent subgroups."""
    return float(concordant_fisher_array(t.right, t.left, u.right, u.left))


def max_p_array(right1, left1, right2, left2):
    return np.minimum(1.0, 2.0 * np.minimum(np.maximum(right1, right2), np.maximum(left1, left2)))


def max_p_replicability(t: PValueTriple, u: PValueTriple) -> float:
    """``2 * min(max(p1, p2), max(q1, q2))`` capped at 1."""
    return float(max_p_array(t.right, t.left, u.right, u.left))


def fcr_levels(
    m_ci: int,
    r_ci: int,
    alpha: float,
    mode: Literal["bh", "simultaneous", "general"] = "bh",
) -> float | None:
    """Per-interval confidence level for intervals built within one subgroup at FCR ``alpha / 2``.

    Returns ``None`` when ``r_ci == 0`` (no interval is constructed).
    ``general`` divides by the harmonic number of ``m_ci``.
    """
    if m_ci < 1 or not (0 <= r_ci <= m_ci):
        raise InvalidParameterError(f"need 0 <= r_ci <= m_ci and m_ci >= 1, got m_ci={m_ci}, r_ci={r_ci}")
    alpha = _check_alpha(alpha)
    if r_ci == 0:
        return None
    if mode == "bh":
        return 1.0 - r_ci * alpha / (2.0 * m_ci)
    if mode == "simultaneous":
        return 1.0 - alpha / (2.0 * m_ci)
    if mode == "general":
        harmonic = math.fsum(1.0 / l for l in range(1, m_ci + 1))
        return 1.0 - r_ci * alpha / (2.0 * m_ci * harmonic)
    raise InvalidParameterError(f"unknown FCR mode {mode!r}")
