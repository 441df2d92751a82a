"""Sign-score statistics on matched-pair differences and their sensitivity bounds.

Both supported statistics have the form ``T = sum(q_i * [d_i > 0])`` for
nonnegative scores ``q_i``: Wilcoxon's signed rank statistic uses the ranks of
``|d_i|`` and the permutational t statistic uses ``|d_i|`` itself. Under a bias
of at most ``gamma`` in the within-pair odds of treatment, the upper tail of
``T`` is bounded by the distribution in which every score independently
carries a positive sign with probability ``gamma / (1 + gamma)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import stats

from crossmatch.errors import DegenerateStatisticError, InvalidInputError, InvalidParameterError

Mode = Literal["exact", "normal", "auto"]
Statistic = Literal["wilcoxon", "ttest"]

#: Largest number of nonzero pairs evaluated by exact enumeration in ``auto`` mode.
AUTO_EXACT_MAX = 20

# Relative slack used when comparing enumerated float sums with the observed value.
_SUM_RTOL = 1e-10


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PairedDifferences:
    """Treated-minus-control differences for one outcome in one subgroup."""

    outcome_id: str
    subgroup_id: str
    diffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.diffs, dtype=float))
        if d.ndim != 1 or d.size < 1:
            raise InvalidInputError(f"{self.outcome_id}/{self.subgroup_id}: need at least one difference")
        if not np.all(np.isfinite(d)):
            raise InvalidInputError(f"{self.outcome_id}/{self.subgroup_id}: differences must be finite")
        object.__setattr__(self, "diffs", _readonly(d))

    def __len__(self):
        return self.diffs.size

    def negated(self) -> "PairedDifferences":
        return PairedDifferences(self.outcome_id, self.subgroup_id, -self.diffs)


@dataclass(frozen=True)
class SensitivityParams:
    gamma: float = 1.0

    def __post_init__(self):
        if not (self.gamma >= 1.0) or not math.isfinite(self.gamma):
            raise InvalidParameterError(f"gamma must be a finite number >= 1, got {self.gamma!r}")

    @property
    def pi_plus(self) -> float:
        """Worst-case probability that a pair's treated member is the one with the larger response."""
        return self.gamma / (1.0 + self.gamma)


@dataclass(frozen=True)
class PValueTriple:
    """Right-sided, left-sided and minimum one-sided p-values."""

    right: float
    left: float
    min_two: float = field(init=False)

    def __post_init__(self):
        for name in ("right", "left"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise InvalidParameterError(f"{name} p-value {v!r} outside [0, 1]")
        object.__setattr__(self, "min_two", min(self.right, self.left))

    @property
    def preferred_direction(self) -> int:
        """+1 when the right-sided p-value is at most the left-sided one, else -1."""
        return 1 if self.right <= self.left else -1


@dataclass(frozen=True)
class ScoredStatistic:
    """Scores and signs of the nonzero pairs, with the observed statistic."""

    scores: np.ndarray = field(repr=False)
    signs: np.ndarray = field(repr=False)
    observed: float
    kind: str = "wilcoxon"

    def __post_init__(self):
        q = _readonly(self.scores)
        s = np.array(self.signs, dtype=np.int8)
        if q.shape != s.shape:
            raise InvalidInputError("scores and signs must have the same length")
        if np.any(q < 0):
            raise InvalidInputError("scores must be nonnegative")
        s.setflags(write=False)
        object.__setattr__(self, "scores", q)
        object.__setattr__(self, "signs", s)

    @property
    def n(self) -> int:
        return int(self.scores.size)

    @property
    def total(self) -> float:
        return float(self.scores.sum())

    def flipped(self) -> "ScoredStatistic":
        """The statistic computed on the negated differences."""
        neg = -self.signs
        return ScoredStatistic(self.scores, neg, float(self.scores[neg > 0].sum()), self.kind)


def _nonzero(d: PairedDifferences | np.ndarray) -> np.ndarray:
    arr = d.diffs if isinstance(d, PairedDifferences) else np.asarray(d, dtype=float)
    if arr.size == 0:
        raise InvalidInputError("no differences supplied")
    nz = arr[arr != 0]
    if nz.size == 0:
        raise DegenerateStatisticError("all paired differences are zero")
    return nz


def wilcoxon_scores(d: PairedDifferences | np.ndarray) -> ScoredStatistic:
    """Signed-rank scores: average ranks of ``|d|`` after dropping zeros."""
    nz = _nonzero(d)
    ranks = stats.rankdata(np.abs(nz), method="average")
    signs = np.sign(nz).astype(np.int8)
    return ScoredStatistic(ranks, signs, float(ranks[signs > 0].sum()), "wilcoxon")


def ttest_scores(d: PairedDifferences | np.ndarray) -> ScoredStatistic:
    """Permutational t scores: ``|d|`` after dropping zeros."""
    nz = _nonzero(d)
    q = np.abs(nz)
    signs = np.sign(nz).astype(np.int8)
    return ScoredStatistic(q, signs, float(q[signs > 0].sum()), "ttest")


SCORERS = {"wilcoxon": wilcoxon_scores, "ttest": ttest_scores}


def pvalue_floor(n: int) -> float:
    """Smallest p-value reported for ``n`` nonzero pairs: 1 / (2**n + 1)."""
    return 1.0 / (2.0**n + 1.0)


def normal_upper_bound(observed, total, total_sq, gamma):
    """Normal-approximation bound on ``P(T >= observed)``; broadcasts over arrays.

    ``total`` and ``total_sq`` are the sum of scores and the sum of squared
    scores. No continuity correction is applied.
    """
    pi = gamma / (1.0 + gamma)
    mean = pi * np.asarray(total, dtype=float)
    sd = np.sqrt(pi * (1.0 - pi) * np.asarray(total_sq, dtype=float))
    z = (np.asarray(observed, dtype=float) - mean) / sd
    return stats.norm.sf(z)


def _half_integer_scores(q: np.ndarray) -> np.ndarray | None:
    doubled = 2.0 * q
    ints = np.rint(doubled)
    if np.all(np.abs(doubled - ints) < 1e-9) and ints.sum() < 5e6:
        return ints.astype(np.int64)
    return None


def _exact_upper_bound(stat: ScoredStatistic, pi: float) -> float:
    q = stat.scores
    ints = _half_integer_scores(q)
    if ints is not None:
        # Distribution of 2T on the integer lattice, built one pair at a time.
        dist = np.zeros(int(ints.sum()) + 1)
        dist[0] = 1.0
        for k in ints:
            shifted = np.zeros_like(dist)
            shifted[k:] = dist[: dist.size - k] if k else dist
            dist = (1.0 - pi) * dist + pi * shifted
        target = int(round(2.0 * stat.observed))
        return float(min(1.0, dist[target:].sum()))
    if stat.n > 26:
        raise InvalidParameterError(f"exact enumeration over 2**{stat.n} sign vectors is not supported")
    sums = np.zeros(1)
    weights = np.ones(1)
    for qi in q:
        sums = np.concatenate((sums, sums + qi))
        weights = np.concatenate((weights * (1.0 - pi), weights * pi))
    slack = _SUM_RTOL * max(1.0, stat.total)
    return float(min(1.0, weights[sums >= stat.observed - slack].sum()))


def _upper_bound(stat: ScoredStatistic, gamma: float, mode: Mode) -> float:
    pi = gamma / (1.0 + gamma)
    if mode == "auto":
        mode = "exact" if stat.n <= AUTO_EXACT_MAX else "normal"
    if mode == "exact":
        p = _exact_upper_bound(stat, pi)
    elif mode == "normal":
        p = float(normal_upper_bound(stat.observed, stat.total, float(np.sum(stat.scores**2)), gamma))
    else:
        raise InvalidParameterError(f"unknown mode {mode!r}")
    return max(p, pvalue_floor(stat.n))


def sensitivity_pvalues(
    stat: ScoredStatistic,
    gamma: float | SensitivityParams = 1.0,
    mode: Mode = "auto",
) -> PValueTriple:
    """Worst-case one-sided p-values under a bias of at most ``gamma``.

    Both tails include the observed value. ``left`` is the right-sided bound
    for the negated differences. Values below ``pvalue_floor(n)`` (possible
    only in normal mode) are raised to that floor.
    """
    g = gamma if isinstance(gamma, SensitivityParams) else SensitivityParams(float(gamma))
    if stat.n == 0:
        raise DegenerateStatisticError("statistic has no nonzero pairs")
    right = _upper_bound(stat, g.gamma, mode)
    left = _upper_bound(stat.flipped(), g.gamma, mode)
    return PValueTriple(right, left)


def randomization_pvalues(
    d: PairedDifferences | np.ndarray,
    statistic: Statistic = "wilcoxon",
    mode: Mode = "auto",
) -> PValueTriple:
    """Plain randomization p-values (``gamma = 1``)."""
    return sensitivity_pvalues(SCORERS[statistic](d), 1.0, mode)


def onesided_pvalues(
    d: PairedDifferences | np.ndarray,
    gamma: float = 1.0,
    statistic: Statistic = "wilcoxon",
    mode: Mode = "auto",
) -> PValueTriple:
    return sensitivity_pvalues(SCORERS[statistic](d), gamma, mode)
