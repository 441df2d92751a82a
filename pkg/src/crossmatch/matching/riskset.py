"""Sequential risk-set matching of first unintended births to not-yet-treated women."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from crossmatch.matching.cohort import COVARIATES, WomanRecord, covariate_matrix
from crossmatch.matching.cox import CoxModel, fit_time_dependent_cox
from crossmatch.matching.distance import RobustMahalanobis, caliper_penalty, caliper_width

PAIR_COLUMNS = ("treated_id", "control_id", "t_star", "distance")


@dataclass(frozen=True)
class MatchedPair:
    treated_id: str
    control_id: str
    t_star: int
    distance: float


@dataclass(frozen=True)
class RiskSet:
    t_star: int
    treated: tuple
    controls: tuple


@dataclass
class MatchResult:
    pairs: list
    unmatched: list
    risk_sets: list
    cox: CoxModel | None = None

    def write_pairs(self, path) -> None:
        write_pairs(self.pairs, path)


def find_earliest_unintended_year(cohort) -> int | None:
    """Earliest year with an unintended birth among ``cohort``, or ``None``."""
    years = [w.first_unintended_year for w in cohort if w.first_unintended_year is not None]
    return min(years) if years else None


def build_risk_sets(cohort, t_star: int):
    """Women with their first unintended birth at ``t_star`` and the eligible controls.

    Controls have had no births or only intended births through ``t_star``.
    Women with an unintended birth before ``t_star`` belong to neither set.
    Both lists are sorted by id.
    """
    treated = sorted((w for w in cohort if w.first_unintended_year == t_star), key=lambda w: w.id)
    controls = sorted((w for w in cohort if not w.has_unintended_through(t_star)), key=lambda w: w.id)
    return treated, controls


def optimal_assignment(cost) -> np.ndarray:
    """Minimum-cost assignment of every row to a distinct column (rows <= columns).

    Among optimal assignments the lexicographically smallest column vector
    (row 0 first) is returned.
    """
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if n == 0:
        return np.zeros(0, dtype=int)
    rows, cols = linear_sum_assignment(cost)
    assign = np.empty(n, dtype=int)
    assign[rows] = cols
    best = float(cost[rows, cols].sum())
    tol = 1e-9 * max(1.0, abs(best))

    fixed_cost = 0.0
    free_cols = list(range(m))
    for i in range(n):
        rest = np.arange(i + 1, n)
        rest_floor = 0.0
        if rest.size:
            rest_floor = float(cost[np.ix_(rest, free_cols)].min(axis=1).sum())
        for j in free_cols:
            if j >= assign[i]:
                break
            if fixed_cost + cost[i, j] + rest_floor > best + tol:
                continue
            cols_left = [c for c in free_cols if c != j]
            if rest.size:
                sub = cost[np.ix_(rest, cols_left)]
                r, c = linear_sum_assignment(sub)
                total = fixed_cost + cost[i, j] + float(sub[r, c].sum())
            else:
                total = fixed_cost + cost[i, j]
            if total <= best + tol:
                assign[i] = j
                if rest.size:
                    assign[rest[r]] = np.asarray(cols_left)[c]
                break
        fixed_cost += cost[i, assign[i]]
        free_cols.remove(int(assign[i]))
    return assign


def match_year(treated, controls, cost, t_star: int):
    """Pair each treated woman with a distinct control at minimum total cost.

    When treated women outnumber controls, those with the largest row-minimum
    cost are left unmatched. Returns ``(pairs, unmatched_treated)``.
    """
    cost = np.asarray(cost, dtype=float)
    if not treated:
        return [], []
    if not controls:
        return [], list(treated)
    rows = np.arange(len(treated))
    unmatched = []
    if len(treated) > len(controls):
        row_min = cost.min(axis=1)
        order = sorted(rows, key=lambda r: (-row_min[r], treated[r].id))
        drop = set(order[: len(treated) - len(controls)])
        unmatched = [treated[r] for r in rows if r in drop]
        rows = np.array([r for r in rows if r not in drop])
    assign = optimal_assignment(cost[rows])
    pairs = [
        MatchedPair(treated[r].id, controls[c].id, int(t_star), float(cost[r, c]))
        for r, c in zip(rows, assign)
    ]
    return pairs, unmatched


def matching_cost(treated, controls, t_star, cox: CoxModel | None, covariates=COVARIATES):
    """Robust Mahalanobis distance plus the propensity caliper penalty, treated x controls."""
    X = covariate_matrix(list(treated) + list(controls), t_star, covariates)
    nt = len(treated)
    dist = RobustMahalanobis(X).cross(np.arange(nt), np.arange(nt, X.shape[0]))
    if cox is None:
        return dist
    lp = cox.linear_predictor(X)
    w = caliper_width(lp[:nt], lp[nt:])
    return dist + caliper_penalty(lp[:nt, None], lp[None, nt:], w)


def risk_set_match(
    cohort: list[WomanRecord],
    covariates=COVARIATES,
    cox: CoxModel | None = None,
    use_caliper: bool = True,
) -> MatchResult:
    """Risk-set matching without replacement.

    The Cox model is fitted once on the whole cohort unless supplied. Each
    iteration takes the earliest remaining unintended-birth year, matches the
    women first treated that year to eligible controls, and removes the
    matched pairs and any unmatched treated women before the next iteration.
    """
    cohort = list(cohort)
    if not cohort:
        return MatchResult([], [], [], None)
    if use_caliper and cox is None and find_earliest_unintended_year(cohort) is not None:
        cox = fit_time_dependent_cox(cohort, covariates)
    remaining = {w.id: w for w in cohort}
    pairs, unmatched, log = [], [], []
    while True:
        pool = list(remaining.values())
        t_star = find_earliest_unintended_year(pool)
        if t_star is None:
            break
        treated, controls = build_risk_sets(pool, t_star)
        log.append(RiskSet(t_star, tuple(w.id for w in treated), tuple(w.id for w in controls)))
        if controls and len(treated) + len(controls) >= 2:
            cost = matching_cost(treated, controls, t_star, cox if use_caliper else None, covariates)
        else:
            cost = np.zeros((len(treated), len(controls)))
        year_pairs, year_unmatched = match_year(treated, controls, cost, t_star)
        pairs.extend(year_pairs)
        unmatched.extend(w.id for w in year_unmatched)
        for p in year_pairs:
            del remaining[p.treated_id], remaining[p.control_id]
        for w in year_unmatched:
            del remaining[w.id]
    return MatchResult(pairs, unmatched, log, cox)


def write_pairs(pairs, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PAIR_COLUMNS)
        for p in pairs:
            w.writerow([p.treated_id, p.control_id, p.t_star, repr(p.distance)])


def read_pairs(path) -> list[MatchedPair]:
    with open(path, newline="") as fh:
        return [
            MatchedPair(r["treated_id"], r["control_id"], int(r["t_star"]), float(r["distance"]))
            for r in csv.DictReader(fh)
        ]
