"""Covariate balance before and after matching."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from crossmatch.errors import InvalidInputError
from crossmatch.matching.cohort import COVARIATES, covariate_matrix
from crossmatch.matching.riskset import RiskSet, build_risk_sets

BALANCE_COLUMNS = ("covariate", "pre_std_diff", "post_std_diff", "degenerate")


def standardized_difference(x_treated, x_control) -> float:
    """``(mean_t - mean_c) / sqrt((var_t + var_c) / 2)``.

    Returns 0 when both variances are zero and the means agree, and NaN when
    the variances are zero but the means differ.
    """
    xt = np.asarray(x_treated, dtype=float)
    xc = np.asarray(x_control, dtype=float)
    diff = xt.mean() - xc.mean()
    pooled = (np.var(xt, ddof=1) + np.var(xc, ddof=1)) / 2.0
    if pooled <= 0:
        return 0.0 if diff == 0 else math.nan
    return float(diff / math.sqrt(pooled))


@dataclass(frozen=True)
class BalanceTable:
    covariates: tuple
    pre: np.ndarray
    post: np.ndarray
    degenerate: frozenset = field(default_factory=frozenset)

    def as_dict(self):
        return {c: (float(a), float(b)) for c, a, b in zip(self.covariates, self.pre, self.post)}

    def max_abs_post(self) -> float:
        return float(np.nanmax(np.abs(self.post)))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(BALANCE_COLUMNS)
            for c, a, b in zip(self.covariates, self.pre, self.post):
                w.writerow([c, repr(float(a)), repr(float(b)), int(c in self.degenerate)])


def _replay_risk_sets(pairs, cohort) -> list[RiskSet]:
    """Rebuild each match year's treated and control sets from the pairs."""
    remaining = {w.id: w for w in cohort}
    out = []
    by_year: dict[int, list] = {}
    for p in pairs:
        by_year.setdefault(p.t_star, []).append(p)
    for t in sorted(by_year):
        treated, controls = build_risk_sets(list(remaining.values()), t)
        out.append(RiskSet(t, tuple(w.id for w in treated), tuple(w.id for w in controls)))
        for p in by_year[t]:
            remaining.pop(p.treated_id, None)
            remaining.pop(p.control_id, None)
    return out


def standardized_differences(pairs, cohort, covariates=COVARIATES, risk_sets=None) -> BalanceTable:
    """Standardized differences for every covariate, before and after matching.

    Before matching, treated and eligible controls of every match year are
    pooled, each evaluated at that year. After matching, only the paired
    women are used, each at her pair's match year.
    """
    pairs = list(pairs)
    if len(pairs) < 2:
        raise InvalidInputError("balance needs at least 2 matched pairs")
    by_id = {w.id: w for w in cohort}
    if risk_sets is None:
        risk_sets = _replay_risk_sets(pairs, cohort)

    pre_t, pre_c = [], []
    for rs in risk_sets:
        pre_t.append(covariate_matrix([by_id[i] for i in rs.treated], rs.t_star, covariates))
        pre_c.append(covariate_matrix([by_id[i] for i in rs.controls], rs.t_star, covariates))
    post_t = np.vstack([by_id[p.treated_id].covariates_at(p.t_star, covariates) for p in pairs])
    post_c = np.vstack([by_id[p.control_id].covariates_at(p.t_star, covariates) for p in pairs])
    pre_t, pre_c = np.vstack(pre_t), np.vstack(pre_c)

    pre = np.array([standardized_difference(pre_t[:, j], pre_c[:, j]) for j in range(len(covariates))])
    post = np.array([standardized_difference(post_t[:, j], post_c[:, j]) for j in range(len(covariates))])
    degenerate = frozenset(c for c, a, b in zip(covariates, pre, post) if math.isnan(a) or math.isnan(b))
    return BalanceTable(tuple(covariates), pre, post, degenerate)
