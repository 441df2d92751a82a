"""Two-subgroup cross-screening for replicability and for global nulls.

Each subgroup's data chooses the alternative direction, the selected
hypotheses and the weights used when testing the *other* subgroup. The
array functions (``*_arrays``) work on the last axis of stacked p-value
arrays and are shared by the dictionary API and the simulation harness.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from crossmatch.errors import InvalidInputError, InvalidParameterError
from crossmatch.multitest import (
    concordant_fisher_array,
    fisher_combine_onesided,
    holm_mask,
    max_p_array,
    weighted_holm_mask,
)
from crossmatch.paired import SCORERS, PValueTriple, ScoredStatistic, sensitivity_pvalues

REPORT_COLUMNS = [
    "method",
    "gamma",
    "outcome_id",
    "subgroup",
    "direction",
    "selected",
    "p_onesided",
    "holm_threshold",
    "rejected",
    "replicated",
    "global_discovery",
]


@dataclass
class SubgroupEvidence:
    """Per-outcome p-value triples (at one gamma) for one subgroup.

    ``means`` holds the mean paired difference per outcome; it is needed only
    by the weighted procedures, which pick directions by its sign.
    """

    name: str
    triples: dict[str, PValueTriple]
    statistics: dict[str, ScoredStatistic] = field(default_factory=dict)
    means: dict[str, float] = field(default_factory=dict)
    gamma: float = 1.0

    @classmethod
    def from_differences(
        cls,
        name: str,
        diffs: Mapping[str, np.ndarray],
        gamma: float = 1.0,
        statistic: str = "wilcoxon",
        mode: str = "auto",
    ) -> "SubgroupEvidence":
        triples, statistics, means = {}, {}, {}
        for k, d in diffs.items():
            d = np.asarray(d, dtype=float)
            stat = SCORERS[statistic](d)
            statistics[k] = stat
            triples[k] = sensitivity_pvalues(stat, gamma, mode)
            means[k] = float(d.mean())
        return cls(name, triples, statistics, means, float(gamma))

    def arrays(self, outcomes):
        right = np.array([self.triples[k].right for k in outcomes])
        left = np.array([self.triples[k].left for k in outcomes])
        return right, left

    def mean_array(self, outcomes):
        missing = [k for k in outcomes if k not in self.means]
        if missing:
            raise InvalidInputError(f"subgroup {self.name}: mean differences missing for {missing}")
        return np.array([self.means[k] for k in outcomes])


@dataclass(frozen=True)
class ScreeningResult:
    """Outcome of one screening run.

    ``direction[s][k]`` is the alternative (+1 right, -1 left) used when
    testing outcome ``k`` in subgroup ``s``; it was chosen from the other
    subgroup. ``status[s][k]`` equals that direction when the hypothesis was
    rejected and 0 otherwise.
    """

    method: str
    outcomes: tuple
    subgroups: tuple
    direction: dict
    status: dict
    selected: dict
    p_onesided: dict
    thresholds: dict
    replicated: frozenset
    global_discoveries: frozenset
    alpha: float
    gamma: float
    c: float | None = None

    def rejected(self, subgroup) -> frozenset:
        return frozenset(k for k, s in self.status[subgroup].items() if s != 0)

    def replicated_direction(self, k) -> int:
        return self.status[self.subgroups[0]][k] if k in self.replicated else 0

    def report_rows(self):
        for k in self.outcomes:
            for s in self.subgroups:
                yield {
                    "method": self.method,
                    "gamma": self.gamma,
                    "outcome_id": k,
                    "subgroup": s,
                    "direction": self.direction[s][k],
                    "selected": int(self.selected[s][k]),
                    "p_onesided": self.p_onesided[s][k],
                    "holm_threshold": self.thresholds[s][k],
                    "rejected": int(self.status[s][k] != 0),
                    "replicated": int(k in self.replicated),
                    "global_discovery": int(k in self.global_discoveries),
                }


def _check_alpha(alpha):
    alpha = float(alpha)
    if not (0.0 <= alpha < 1.0):
        raise InvalidParameterError(f"alpha must lie in [0, 1), got {alpha!r}")
    return alpha


def _shared_outcomes(a: SubgroupEvidence, b: SubgroupEvidence) -> tuple:
    if set(a.triples) != set(b.triples):
        only_a = sorted(set(a.triples) - set(b.triples))
        only_b = sorted(set(b.triples) - set(a.triples))
        raise InvalidInputError(f"outcome sets differ: only in {a.name}: {only_a}; only in {b.name}: {only_b}")
    if a.name == b.name:
        raise InvalidInputError("the two subgroups need distinct names")
    # Canonical order makes results independent of the caller's outcome order.
    return tuple(sorted(a.triples))


# --- array core -------------------------------------------------------------


def _test_one_side(p_right, p_left, direction, weights, level):
    p = np.where(direction == 1, p_right, p_left)
    rejected, thresholds = weighted_holm_mask(p, weights, level)
    return p, rejected, thresholds


def automated_arrays(ra, la, rb, lb, alpha):
    """Automated cross-screening on stacked one-sided p-values.

    Returns a dict of arrays keyed ``dir_*``, ``sel_*``, ``p_*``, ``rej_*``,
    ``thr_*`` for the tested subgroups ``a`` and ``b``, plus ``replicated``
    and ``union``.
    """
    half = alpha / 2.0
    out = {}
    for tested, (r_scr, l_scr), (r_t, l_t) in (("b", (ra, la), (rb, lb)), ("a", (rb, lb), (ra, la))):
        direction = np.where(r_scr <= l_scr, 1, -1)
        selected = np.minimum(r_scr, l_scr) <= half
        p, rej, thr = _test_one_side(r_t, l_t, direction, selected.astype(float), half)
        out[f"dir_{tested}"], out[f"sel_{tested}"] = direction, selected
        out[f"p_{tested}"], out[f"rej_{tested}"], out[f"thr_{tested}"] = p, rej, thr
    return _finish(out)


def screening_weights(p_screen, c, alpha):
    """Weights ``m / (n_sel + c * n_unsel)`` for selected and ``c`` times that for the rest."""
    m = p_screen.shape[-1]
    selected = p_screen <= alpha / 2.0
    n_sel = selected.sum(axis=-1, keepdims=True)
    denom = n_sel + c * (m - n_sel)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(denom > 0, m * np.where(selected, 1.0, c) / denom, 0.0)
    return selected, w


def weighted_arrays(ra, la, mean_a, rb, lb, mean_b, c, alpha):
    """Weighted cross-screening on stacked arrays; same keys as :func:`automated_arrays`."""
    half = alpha / 2.0
    out = {}
    for tested, (r_scr, l_scr, mean_scr), (r_t, l_t) in (
        ("b", (ra, la, mean_a), (rb, lb)),
        ("a", (rb, lb, mean_b), (ra, la)),
    ):
        direction = np.where(mean_scr > 0, 1, -1)
        p_screen = np.where(direction == 1, r_scr, l_scr)
        selected, w = screening_weights(p_screen, c, alpha)
        p, rej, thr = _test_one_side(r_t, l_t, direction, w, half)
        out[f"dir_{tested}"], out[f"sel_{tested}"] = direction, selected
        out[f"p_{tested}"], out[f"rej_{tested}"], out[f"thr_{tested}"] = p, rej, thr
        out[f"w_{tested}"] = w
    return _finish(out)


def _finish(out):
    status_a = out["dir_a"] * out["rej_a"]
    status_b = out["dir_b"] * out["rej_b"]
    out["status_a"], out["status_b"] = status_a, status_b
    out["replicated"] = status_a * status_b == 1
    out["union"] = out["rej_a"] | out["rej_b"]
    return out


def holm_global_arrays(ra, la, rb, lb, alpha):
    """Concordant Fisher p-values per outcome, then Holm at ``alpha``."""
    p_g = concordant_fisher_array(ra, la, rb, lb)
    rej, thr = holm_mask(p_g, alpha)
    return p_g, rej, thr


def holm_twosided_arrays(ra, la, rb, lb, alpha):
    """Holm at ``alpha`` on all ``2 * min(p, q)`` of both subgroups; outcome found if either is rejected."""
    two = np.minimum(1.0, 2.0 * np.concatenate((np.minimum(ra, la), np.minimum(rb, lb)), axis=-1))
    rej, thr = holm_mask(two, alpha)
    m = ra.shape[-1]
    return two, rej[..., :m] | rej[..., m:], rej, thr


def holm_max_arrays(ra, la, rb, lb, alpha):
    """Holm at ``alpha`` on the maximum-p replicability p-values."""
    p_max = max_p_array(ra, la, rb, lb)
    rej, thr = holm_mask(p_max, alpha)
    direction = np.where(np.maximum(ra, rb) <= np.maximum(la, lb), 1, -1)
    return p_max, rej, thr, direction


# --- dictionary API ---------------------------------------------------------


def _result(method, outcomes, a, b, arr, alpha, gamma, c=None, global_key="union"):
    names = (a.name, b.name)

    def per(key):
        return {
            a.name: {k: _py(arr[f"{key}_a"][i]) for i, k in enumerate(outcomes)},
            b.name: {k: _py(arr[f"{key}_b"][i]) for i, k in enumerate(outcomes)},
        }

    replicated = frozenset(k for i, k in enumerate(outcomes) if arr["replicated"][i])
    glob = frozenset(k for i, k in enumerate(outcomes) if arr[global_key][i])
    return ScreeningResult(
        method=method,
        outcomes=outcomes,
        subgroups=names,
        direction=per("dir"),
        status=per("status"),
        selected=per("sel"),
        p_onesided=per("p"),
        thresholds=per("thr"),
        replicated=replicated,
        global_discoveries=glob,
        alpha=alpha,
        gamma=a.gamma,
        c=c,
    )


def _py(x):
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    return float(x)


def automated_cross_screen(a: SubgroupEvidence, b: SubgroupEvidence, alpha: float = 0.05) -> ScreeningResult:
    """Automated cross-screening for directional replicability.

    For each direction of screening, the screening subgroup picks the
    alternative with the smaller one-sided p-value (right on ties) and
    selects outcomes whose minimum one-sided p-value is at most ``alpha/2``;
    Holm at ``alpha/2`` is then applied to the selected outcomes in the other
    subgroup. An outcome is replicated when both subgroups reject it in the
    same direction. ``global_discoveries`` is the union of the two rejection sets.
    """
    alpha = _check_alpha(alpha)
    outcomes = _shared_outcomes(a, b)
    ra, la = a.arrays(outcomes)
    rb, lb = b.arrays(outcomes)
    arr = automated_arrays(ra, la, rb, lb, alpha)
    return _result("automated", outcomes, a, b, arr, alpha, a.gamma)


def _check_c(c):
    c = float(c)
    if not (0.0 <= c <= 1.0):
        raise InvalidParameterError(f"c must lie in [0, 1], got {c!r}")
    return c


def _weighted(a, b, c, alpha):
    alpha = _check_alpha(alpha)
    c = _check_c(c)
    outcomes = _shared_outcomes(a, b)
    ra, la = a.arrays(outcomes)
    rb, lb = b.arrays(outcomes)
    arr = weighted_arrays(ra, la, a.mean_array(outcomes), rb, lb, b.mean_array(outcomes), c, alpha)
    return outcomes, arr, alpha, c


def weighted_cross_screen_replicability(
    a: SubgroupEvidence, b: SubgroupEvidence, c: float = 0.0, alpha: float = 0.05
) -> ScreeningResult:
    """Weighted cross-screening; replicated outcomes are rejected in both subgroups in the same direction.

    Directions come from the sign of the other subgroup's mean difference.
    Outcomes whose screening-side p-value (in that subgroup's own direction)
    is at most ``alpha/2`` get weight ``m / (n_sel + c * n_unsel)``, the rest
    ``c`` times that; weighted Holm runs at ``alpha/2`` in each subgroup.
    With ``c = 0`` unselected outcomes leave the family entirely.
    """
    outcomes, arr, alpha, c = _weighted(a, b, c, alpha)
    return _result("weighted-replicability", outcomes, a, b, arr, alpha, a.gamma, c)


def weighted_cross_screen_global(
    a: SubgroupEvidence, b: SubgroupEvidence, c: float = 0.0, alpha: float = 0.05
) -> ScreeningResult:
    """As :func:`weighted_cross_screen_replicability`; global nulls rejected in either subgroup are discoveries."""
    outcomes, arr, alpha, c = _weighted(a, b, c, alpha)
    return _result("weighted-global", outcomes, a, b, arr, alpha, a.gamma, c)


@dataclass(frozen=True)
class GlobalNullResult:
    method: str
    outcomes: tuple
    pvalues: dict
    thresholds: dict
    direction: dict
    discoveries: frozenset
    alpha: float
    gamma: float
    claim: str = "global"

    def report_rows(self):
        for k in self.outcomes:
            found = int(k in self.discoveries)
            yield {
                "method": self.method,
                "gamma": self.gamma,
                "outcome_id": k,
                "subgroup": "both",
                "direction": self.direction[k],
                "selected": 1,
                "p_onesided": self.pvalues[k],
                "holm_threshold": self.thresholds[k],
                "rejected": found,
                "replicated": found if self.claim == "replicability" else 0,
                "global_discovery": found if self.claim == "global" else 0,
            }


def holm_global_nulls_detail(a: SubgroupEvidence, b: SubgroupEvidence, alpha: float = 0.05) -> GlobalNullResult:
    alpha = _check_alpha(alpha)
    outcomes = _shared_outcomes(a, b)
    ra, la = a.arrays(outcomes)
    rb, lb = b.arrays(outcomes)
    p_g, rej, thr = holm_global_arrays(ra, la, rb, lb, alpha)
    # Reported direction: the concordant branch with the smaller Fisher p-value.
    f_right = np.atleast_1d(fisher_combine_onesided(ra, rb))
    f_left = np.atleast_1d(fisher_combine_onesided(la, lb))
    return GlobalNullResult(
        "holm-global",
        outcomes,
        {k: float(p_g[i]) for i, k in enumerate(outcomes)},
        {k: float(thr[i]) for i, k in enumerate(outcomes)},
        {k: 1 if f_right[i] <= f_left[i] else -1 for i, k in enumerate(outcomes)},
        frozenset(k for i, k in enumerate(outcomes) if rej[i]),
        alpha,
        a.gamma,
    )


def holm_global_nulls(a: SubgroupEvidence, b: SubgroupEvidence, alpha: float = 0.05) -> frozenset:
    """Outcomes whose global null is rejected by Holm on concordant Fisher p-values."""
    return holm_global_nulls_detail(a, b, alpha).discoveries


def holm_twosided_global(a: SubgroupEvidence, b: SubgroupEvidence, alpha: float = 0.05) -> frozenset:
    """Holm on the pooled two-sided p-values; an outcome is found if either subgroup rejects."""
    return holm_twosided_detail(a, b, alpha).global_discoveries


def holm_twosided_detail(a: SubgroupEvidence, b: SubgroupEvidence, alpha: float = 0.05) -> ScreeningResult:
    alpha = _check_alpha(alpha)
    outcomes = _shared_outcomes(a, b)
    ra, la = a.arrays(outcomes)
    rb, lb = b.arrays(outcomes)
    two, found, rej, thr = holm_twosided_arrays(ra, la, rb, lb, alpha)
    m = len(outcomes)
    arr = {
        "dir_a": np.where(ra <= la, 1, -1),
        "dir_b": np.where(rb <= lb, 1, -1),
        "sel_a": np.ones(m, bool),
        "sel_b": np.ones(m, bool),
        "p_a": two[:m],
        "p_b": two[m:],
        "rej_a": rej[:m],
        "rej_b": rej[m:],
        "thr_a": thr[:m],
        "thr_b": thr[m:],
    }
    res = _result("holm-twosided", outcomes, a, b, _finish(arr), alpha, a.gamma)
    # Two-sided rejections carry no replicability claim.
    return ScreeningResult(**{**res.__dict__, "replicated": frozenset()})


def holm_max_detail(a: SubgroupEvidence, b: SubgroupEvidence, alpha: float = 0.05) -> GlobalNullResult:
    """Holm on maximum p-values; discoveries here are replicability claims."""
    alpha = _check_alpha(alpha)
    outcomes = _shared_outcomes(a, b)
    ra, la = a.arrays(outcomes)
    rb, lb = b.arrays(outcomes)
    p_max, rej, thr, direction = holm_max_arrays(ra, la, rb, lb, alpha)
    return GlobalNullResult(
        "holm-max",
        outcomes,
        {k: float(p_max[i]) for i, k in enumerate(outcomes)},
        {k: float(thr[i]) for i, k in enumerate(outcomes)},
        {k: int(direction[i]) for i, k in enumerate(outcomes)},
        frozenset(k for i, k in enumerate(outcomes) if rej[i]),
        alpha,
        a.gamma,
        claim="replicability",
    )


def write_report(path, blocks) -> None:
    """Write report rows from several results (one block per gamma) to CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for block in blocks:
            for row in block.report_rows():
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


# --- differences CSV -----------------------------------------------------------

DIFFERENCE_COLUMNS = ("outcome_id", "subgroup_id", "pair_id", "diff")


def read_differences(path) -> dict:
    """Long-format differences as ``{subgroup: {outcome: array}}``.

    Rows with an empty ``diff`` are skipped, so each outcome keeps its own
    number of pairs. Subgroups and outcomes keep their order of first
    appearance.
    """
    data: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in DIFFERENCE_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise InvalidInputError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            raw = (row["diff"] or "").strip()
            if not raw:
                continue
            try:
                x = float(raw)
            except ValueError:
                raise InvalidInputError(f"{path}:{lineno}: diff is not a number: {raw!r}") from None
            if not np.isfinite(x):
                raise InvalidInputError(f"{path}:{lineno}: diff is not finite")
            data.setdefault(row["subgroup_id"], {}).setdefault(row["outcome_id"], []).append(x)
    return {s: {k: np.array(v) for k, v in d.items()} for s, d in data.items()}


def write_differences(path, data) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIFFERENCE_COLUMNS)
        for subgroup, outcomes in data.items():
            for k, d in outcomes.items():
                for i, x in enumerate(np.asarray(d, dtype=float), start=1):
                    w.writerow([k, subgroup, i, repr(float(x))])
