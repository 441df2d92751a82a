"""Outcome scores from raw survey responses.

Covers the 20-item CES-D depression score on a days-per-week scale (0..140)
and its four factor subscales, the 42-item psychological well-being scale,
three alcohol-use measures and the income-to-poverty-guideline percentage.
Item groupings are read from versioned JSON files in ``crossmatch/data`` so
that a different item order can be supplied without code changes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple

from crossmatch.errors import InvalidInputError, ValidationError

CESD_SUBSCALES = ("depressed_affect", "low_positive_affect", "somatic", "interpersonal")
PWB_ASPECTS = (
    "autonomy",
    "environmental_mastery",
    "personal_growth",
    "positive_relations",
    "purpose_in_life",
    "self_acceptance",
)
CONSEQUENCES = ("guilt", "criticism", "work", "family", "help")


# --- item maps ------------------------------------------------------------------


def _load_json(path, default_name):
    if path is None:
        text = resources.files("crossmatch.data").joinpath(default_name).read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return json.loads(text)


@dataclass(frozen=True)
class CesdItemMap:
    """1-based item numbers for reverse scoring and for each subscale."""

    n_items: int
    max_response: int
    reverse_items: frozenset
    subscales: dict
    version: int = 1

    def __post_init__(self):
        items = set(range(1, self.n_items + 1))
        if not set(self.reverse_items) <= items:
            raise ValidationError("reverse items outside the item range")
        seen = set()
        for name in CESD_SUBSCALES:
            group = set(self.subscales.get(name, ()))
            if not group or not group <= items or group & seen:
                raise ValidationError(f"CES-D subscale {name!r} is empty, out of range or overlaps another")
            seen |= group

    @property
    def unused_items(self) -> tuple:
        used = set().union(*map(set, self.subscales.values()))
        return tuple(i for i in range(1, self.n_items + 1) if i not in used)


@dataclass(frozen=True)
class PwbItemMap:
    n_items: int
    min_response: int
    max_response: int
    aspects: dict
    version: int = 1

    def __post_init__(self):
        flat = [i for name in PWB_ASPECTS for i in self.aspects.get(name, ())]
        if sorted(flat) != list(range(1, self.n_items + 1)):
            raise ValidationError("PWB aspects must partition the items exactly once")


def load_cesd_map(path=None) -> CesdItemMap:
    raw = _load_json(path, "cesd_items.json")
    return CesdItemMap(
        n_items=int(raw["n_items"]),
        max_response=int(raw["max_response"]),
        reverse_items=frozenset(int(i) for i in raw["reverse_items"]),
        subscales={k: tuple(int(i) for i in v) for k, v in raw["subscales"].items()},
        version=int(raw.get("version", 1)),
    )


def load_pwb_map(path=None) -> PwbItemMap:
    raw = _load_json(path, "pwb_items.json")
    return PwbItemMap(
        n_items=int(raw["n_items"]),
        min_response=int(raw["min_response"]),
        max_response=int(raw["max_response"]),
        aspects={k: tuple(int(i) for i in v) for k, v in raw["aspects"].items()},
        version=int(raw.get("version", 1)),
    )


CESD_MAP = load_cesd_map()
PWB_MAP = load_pwb_map()


# --- responses ------------------------------------------------------------------


def _as_int(value, what: str) -> int:
    if isinstance(value, bool):
        raise ValidationError(f"{what}: expected an integer, got {value!r}")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{what}: expected an integer, got {value!r}") from None
    if not x.is_integer():
        raise ValidationError(f"{what}: expected an integer, got {value!r}")
    return int(x)


def _check_items(values, n, lo, hi, label):
    values = tuple(values)
    if len(values) != n:
        raise ValidationError(f"{label}: expected {n} items, got {len(values)}")
    out = []
    for k, v in enumerate(values, start=1):
        x = _as_int(v, f"{label} item {k}")
        if not lo <= x <= hi:
            raise ValidationError(f"{label} item {k}: {x} outside [{lo}, {hi}]")
        out.append(x)
    return tuple(out)


@dataclass(frozen=True)
class CesdResponse:
    """Days in the past week (0..7) on which each of the 20 items applied."""

    frequencies: tuple
    item_map: CesdItemMap = CESD_MAP

    def __post_init__(self):
        m = self.item_map
        object.__setattr__(self, "frequencies", _check_items(self.frequencies, m.n_items, 0, m.max_response, "CES-D"))

    def corrected(self) -> tuple:
        """Frequencies with reverse-worded items replaced by ``7 - reported``."""
        top = self.item_map.max_response
        rev = self.item_map.reverse_items
        return tuple(top - f if k in rev else f for k, f in enumerate(self.frequencies, start=1))


@dataclass(frozen=True)
class PwbResponse:
    """Agreement ratings (1..6) for the 42 well-being items."""

    items: tuple
    item_map: PwbItemMap = PWB_MAP

    def __post_init__(self):
        m = self.item_map
        object.__setattr__(self, "items", _check_items(self.items, m.n_items, m.min_response, m.max_response, "PWB"))


class CesdSubscales(NamedTuple):
    depressed_affect: int
    low_positive_affect: int
    somatic: int
    interpersonal: int


class PwbScores(NamedTuple):
    subscales: dict
    total: int


class AlcoholMeasures(NamedTuple):
    drinking_days: int
    at_risk: int
    possible_dependence: int


# --- scores ---------------------------------------------------------------------


def score_cesd(r: CesdResponse) -> int:
    """Sum of corrected frequencies, 0..140."""
    return sum(r.corrected())


def score_cesd_subscales(r: CesdResponse) -> CesdSubscales:
    """Corrected sums over the four factor groups; unused items count nowhere."""
    c = r.corrected()
    groups = r.item_map.subscales
    return CesdSubscales(*(sum(c[i - 1] for i in groups[name]) for name in CESD_SUBSCALES))


def score_pwb(r: PwbResponse) -> PwbScores:
    """Per-aspect item sums (7..42 each) and their total."""
    subs = {name: sum(r.items[i - 1] for i in r.item_map.aspects[name]) for name in PWB_ASPECTS}
    return PwbScores(subs, sum(subs.values()))


def derive_alcohol_measures(drink_days, avg_drinks, consequences) -> AlcoholMeasures:
    """Drinking days per month, regular at-risk drinking and possible dependence.

    At-risk drinking means an average of at least 3 drinks on drinking days
    and at least 4 drinking days in the month. Possible dependence means at
    least two of the five consequence flags are set.
    """
    days = _as_int(drink_days, "drink_days")
    if not 0 <= days <= 31:
        raise ValidationError(f"drink_days: {days} outside [0, 31]")
    try:
        avg = float(avg_drinks)
    except (TypeError, ValueError):
        raise ValidationError(f"avg_drinks: not a number: {avg_drinks!r}") from None
    if not math.isfinite(avg) or avg < 0:
        raise ValidationError(f"avg_drinks: must be finite and nonnegative, got {avg_drinks!r}")
    flags = tuple(consequences)
    if len(flags) != len(CONSEQUENCES):
        raise ValidationError(f"consequences: expected {len(CONSEQUENCES)} flags, got {len(flags)}")
    total = 0
    for name, f in zip(CONSEQUENCES, flags):
        x = _as_int(f, f"consequence {name}")
        if x not in (0, 1):
            raise ValidationError(f"consequence {name}: flag must be 0 or 1, got {x}")
        total += x
    return AlcoholMeasures(days, int(avg >= 3 and days >= 4), int(total >= 2))


def poverty_percentage(household_income, guideline) -> float:
    """``100 * income / guideline``."""
    income, guide = float(household_income), float(guideline)
    if not math.isfinite(guide) or guide <= 0:
        raise ValidationError(f"poverty guideline must be positive, got {guideline!r}")
    if not math.isfinite(income):
        raise ValidationError(f"household income must be finite, got {household_income!r}")
    return 100.0 * income / guide


# --- table scoring ----------------------------------------------------------------

KEY_COLUMNS = ("id", "wave")
CESD_COLUMNS = tuple(f"cesd_{k}" for k in range(1, 21))
PWB_COLUMNS = tuple(f"pwb_{k}" for k in range(1, 43))
ALCOHOL_COLUMNS = ("drink_days", "avg_drinks") + tuple(f"cons_{c}" for c in CONSEQUENCES)
ECONOMIC_COLUMNS = ("household_income", "poverty_guideline")
PASSTHROUGH_COLUMNS = ("smoking_packs", "pcs12")
RAW_COLUMNS = KEY_COLUMNS + CESD_COLUMNS + PWB_COLUMNS + ALCOHOL_COLUMNS + ECONOMIC_COLUMNS + PASSTHROUGH_COLUMNS

OUTCOME_COLUMNS = (
    ("cesd",)
    + tuple(f"cesd_{s}" for s in CESD_SUBSCALES)
    + tuple(f"pwb_{a}" for a in PWB_ASPECTS)
    + ("pwb_total", "drinking_days", "at_risk_drinker", "possible_dependence", "poverty_pct")
)


def _cells(row, cols):
    vals = [row[c].strip() for c in cols]
    return None if any(v == "" for v in vals) else vals


def score_row(row: dict) -> dict:
    """Derived outcomes for one raw CSV row; any missing input leaves its score empty."""
    out = dict.fromkeys(OUTCOME_COLUMNS, "")
    cesd = _cells(row, CESD_COLUMNS)
    if cesd is not None:
        r = CesdResponse(cesd)
        out["cesd"] = score_cesd(r)
        for name, v in zip(CESD_SUBSCALES, score_cesd_subscales(r)):
            out[f"cesd_{name}"] = v
    pwb = _cells(row, PWB_COLUMNS)
    if pwb is not None:
        scores = score_pwb(PwbResponse(pwb))
        for name in PWB_ASPECTS:
            out[f"pwb_{name}"] = scores.subscales[name]
        out["pwb_total"] = scores.total
    alcohol = _cells(row, ALCOHOL_COLUMNS)
    if alcohol is not None:
        m = derive_alcohol_measures(alcohol[0], alcohol[1], alcohol[2:])
        out["drinking_days"], out["at_risk_drinker"], out["possible_dependence"] = m
    econ = _cells(row, ECONOMIC_COLUMNS)
    if econ is not None:
        out["poverty_pct"] = repr(poverty_percentage(*econ))
    # Smoking and PCS-12 are carried through unchanged, only checked for being numeric.
    for c in PASSTHROUGH_COLUMNS:
        v = row[c].strip()
        if v:
            try:
                x = float(v)
            except ValueError:
                raise ValidationError(f"{c}: not a number: {v!r}") from None
            if not math.isfinite(x):
                raise ValidationError(f"{c}: not finite: {v!r}")
    return out


def score_file(raw_csv, out_csv) -> int:
    """Score every row of ``raw_csv`` and write the raw columns plus outcomes.

    Returns the number of rows written. Errors name the line and column.
    """
    with open(raw_csv, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in RAW_COLUMNS if c not in header]
        if missing:
            raise InvalidInputError(f"{raw_csv}: missing columns {missing}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise InvalidInputError(f"{raw_csv}:{lineno}: wrong number of fields")
            try:
                derived = score_row(row)
            except ValidationError as exc:
                raise InvalidInputError(f"{raw_csv}:{lineno}: {exc}") from None
            rows.append([row[c] for c in header] + [derived[c] for c in OUTCOME_COLUMNS])
    with open(out_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header) + list(OUTCOME_COLUMNS))
        w.writerows(rows)
    return len(rows)
