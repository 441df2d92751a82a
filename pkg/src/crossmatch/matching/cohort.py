"""Cohort records, CSV input/output and a synthetic confounded cohort generator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from crossmatch.errors import InvalidInputError

FIXED_COVARIATES = ("hs_rank", "iq", "ses", "town_pop", "agree", "consc", "extra", "neuro", "open")
VARYING_COVARIATES = ("children", "age", "married", "educ_years", "prior_depression")
COVARIATES = FIXED_COVARIATES + VARYING_COVARIATES
RELIGIONS = ("catholic", "non_catholic")

COHORT_COLUMNS = ("id", "religion", "year") + VARYING_COVARIATES + FIXED_COVARIATES
BIRTH_COLUMNS = ("id", "year", "unintended")


def education_years(equivalent_years: float, age: float) -> float:
    """Years of education at a given age: ``min(E, A - 6)``."""
    return float(min(equivalent_years, age - 6))


@dataclass(frozen=True)
class WomanRecord:
    """One cohort member.

    ``births`` holds ``(year, unintended)`` pairs in nondecreasing year order.
    ``trajectories`` maps a calendar year to the time-varying covariates for
    that year. ``children`` in a trajectory counts births on or before the
    year; the matching covariate instead counts births strictly before the
    match year, see :meth:`covariates_at`.
    """

    id: str
    religion: str
    fixed_covariates: dict
    births: tuple = ()
    trajectories: dict = field(default_factory=dict)

    def __post_init__(self):
        births = tuple((int(y), bool(u)) for y, u in self.births)
        years = [y for y, _ in births]
        if any(b < a for a, b in zip(years, years[1:])):
            raise InvalidInputError(f"woman {self.id}: birth years must be nondecreasing")
        object.__setattr__(self, "births", births)
        if self.religion not in RELIGIONS:
            raise InvalidInputError(f"woman {self.id}: unknown religion {self.religion!r}")
        missing = [c for c in FIXED_COVARIATES if c not in self.fixed_covariates]
        if missing:
            raise InvalidInputError(f"woman {self.id}: fixed covariates missing: {missing}")
        for year, row in self.trajectories.items():
            if "children" in row and int(row["children"]) != self.children_through(year):
                raise InvalidInputError(
                    f"woman {self.id}, year {year}: children={row['children']} but "
                    f"{self.children_through(year)} births on or before that year"
                )

    @property
    def first_unintended_year(self) -> int | None:
        for year, unintended in self.births:
            if unintended:
                return year
        return None

    def children_through(self, year: int) -> int:
        return sum(1 for y, _ in self.births if y <= year)

    def children_before(self, year: int) -> int:
        return sum(1 for y, _ in self.births if y < year)

    def has_unintended_through(self, year: int) -> bool:
        first = self.first_unintended_year
        return first is not None and first <= year

    def covariates_at(self, year: int, names=COVARIATES) -> np.ndarray:
        """Covariate vector used for matching at ``year``.

        ``children`` counts births before ``year`` so that a woman whose
        unintended birth falls in ``year`` is compared on her prior family size.
        """
        if year not in self.trajectories:
            raise InvalidInputError(f"woman {self.id}: no covariate row for year {year}")
        row = self.trajectories[year]
        out = []
        for name in names:
            if name in self.fixed_covariates:
                out.append(float(self.fixed_covariates[name]))
            elif name == "children":
                out.append(float(self.children_before(year)))
            else:
                out.append(float(row[name]))
        return np.array(out)


def covariate_matrix(women, year: int, names=COVARIATES) -> np.ndarray:
    if not women:
        return np.zeros((0, len(names)))
    return np.vstack([w.covariates_at(year, names) for w in women])


# --- CSV ----------------------------------------------------------------------


def _num(value: str, where: str) -> float:
    try:
        x = float(value)
    except ValueError:
        raise InvalidInputError(f"{where}: not a number: {value!r}") from None
    if not math.isfinite(x):
        raise InvalidInputError(f"{where}: not finite: {value!r}")
    return x


def _reader(path, required):
    fh = open(path, newline="")
    reader = csv.DictReader(fh)
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        fh.close()
        raise InvalidInputError(f"{path}: missing columns {missing}")
    return fh, reader


def load_cohort(cohort_csv, births_csv) -> list[WomanRecord]:
    """Read ``cohort.csv`` (one row per woman-year) and ``births.csv``.

    Records are returned in order of first appearance in ``cohort.csv``.
    """
    births: dict[str, list] = {}
    fh, reader = _reader(births_csv, BIRTH_COLUMNS)
    with fh:
        for lineno, row in enumerate(reader, start=2):
            where = f"{births_csv}:{lineno}"
            flag = row["unintended"].strip()
            if flag not in ("0", "1"):
                raise InvalidInputError(f"{where}: unintended must be 0 or 1, got {flag!r}")
            births.setdefault(row["id"], []).append((int(_num(row["year"], where)), flag == "1"))

    fixed: dict[str, dict] = {}
    religion: dict[str, str] = {}
    traj: dict[str, dict] = {}
    fh, reader = _reader(cohort_csv, COHORT_COLUMNS)
    with fh:
        for lineno, row in enumerate(reader, start=2):
            where = f"{cohort_csv}:{lineno}"
            wid = row["id"]
            year = int(_num(row["year"], where))
            values = {c: _num(row[c], f"{where} column {c}") for c in VARYING_COVARIATES}
            fx = {c: _num(row[c], f"{where} column {c}") for c in FIXED_COVARIATES}
            if wid not in fixed:
                fixed[wid], religion[wid], traj[wid] = fx, row["religion"], {}
            elif fx != fixed[wid] or row["religion"] != religion[wid]:
                raise InvalidInputError(f"{where}: fixed covariates or religion change across years for {wid}")
            traj[wid][year] = values

    unknown = sorted(set(births) - set(fixed))
    if unknown:
        raise InvalidInputError(f"{births_csv}: births for ids absent from the cohort: {unknown[:5]}")
    return [
        WomanRecord(wid, religion[wid], fixed[wid], tuple(sorted(births.get(wid, []))), traj[wid])
        for wid in fixed
    ]


def _fmt(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def write_cohort(records, cohort_csv, births_csv) -> None:
    with open(cohort_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COHORT_COLUMNS)
        for r in records:
            for year in sorted(r.trajectories):
                row = r.trajectories[year]
                w.writerow(
                    [r.id, r.religion, year]
                    + [_fmt(r.children_through(year) if c == "children" else row[c]) for c in VARYING_COVARIATES]
                    + [_fmt(r.fixed_covariates[c]) for c in FIXED_COVARIATES]
                )
    with open(births_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BIRTH_COLUMNS)
        for r in records:
            for year, unintended in r.births:
                w.writerow([r.id, year, int(unintended)])


# --- synthetic cohort -----------------------------------------------------------

FIRST_YEAR = 1957
LAST_YEAR = 1975
TOWN_SIZE_SHARES = (0.25, 0.2, 0.15, 0.12, 0.1, 0.08, 0.1)


def synthetic_cohort(
    n: int = 400,
    seed: int = 7,
    religion: str = "catholic",
    confounding: float = 1.0,
    unintended_logit: float = -1.6,
    id_prefix: str = "w",
) -> list[WomanRecord]:
    """Simulate a confounded cohort of high-school graduates, 1957 to 1975.

    Every woman has a yearly birth hazard that depends on marriage and family
    size. Each birth is unintended with a probability that rises with
    neuroticism and falls with parental SES and IQ (scaled by
    ``confounding``), so those three covariates are imbalanced between women
    who do and do not ever have an unintended birth. All other covariates
    enter only through their natural dependence on time and marriage. Town
    size is a 1..7 category, personality scales move in half points, and a
    depression history may predate the study window.
    """
    rng = np.random.default_rng(seed)
    records = []
    width = len(str(n))
    for i in range(n):
        birth_year = int(rng.choice([1938, 1939, 1940], p=[0.25, 0.6, 0.15]))
        iq = float(np.clip(np.round(rng.normal(100, 15)), 60, 145))
        ses = float(np.round(rng.normal(0, 1), 3))
        hs_rank = float(np.clip(np.round(50 + 0.9 * (iq - 100) + rng.normal(0, 22), 1), 1, 99))
        # Size-of-place category 1..7 and half-point personality scales.
        town_pop = float(rng.choice(7, p=TOWN_SIZE_SHARES) + 1)
        big5 = np.clip(np.round(rng.normal(3.6, 0.75, size=5) * 2) / 2, 1, 6)
        fixed = dict(zip(FIXED_COVARIATES, (hs_rank, iq, ses, town_pop, *map(float, big5))))
        neuro_z = (fixed["neuro"] - 3.6) / 0.75
        iq_z = (iq - 100) / 15

        equiv_years = float(np.clip(12 + rng.poisson(np.exp(0.3 + 0.5 * ses + 0.4 * iq_z)), 12, 20))
        marry_year = FIRST_YEAR + 1 + int(rng.gamma(2.0, 2.2)) if rng.random() < 0.9 else None
        depress_year = (
            FIRST_YEAR + int(rng.integers(-8, 19)) if rng.random() < 0.3 + 0.1 * max(neuro_z, 0) else None
        )
        risk = confounding * (0.6 * neuro_z - 0.6 * ses - 0.4 * iq_z)

        births = []
        for year in range(FIRST_YEAR + 1, LAST_YEAR + 1):
            married = marry_year is not None and year >= marry_year
            kids = len(births)
            hazard = (0.22 if married else 0.02) * (0.8**kids)
            if rng.random() < hazard:
                p_unint = 1.0 / (1.0 + math.exp(-(unintended_logit + risk + 0.35 * kids)))
                births.append((year, bool(rng.random() < p_unint)))

        traj = {}
        for year in range(FIRST_YEAR, LAST_YEAR + 1):
            age = year - birth_year
            traj[year] = {
                "children": sum(1 for y, _ in births if y <= year),
                "age": float(age),
                "married": float(marry_year is not None and year >= marry_year),
                "educ_years": education_years(equiv_years, age),
                "prior_depression": float(depress_year is not None and depress_year <= year - 2),
            }
        records.append(WomanRecord(f"{id_prefix}{i:0{width}d}", religion, fixed, tuple(births), traj))
    return records
