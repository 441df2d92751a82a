"""Monte-Carlo power and FWER of the cross-screening procedures.

Each replication draws, for every outcome ``k`` and subgroup ``j``, ``I``
paired differences from ``N(mu * h_kj / sqrt(I), 1)``. One-sided sensitivity
p-values of the permutational t statistic feed every competing procedure.

Noise is drawn once per replication from ``SeedSequence([seed, rep])`` and
shared by every configuration of a study (common random numbers), so
differences between methods and grid cells are estimated with little extra
noise. Replications are processed in fixed-size chunks whose integer counts
are summed, which makes results independent of the number of worker threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import stats

from crossmatch.errors import ConfigError, InvalidParameterError
from crossmatch.paired import AUTO_EXACT_MAX, SCORERS, normal_upper_bound, pvalue_floor, sensitivity_pvalues
from crossmatch.screening import (
    automated_arrays,
    holm_global_arrays,
    holm_max_arrays,
    holm_twosided_arrays,
    weighted_arrays,
)

C_GRID = tuple(round(0.1 * i, 1) for i in range(11))
K11_GRID = (1, 3, 6, 10, 13, 16)
GAMMA_GRID = (1.0, 1.2, 1.5)
CHUNK = 250

#: Methods and the kind of claim each one makes.
METHODS = {
    "weighted-replicability": "replicability",
    "automated": "replicability",
    "holm-max": "replicability",
    "weighted-global": "global",
    "holm-global": "global",
    "holm": "global",
}
WEIGHTED = ("weighted-replicability", "weighted-global")
METRICS = ("replicability", "global", "fwer")

POWER_COLUMNS = ("metric", "method", "gamma", "c", "K11", "mu", "replications", "power", "mc_se", "any_power")


@dataclass(frozen=True)
class SimConfig:
    """One simulated configuration.

    ``truth`` holds one ``(h1, h2)`` pair per outcome; an empty tuple means
    every null is true.
    """

    n_outcomes: int = 16
    truth: tuple = ()
    mu: float = 4.0
    n_pairs: int = 100
    gamma: float = 1.0
    c_grid: tuple = C_GRID
    alpha: float = 0.05
    replications: int = 2500
    seed: int = 20220101
    statistic: str = "ttest"
    mode: str = "auto"

    def __post_init__(self):
        truth = tuple(tuple(int(x) for x in h) for h in self.truth) or ((0, 0),) * self.n_outcomes
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "c_grid", tuple(float(c) for c in self.c_grid))
        _validate(self)

    @classmethod
    def replicable(cls, k11: int, **kwargs) -> "SimConfig":
        """``k11`` outcomes with an effect in both subgroups, the rest null."""
        m = kwargs.get("n_outcomes", 16)
        if not 0 <= k11 <= m:
            raise ConfigError("K11", f"must lie in [0, {m}], got {k11}")
        return cls(truth=((1, 1),) * k11 + ((0, 0),) * (m - k11), **kwargs)

    @property
    def h(self) -> np.ndarray:
        return np.array(self.truth, dtype=float)


def _validate(cfg) -> None:
    if cfg.n_outcomes < 1:
        raise ConfigError("n_outcomes", "must be at least 1")
    if len(cfg.truth) != cfg.n_outcomes or any(h not in ((0, 0), (0, 1), (1, 0), (1, 1)) for h in cfg.truth):
        raise ConfigError("truth", "need one (h1, h2) pair in {0,1}^2 per outcome")
    if cfg.n_pairs < 1:
        raise ConfigError("n_pairs", "must be at least 1")
    if not math.isfinite(cfg.mu):
        raise ConfigError("mu", "must be finite")
    if not (math.isfinite(cfg.gamma) and cfg.gamma >= 1):
        raise ConfigError("gamma", f"must be >= 1, got {cfg.gamma}")
    if not cfg.c_grid or any(not 0 <= c <= 1 for c in cfg.c_grid):
        raise ConfigError("c_grid", "values must lie in [0, 1]")
    if not 0 < cfg.alpha < 1:
        raise ConfigError("alpha", f"must lie in (0, 1), got {cfg.alpha}")
    if cfg.replications < 1:
        raise ConfigError("replications", "must be at least 1")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed", "must be a 64-bit unsigned integer")
    if cfg.statistic not in SCORERS:
        raise ConfigError("statistic", f"must be one of {sorted(SCORERS)}")
    if cfg.mode not in ("exact", "normal", "auto"):
        raise ConfigError("mode", "must be exact, normal or auto")


# --- data generation ------------------------------------------------------------------


def _noise(seed: int, rep: int, n_outcomes: int, n_pairs: int) -> np.ndarray:
    """Standard normal draws of shape ``(n_outcomes, 2, n_pairs)`` for one replication."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, rep]))
    return rng.standard_normal((n_outcomes, 2, n_pairs))


def generate_differences(cfg: SimConfig, replication_index: int):
    """Paired differences for both subgroups, each of shape ``(n_outcomes, n_pairs)``."""
    z = _noise(cfg.seed, replication_index, cfg.n_outcomes, cfg.n_pairs)
    d = z + (cfg.mu / math.sqrt(cfg.n_pairs)) * cfg.h[:, :, None]
    return d[:, 0, :], d[:, 1, :]


def onesided_arrays(d, gamma: float, statistic: str = "ttest", mode: str = "auto"):
    """Right- and left-sided sensitivity p-values along the last axis of ``d``.

    Normal-mode bounds are vectorized. Exact mode, and rows containing zero
    differences, fall back to the per-row routine.
    """
    d = np.asarray(d, dtype=float)
    n = d.shape[-1]
    exact = mode == "exact" or (mode == "auto" and n <= AUTO_EXACT_MAX)
    if exact or np.any(d == 0):
        flat = d.reshape(-1, n)
        right = np.empty(flat.shape[0])
        left = np.empty(flat.shape[0])
        for i, row in enumerate(flat):
            t = sensitivity_pvalues(SCORERS[statistic](row), gamma, mode)
            right[i], left[i] = t.right, t.left
        return right.reshape(d.shape[:-1]), left.reshape(d.shape[:-1])
    a = np.abs(d)
    q = stats.rankdata(a, axis=-1) if statistic == "wilcoxon" else a
    total = q.sum(axis=-1)
    total_sq = (q * q).sum(axis=-1)
    obs = np.where(d > 0, q, 0.0).sum(axis=-1)
    floor = pvalue_floor(n)
    right = np.maximum(normal_upper_bound(obs, total, total_sq, gamma), floor)
    left = np.maximum(normal_upper_bound(total - obs, total, total_sq, gamma), floor)
    return right, left


# --- procedures -----------------------------------------------------------------------


def method_claims(method: str, ra, la, mean_a, rb, lb, mean_b, alpha: float, c: float | None = None):
    """Claims of one procedure on stacked p-values.

    Returns ``(claims, direction)``: boolean claims per outcome and, for
    replicability procedures, the claimed direction (``+1`` or ``-1``);
    ``direction`` is ``None`` for global-null procedures.
    """
    if method == "automated":
        out = automated_arrays(ra, la, rb, lb, alpha)
        return out["replicated"], out["status_a"]
    if method == "weighted-replicability":
        out = weighted_arrays(ra, la, mean_a, rb, lb, mean_b, c, alpha)
        return out["replicated"], out["status_a"]
    if method == "weighted-global":
        out = weighted_arrays(ra, la, mean_a, rb, lb, mean_b, c, alpha)
        return out["union"], None
    if method == "holm-max":
        _, rej, _, direction = holm_max_arrays(ra, la, rb, lb, alpha)
        return rej, direction
    if method == "holm-global":
        _, rej, _ = holm_global_arrays(ra, la, rb, lb, alpha)
        return rej, None
    if method == "holm":
        _, found, _, _ = holm_twosided_arrays(ra, la, rb, lb, alpha)
        return found, None
    raise InvalidParameterError(f"unknown method {method!r}; choose from {sorted(METHODS)}")


def _targets(method, h, mu):
    """Boolean mask of outcomes whose claim is correct, and the correct direction."""
    if METHODS[method] == "replicability":
        return (h[:, 0] == 1) & (h[:, 1] == 1) & (mu != 0), 1 if mu >= 0 else -1
    return ((h[:, 0] == 1) | (h[:, 1] == 1)) & (mu != 0), None


def _count(method, claims, direction, h, mu):
    """Per-replication (true discoveries, any true discovery, any false claim), summed."""
    target, sign = _targets(method, h, mu)
    correct = claims & target
    if direction is not None:
        correct &= direction == sign
    false = claims & ~correct
    n_true = correct.sum(axis=-1)
    return np.array([int(n_true.sum()), int((n_true > 0).sum()), int(false.any(axis=-1).sum())], dtype=np.int64)


# --- study engine ------------------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    """A data configuration: one truth pattern, effect size and gamma."""

    k11: int
    mu: float
    gamma: float
    truth: tuple


@dataclass(frozen=True)
class Job:
    """One output row: a method (and c) evaluated on one cell for one metric."""

    metric: str
    method: str
    c: float | None
    cell: Cell


def _chunk_counts(base: SimConfig, jobs, start: int, stop: int) -> np.ndarray:
    z = np.stack([_noise(base.seed, r, base.n_outcomes, base.n_pairs) for r in range(start, stop)])
    scale = 1.0 / math.sqrt(base.n_pairs)
    out = np.zeros((len(jobs), 3), dtype=np.int64)
    by_cell: dict = {}
    for i, job in enumerate(jobs):
        by_cell.setdefault(job.cell, []).append(i)
    for cell, idx in by_cell.items():
        h = np.array(cell.truth, dtype=float)
        d = z + (cell.mu * scale) * h[None, :, :, None]
        right, left = onesided_arrays(d, cell.gamma, base.statistic, base.mode)
        means = d.mean(axis=-1)
        args = (right[..., 0], left[..., 0], means[..., 0], right[..., 1], left[..., 1], means[..., 1])
        for i in idx:
            job = jobs[i]
            claims, direction = method_claims(job.method, *args, base.alpha, job.c)
            out[i] = _count(job.method, claims, direction, h, cell.mu)
    return out


def _run_jobs(base: SimConfig, jobs, threads: int = 1) -> np.ndarray:
    reps = base.replications
    bounds = [(s, min(s + CHUNK, reps)) for s in range(0, reps, CHUNK)]
    if threads <= 1 or len(bounds) == 1:
        parts = [_chunk_counts(base, jobs, s, e) for s, e in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _chunk_counts(base, jobs, *b), bounds))
    return np.sum(parts, axis=0)


@dataclass(frozen=True)
class PowerRow:
    metric: str
    method: str
    gamma: float
    c: float | None
    k11: int
    mu: float
    replications: int
    power: float
    mc_se: float
    any_power: float

    def as_csv(self) -> list:
        return [
            self.metric,
            self.method,
            _fmt(self.gamma),
            "" if self.c is None else _fmt(self.c),
            self.k11,
            _fmt(self.mu),
            self.replications,
            repr(self.power),
            repr(self.mc_se),
            "" if math.isnan(self.any_power) else repr(self.any_power),
        ]


def _fmt(x: float) -> str:
    return format(float(x), "g")


def mc_standard_error(p: float, reps: int) -> float:
    """``sqrt(p (1 - p) / reps)``."""
    return math.sqrt(max(p * (1.0 - p), 0.0) / reps)


def _rows(jobs, counts, reps) -> list[PowerRow]:
    rows = []
    for job, row in zip(jobs, counts):
        n_true, any_true, any_false = (int(x) for x in row)
        cell = job.cell
        if job.metric == "fwer":
            power, any_power = any_false / reps, math.nan
        else:
            target, _ = _targets(job.method, np.array(cell.truth, dtype=float), cell.mu)
            power = n_true / (reps * int(target.sum()))
            any_power = any_true / reps
        rows.append(
            PowerRow(
                job.metric, job.method, cell.gamma, job.c, cell.k11, cell.mu, reps,
                power, mc_standard_error(power, reps), any_power,
            )
        )
    return rows


def _method_jobs(metric, methods, cell, c_grid):
    jobs = []
    for method in methods:
        for c in c_grid if method in WEIGHTED else (None,):
            jobs.append(Job(metric, method, c, cell))
    return jobs


def estimate_power(cfg: SimConfig, method: str, metric: str = "power", threads: int = 1) -> list[PowerRow]:
    """Power (expected true-positive proportion) or FWER of one method on ``cfg``.

    ``metric="power"`` uses the claim type of the method: replicability
    procedures are credited for replicated claims in the effect's direction
    on outcomes with effects in both subgroups, global procedures for claims
    on outcomes with an effect in either subgroup. ``metric="fwer"`` reports
    the probability of at least one false claim. Weighted methods give one
    row per value of ``cfg.c_grid``.
    """
    if method not in METHODS:
        raise InvalidParameterError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    k11 = sum(1 for h in cfg.truth if h == (1, 1))
    cell = Cell(k11, float(cfg.mu), float(cfg.gamma), cfg.truth)
    if metric == "power":
        target, _ = _targets(method, cfg.h, cfg.mu)
        if not target.any():
            raise InvalidParameterError("no true signals for this method's claims; use metric='fwer'")
        metric = METHODS[method]
    elif metric != "fwer":
        raise InvalidParameterError(f"metric must be 'power' or 'fwer', got {metric!r}")
    jobs = _method_jobs(metric, (method,), cell, cfg.c_grid)
    return _rows(jobs, _run_jobs(cfg, jobs, threads), cfg.replications)


# --- full study ----------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyConfig:
    """Grid for the full power study; every key can be set from a ``key=value`` file."""

    n_outcomes: int = 16
    n_pairs: int = 100
    alpha: float = 0.05
    replications: int = 2500
    seed: int = 20220101
    k11_grid: tuple = K11_GRID
    gammas: tuple = GAMMA_GRID
    c_grid: tuple = C_GRID
    mu_replicability: float = 4.0
    mu_global: float = 3.0
    metrics: tuple = METRICS
    statistic: str = "ttest"
    mode: str = "auto"

    def __post_init__(self):
        for name in ("k11_grid", "gammas", "c_grid", "metrics"):
            if not getattr(self, name):
                raise ConfigError(name, "must not be empty")
        if any(not 1 <= k <= self.n_outcomes for k in self.k11_grid):
            raise ConfigError("k11_grid", f"values must lie in [1, {self.n_outcomes}]")
        if any(m not in METRICS for m in self.metrics):
            raise ConfigError("metrics", f"values must be among {list(METRICS)}")
        if any(not (math.isfinite(g) and g >= 1) for g in self.gammas):
            raise ConfigError("gammas", "values must be >= 1")
        _validate(self.base())

    def base(self, **overrides) -> SimConfig:
        kw = dict(
            n_outcomes=self.n_outcomes, n_pairs=self.n_pairs, alpha=self.alpha,
            replications=self.replications, seed=self.seed, c_grid=self.c_grid,
            statistic=self.statistic, mode=self.mode,
        )
        kw.update(overrides)
        return SimConfig(**kw)

    def jobs(self) -> list[Job]:
        m = self.n_outcomes
        jobs = []
        for gamma in self.gammas:
            for metric in self.metrics:
                if metric == "fwer":
                    cell = Cell(0, 0.0, float(gamma), ((0, 0),) * m)
                    jobs += _method_jobs(metric, METHODS, cell, self.c_grid)
                    continue
                mu = self.mu_replicability if metric == "replicability" else self.mu_global
                methods = [k for k, v in METHODS.items() if v == metric]
                for k11 in self.k11_grid:
                    cell = Cell(k11, float(mu), float(gamma), ((1, 1),) * k11 + ((0, 0),) * (m - k11))
                    jobs += _method_jobs(metric, methods, cell, self.c_grid)
        return jobs


_TUPLE_KEYS = {"k11_grid": int, "gammas": float, "c_grid": float, "metrics": str}


def parse_config(text: str, env_seed: str | None = None) -> StudyConfig:
    """Parse ``key=value`` lines (``#`` comments allowed) into a :class:`StudyConfig`.

    List values are comma-separated. ``c_grid`` also accepts ``start:stop:step``.
    ``env_seed``, when given, replaces the configured seed.
    """
    types = {f.name: type(f.default) for f in fields(StudyConfig)}
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(key, f"unknown key (allowed: {', '.join(sorted(types))})")
        values[key] = _parse_value(key, value, types[key])
    if env_seed is not None:
        values["seed"] = _parse_value("seed", env_seed, int)
    try:
        return StudyConfig(**values)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None


def _parse_value(key, value, typ):
    try:
        if key in _TUPLE_KEYS:
            conv = _TUPLE_KEYS[key]
            if key == "c_grid" and value.count(":") == 2:
                start, stop, step = (float(v) for v in value.split(":"))
                if step <= 0:
                    raise ValueError("step must be positive")
                n = int(math.floor((stop - start) / step + 1e-9)) + 1
                return tuple(round(start + i * step, 10) for i in range(n))
            return tuple(conv(v.strip()) for v in value.split(",") if v.strip())
        if typ is int:
            return int(value)
        if typ is float:
            x = float(value)
            if not math.isfinite(x):
                raise ValueError("not finite")
            return x
        return value
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {value!r}: {exc}") from None


@dataclass
class PowerTable:
    rows: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(POWER_COLUMNS)
            for r in self.rows:
                w.writerow(r.as_csv())

    def select(self, metric=None, method=None, gamma=None, k11=None, c="any") -> list[PowerRow]:
        out = []
        for r in self.rows:
            if metric is not None and r.metric != metric:
                continue
            if method is not None and r.method != method:
                continue
            if gamma is not None and not math.isclose(r.gamma, gamma):
                continue
            if k11 is not None and r.k11 != k11:
                continue
            if c != "any" and not (r.c == c if c is None or r.c is None else math.isclose(r.c, c, abs_tol=1e-12)):
                continue
            out.append(r)
        return out

    def get(self, metric, method, gamma, k11, c=None) -> PowerRow:
        found = self.select(metric, method, gamma, k11, c)
        if len(found) != 1:
            raise KeyError((metric, method, gamma, k11, c))
        return found[0]

    def curve(self, metric, method, gamma, k11):
        """``(c, power, mc_se)`` arrays of a weighted method, ordered by c."""
        rows = sorted(self.select(metric, method, gamma, k11), key=lambda r: r.c)
        return (
            np.array([r.c for r in rows]),
            np.array([r.power for r in rows]),
            np.array([r.mc_se for r in rows]),
        )


def run_power_study(study: StudyConfig, threads: int = 1) -> PowerTable:
    """Every (metric, method, c, K11, gamma) combination of ``study``.

    The FWER metric is estimated under the complete null (``K11 = 0``).
    """
    jobs = study.jobs()
    base = study.base()
    return PowerTable(_rows(jobs, _run_jobs(base, jobs, threads), study.replications))
