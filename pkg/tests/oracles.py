"""Independent reference implementations used as test oracles.

Everything here is written as plainly as possible (loops, exact integer
arithmetic) and shares no code with the package.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction


def average_ranks(values):
    """1-based average ranks, by sorting and walking tie blocks."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + 1 + j + 1) / 2.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _to_common_integers(xs):
    """Scale dyadic floats to integers exactly (shared power-of-two denominator)."""
    fr = [Fraction(x) for x in xs]
    den = 1
    for f in fr:
        den = den * f.denominator // math.gcd(den, f.denominator)
    return [int(f * den) for f in fr], den


def sign_scores(d, statistic):
    nz = [x for x in d if x != 0]
    mags = [abs(x) for x in nz]
    q = average_ranks(mags) if statistic == "wilcoxon" else mags
    obs = sum(qi for qi, x in zip(q, nz) if x > 0)
    return q, [x > 0 for x in nz], obs


def brute_upper_tail(d, statistic, gamma=1.0):
    """``P(T >= observed)`` over all 2^n sign vectors, positive sign w.p. gamma/(1+gamma).

    Sums are compared exactly on an integer lattice. At ``gamma == 1`` the
    result is an exact ``Fraction``; otherwise a float.
    """
    q, pos, _ = sign_scores(d, statistic)
    ints, _ = _to_common_integers(q)
    obs = sum(v for v, s in zip(ints, pos) if s)
    n = len(ints)
    if gamma == 1.0:
        hits = 0
        for signs in itertools.product((0, 1), repeat=n):
            if sum(v for v, s in zip(ints, signs) if s) >= obs:
                hits += 1
        return Fraction(hits, 2**n)
    pi = gamma / (1.0 + gamma)
    total = 0.0
    for signs in itertools.product((0, 1), repeat=n):
        if sum(v for v, s in zip(ints, signs) if s) >= obs:
            k = sum(signs)
            total += pi**k * (1.0 - pi) ** (n - k)
    return total


def holm_loop(p, alpha):
    m = len(p)
    order = sorted(range(m), key=lambda i: (p[i], i))
    rejected = set()
    for j, i in enumerate(order):
        if p[i] <= alpha / (m - j):
            rejected.add(i)
        else:
            break
    return rejected


def weighted_holm_loop(p, w, alpha):
    """Raw-p ordering; reject while p_(j) <= w_(j) alpha / sum_{k >= j} w_(k)."""
    m = len(p)
    order = sorted(range(m), key=lambda i: (p[i], i))
    rejected = set()
    for j, i in enumerate(order):
        tail = sum(w[order[k]] for k in range(j, m))
        if p[i] <= w[i] * alpha / tail:
            rejected.add(i)
        else:
            break
    return rejected


def chi2_4_sf(x):
    """Survival function of chi-square with 4 degrees of freedom."""
    return math.exp(-x / 2.0) * (1.0 + x / 2.0)


def fisher_pair(p1, p2):
    return chi2_4_sf(-2.0 * (math.log(p1) + math.log(p2)))


def automated_loop(pa, qa, pb, qb, alpha):
    """Straight-line automated cross-screening on lists of right (p) and left (q) p-values.

    Returns (status_a, status_b, replicated) with status in {-1, 0, +1}.
    """
    m = len(pa)

    def one_way(p_scr, q_scr, p_t, q_t):
        direction = [1 if p_scr[k] <= q_scr[k] else -1 for k in range(m)]
        selected = [k for k in range(m) if min(p_scr[k], q_scr[k]) <= alpha / 2]
        tested = [p_t[k] if direction[k] == 1 else q_t[k] for k in selected]
        rej = holm_loop(tested, alpha / 2)
        status = [0] * m
        for idx in rej:
            k = selected[idx]
            status[k] = direction[k]
        return status

    status_b = one_way(pa, qa, pb, qb)
    status_a = one_way(pb, qb, pa, qa)
    replicated = {k for k in range(m) if status_a[k] * status_b[k] == 1}
    return status_a, status_b, replicated


def cox_loglik_1d(beta, rows):
    """Breslow log partial likelihood for one covariate.

    ``rows`` is a list of (event_year_or_None, {year: x}) per subject; the
    risk set at year t holds subjects whose event year is None or >= t.
    """
    years = sorted({e for e, _ in rows if e is not None})
    ll = 0.0
    for t in years:
        at_risk = [traj[t] for e, traj in rows if e is None or e >= t]
        events = [traj[t] for e, traj in rows if e == t]
        denom = sum(math.exp(beta * x) for x in at_risk)
        ll += sum(beta * x for x in events) - len(events) * math.log(denom)
    return ll


def golden_max(f, lo, hi, tol=1e-10):
    """Maximize a unimodal function on [lo, hi] by golden-section search."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (a + b) / 2.0
