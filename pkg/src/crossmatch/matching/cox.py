"""Cox proportional hazards with time-varying covariates (Breslow ties).

The event is a woman's first unintended birth, timed by calendar year. At an
event year ``t`` the risk set holds every woman with no unintended birth
before ``t``, each described by her covariates at ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from crossmatch.errors import ConvergenceError, InvalidInputError, SingularInformationError
from crossmatch.matching.cohort import COVARIATES, WomanRecord


@dataclass(frozen=True)
class CoxModel:
    beta: np.ndarray
    iterations: int
    loglik: float
    covariates: tuple = COVARIATES
    grad_sup_norm: float = 0.0
    trace: tuple = field(default=(), repr=False)

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.beta


@dataclass
class RiskSetData:
    """Per-event-year covariate blocks: ``blocks[t] = (X_riskset, event_mask)``."""

    years: list
    blocks: list

    @classmethod
    def from_cohort(cls, cohort, covariates=COVARIATES) -> "RiskSetData":
        firsts = [w.first_unintended_year for w in cohort]
        years = sorted({y for y in firsts if y is not None})
        blocks = []
        for t in years:
            at_risk = [w for w, f in zip(cohort, firsts) if f is None or f >= t]
            X = np.vstack([w.covariates_at(t, covariates) for w in at_risk])
            events = np.array([w.first_unintended_year == t for w in at_risk])
            blocks.append((X, events))
        return cls(years, blocks)


def partial_loglik(beta, data: RiskSetData, with_derivatives=False):
    """Breslow log partial likelihood; optionally its gradient and Hessian."""
    beta = np.asarray(beta, dtype=float)
    p = beta.size
    ll = 0.0
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    for X, events in data.blocks:
        eta = X @ beta
        shift = eta.max()
        w = np.exp(eta - shift)
        s0 = w.sum()
        d = int(events.sum())
        ll += eta[events].sum() - d * (np.log(s0) + shift)
        if with_derivatives:
            xbar = (w @ X) / s0
            grad += X[events].sum(axis=0) - d * xbar
            xc = X - xbar
            hess -= d * (xc.T * w) @ xc / s0
    if with_derivatives:
        return ll, grad, hess
    return ll


def fit_time_dependent_cox(
    cohort: list[WomanRecord],
    covariates=COVARIATES,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> CoxModel:
    """Maximize the Breslow partial likelihood by Newton's method with step halving.

    Covariates that are constant over every risk set do not enter the
    likelihood; their coefficients are fixed at zero. Raises
    :class:`SingularInformationError` for collinear designs and
    :class:`ConvergenceError` (with the iteration trace) when the gradient
    sup-norm has not dropped below ``tol`` after ``max_iter`` iterations.
    """
    data = RiskSetData.from_cohort(cohort, covariates)
    if not data.blocks:
        raise InvalidInputError("the cohort has no unintended births; the Cox model needs at least one event")
    p = len(covariates)

    # Columns that never vary within a risk set drop out of the partial likelihood.
    varies = np.zeros(p, dtype=bool)
    for X, _ in data.blocks:
        varies |= X.max(axis=0) > X.min(axis=0)
    active = np.flatnonzero(varies)

    # Work on standardized columns for conditioning; convert back at the end.
    stacked = np.vstack([X for X, _ in data.blocks])[:, active]
    center = stacked.mean(axis=0)
    scale = stacked.std(axis=0)
    scaled = RiskSetData(
        data.years, [((X[:, active] - center) / scale, ev) for X, ev in data.blocks]
    )

    b = np.zeros(active.size)
    ll, g, h = partial_loglik(b, scaled, with_derivatives=True)
    _check_information(h, [covariates[i] for i in active])
    trace = []
    for it in range(1, max_iter + 1):
        try:
            step = np.linalg.solve(-h, g)
        except np.linalg.LinAlgError:
            raise SingularInformationError("Cox information matrix became singular") from None
        factor = 1.0
        for _ in range(40):
            cand = b + factor * step
            cand_ll = partial_loglik(cand, scaled)
            if cand_ll >= ll - 1e-12 * abs(ll):
                break
            factor /= 2.0
        b = cand
        ll, g, h = partial_loglik(b, scaled, with_derivatives=True)
        raw_grad = g / scale
        sup = float(np.max(np.abs(raw_grad))) if raw_grad.size else 0.0
        trace.append((it, float(ll), sup))
        if sup < tol and float(np.max(np.abs(g))) < tol:
            beta = np.zeros(p)
            beta[active] = b / scale
            return CoxModel(beta, it, float(ll), tuple(covariates), sup, tuple(trace))
    raise ConvergenceError(f"Cox fit did not converge in {max_iter} iterations", trace)


def _check_information(hess, names):
    info = -hess
    if info.size == 0:
        return
    eig = np.linalg.eigvalsh(info)
    if eig[0] <= 1e-10 * max(eig[-1], 1.0):
        # Report the column pair most responsible for the rank deficiency.
        vals, vecs = np.linalg.eigh(info)
        worst = np.argsort(-np.abs(vecs[:, 0]))[:2]
        culprits = [names[i] for i in sorted(worst)]
        raise SingularInformationError(f"collinear covariates in the Cox design (check {culprits})")
