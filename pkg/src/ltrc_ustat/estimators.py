"""Product-limit estimators under left truncation and IPCW weights.

Two weighting schemes are provided:

``"censoring"``
    w_i = delta_i / K_c(T_i-), the inverse of the censoring survival
    estimated by the truncation-aware product-limit estimator.  This corrects
    for right censoring only.  Under left truncation the weighted empirical
    measure is tilted towards long lifetimes by P(L < x); for rank-based
    statistics such as the competing-risks test that tilt is harmless, but
    plug-in means are biased.

``"ltrc"``
    w_i = delta_i * n * S_X(T_i-) / Y(T_i), where S_X is the product-limit
    estimator of the lifetime survival.  Y(t)/(n S_X(t-)) estimates
    P(L < t < C) / P(L < T), so this is the inverse probability of being
    observed as a failure.  With no truncation and no failure/censoring ties
    both schemes coincide exactly.
"""

from __future__ import annotations

import numpy as np

from .core import LtrcSample, StepFunction, risk_set_size
from .errors import (
    MissingCauseLabels,
    RiskSetEmpty,
    SurvivalCollapsed,
    ZeroWeightDenominator,
)

WEIGHTINGS = ("censoring", "ltrc")
LIMITS = ("left", "right")


def _event_table(sample: LtrcSample, mask):
    times, counts = np.unique(sample.time[mask], return_counts=True)
    at_risk = risk_set_size(sample, times) if times.size else np.zeros(0, dtype=int)
    empty = np.flatnonzero(at_risk == 0)
    if empty.size:
        raise RiskSetEmpty(float(times[empty[0]]))
    return times, counts, np.asarray(at_risk)


def _product_limit(sample, mask):
    times, counts, at_risk = _event_table(sample, mask)
    return StepFunction(times, np.cumprod(1.0 - counts / at_risk), 1.0)


def censor_survival(sample: LtrcSample) -> StepFunction:
    """Product-limit estimate of the censoring survival, K_c.

    Tied censorings at one time enter as a single factor
    ``1 - d_c(t) / Y(t)``.
    """
    return _product_limit(sample, ~sample.event)


def failure_survival(sample: LtrcSample) -> StepFunction:
    """Product-limit estimate of the lifetime survival S_X under left truncation."""
    return _product_limit(sample, sample.event)


def censor_cum_hazard(sample: LtrcSample) -> StepFunction:
    """Nelson-Aalen estimate of the censoring cumulative hazard."""
    times, counts, at_risk = _event_table(sample, ~sample.event)
    return StepFunction(times, np.cumsum(counts / at_risk), 0.0)


def exp_relation_gap(sample: LtrcSample, upto: float = np.inf) -> float:
    """max |K_c(t) - exp(-Lambda_c(t))| over censoring times t <= ``upto``.

    The two estimators agree only asymptotically; this is a diagnostic and is
    never used to replace one by the other.  In the far tail the risk sets
    stay small whatever n is, so pass a finite ``upto`` to watch the gap
    shrink with n.
    """
    km = censor_survival(sample)
    na = censor_cum_hazard(sample)
    keep = km.jump_times <= upto
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(km.values[keep] - np.exp(-na.values[keep]))))


def ipcw_weights(sample: LtrcSample, limit: str = "left",
                 weighting: str = "censoring") -> np.ndarray:
    """Per-row inverse-probability weights; censored rows get 0.

    Parameters
    ----------
    limit : {"left", "right"}
        For ``weighting="censoring"``, evaluate K_c at T_i- (censorings
        strictly before T_i) or at T_i.  The left limit keeps a failure tied
        with a censoring from being penalised by it.  Ignored for ``"ltrc"``.
    weighting : {"censoring", "ltrc"}
        See the module docstring.

    Raises
    ------
    ZeroWeightDenominator
        A failure row meets K_c = 0.
    SurvivalCollapsed
        ``"ltrc"`` only: the lifetime product-limit estimate hit 0 before a
        failure time, so that failure carries no estimable mass.
    """
    if limit not in LIMITS:
        raise ValueError(f"limit must be one of {LIMITS}")
    if weighting not in WEIGHTINGS:
        raise ValueError(f"weighting must be one of {WEIGHTINGS}")
    n = len(sample)
    fail = np.flatnonzero(sample.event)
    w = np.zeros(n)
    if fail.size == 0:
        return w
    t = sample.time[fail]
    if weighting == "censoring":
        km = censor_survival(sample)
        denom = km.left_limit(t) if limit == "left" else km(t)
        denom = np.atleast_1d(denom)
        zero = np.flatnonzero(denom <= 0)
        if zero.size:
            i = int(fail[zero[0]])
            raise ZeroWeightDenominator(i, float(sample.time[i]))
        w[fail] = 1.0 / denom
    else:
        surv = np.atleast_1d(failure_survival(sample).left_limit(t))
        zero = np.flatnonzero(surv <= 0)
        if zero.size:
            i = int(fail[zero[0]])
            raise SurvivalCollapsed(i, float(sample.time[i]))
        w[fail] = n * surv / np.atleast_1d(risk_set_size(sample, t))
    return w


def _weighted_step(times, masses):
    if times.size == 0:
        return StepFunction([], [], 0.0)
    jt, inv = np.unique(times, return_inverse=True)
    jumps = np.bincount(inv, weights=masses, minlength=jt.size)
    return StepFunction(jt, np.cumsum(jumps), 0.0)


def sub_distribution(sample: LtrcSample) -> StepFunction:
    """Empirical S(x) = (1/n) #{T_i <= x, failure}."""
    fail = sample.event
    n = len(sample)
    return _weighted_step(sample.time[fail], np.full(int(fail.sum()), 1.0 / n))


def cumulative_incidence(sample: LtrcSample, cause: int, weights=None, *,
                         limit: str = "left",
                         weighting: str = "censoring") -> StepFunction:
    """IPCW cumulative incidence F_r(t) = (1/n) sum_i I(T_i <= t, J_i = r) w_i.

    With ``weighting="ltrc"`` this is the Aalen-Johansen estimate under left
    truncation.  Precomputed ``weights`` override ``limit``/``weighting``.
    """
    if cause not in (1, 2):
        raise ValueError("cause must be 1 or 2")
    if not sample.has_causes:
        raise MissingCauseLabels()
    if weights is None:
        weights = ipcw_weights(sample, limit=limit, weighting=weighting)
    weights = np.asarray(weights, dtype=float)
    pick = sample.cause == cause
    return _weighted_step(sample.time[pick], weights[pick] / len(sample))
