"""Test of independence between lifetime and cause of failure.

The statistic is an IPCW U-statistic of degree 4 with the cause-aware kernel
:func:`psi_kernel`.  Under independence its target is 0; it is positive
when cause 1 becomes relatively more frequent at later failure times.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from .core import LtrcSample
from .errors import DegenerateVariance, MissingCauseLabels, SampleTooSmall
from .estimators import ipcw_weights
from .ustat import Kernel, VarianceEstimate, tuple_sum, variance_from_h1

SCALINGS = ("theorem3", "as-printed")
VARIANCES = ("influence", "plugin")


def psi_kernel(*obs) -> int:
    """Symmetrised kernel on four ``(time, cause)`` pairs.

    Sorted by time in decreasing order, the value is +1 when the largest time
    has cause 1 and the third largest cause 2, -1 for the reverse, and 0
    otherwise, including whenever two of the times are equal.

    >>> psi_kernel((4, 1), (3, 2), (2, 2), (1, 1))
    1
    """
    if len(obs) == 1:
        obs = tuple(obs[0])
    if len(obs) != 4:
        raise ValueError("psi_kernel takes four (time, cause) pairs")
    ordered = sorted(obs, key=lambda o: o[0], reverse=True)
    times = [o[0] for o in ordered]
    if len(set(times)) < 4:
        return 0
    c1, c3 = ordered[0][1], ordered[2][1]
    if c1 not in (1, 2) or c3 not in (1, 2):
        raise MissingCauseLabels("psi_kernel needs cause labels 1 or 2")
    return int(c1 == 1 and c3 == 2) - int(c1 == 2 and c3 == 1)


def _psi_vec(times, causes):
    order = np.argsort(-times, axis=1, kind="stable")
    t = np.take_along_axis(times, order, axis=1)
    c = np.take_along_axis(causes, order, axis=1)
    distinct = np.all(t[:, :-1] > t[:, 1:], axis=1)
    s = (c[:, 0] == 1) & (c[:, 2] == 2)
    s = s.astype(float) - ((c[:, 0] == 2) & (c[:, 2] == 1))
    return np.where(distinct, s, 0.0)


PSI = Kernel(4, _psi_vec, uses_cause=True, name="psi")


def _prepare(sample: LtrcSample, weights, limit, weighting):
    n = len(sample)
    if n < 4:
        raise SampleTooSmall(n, 4)
    if not sample.has_causes:
        raise MissingCauseLabels()
    if weights is None:
        weights = ipcw_weights(sample, limit=limit, weighting=weighting)
    return np.asarray(weights, dtype=float)


def delta_hat_naive(sample: LtrcSample, weights=None, *, limit: str = "left",
                    weighting: str = "censoring", workers: int = 1) -> float:
    """Brute-force statistic: the sum over all 4-subsets of ``psi_kernel``
    times the four weights, divided by C(n, 4).

    Quadruples containing a censored row have weight 0 and are skipped.  The
    enumeration is split into fixed blocks; ``workers`` threads evaluate
    them and the block sums are combined in a fixed order.
    """
    w = _prepare(sample, weights, limit, weighting)
    pool = np.flatnonzero(w != 0)
    t, c = sample.time, sample.cause

    def term(idx):
        return _psi_vec(t[idx], c[idx]) * np.prod(w[idx], axis=1)

    return tuple_sum(pool, 4, term, workers) / math.comb(len(sample), 4)


def _excl_cumsum(a):
    return np.concatenate([[0.0], np.cumsum(a)[:-1]])


def _excl_suffix(a):
    s = np.cumsum(a[::-1])[::-1]
    return np.concatenate([s[1:], [0.0]])


def _grouped(sample, w):
    idx = np.flatnonzero(w != 0)
    # groups of equal time, ordered by decreasing time
    _, inv = np.unique(-sample.time[idx], return_inverse=True)
    g = int(inv.max()) + 1 if idx.size else 0
    wi, ci = w[idx], sample.cause[idx]
    u = np.bincount(inv, wi * (ci == 1), g)
    v = np.bincount(inv, wi * (ci == 2), g)
    tot = np.bincount(inv, wi, g)
    return idx, inv, u, v, tot


def _fast_parts(sample, w):
    idx, inv, u, v, wg = _grouped(sample, w)
    cw = np.cumsum(wg)
    d = cw[-1] - cw if wg.size else cw  # mass of strictly later groups
    cu, cv = _excl_cumsum(u), _excl_cumsum(v)
    au, av = _excl_cumsum(wg * cu), _excl_cumsum(wg * cv)
    return idx, inv, u, v, wg, cw, d, cu, cv, au, av


def delta_hat_fast(sample: LtrcSample, weights=None, *, limit: str = "left",
                   weighting: str = "censoring") -> float:
    """Same value as :func:`delta_hat_naive` in O(n log n).

    Failures are grouped by distinct time in decreasing order.  A quadruple
    contributes only if its four rows fall in four different groups
    g1 < g2 < g3 < g4, with sign fixed by the causes in g1 and g3; the sum
    factors into running prefix sums over groups, so ties are handled
    exactly rather than excluded.
    """
    w = _prepare(sample, weights, limit, weighting)
    if not np.any(w):
        return 0.0
    _, _, u, v, _, _, d, _, _, au, av = _fast_parts(sample, w)
    total = np.sum((v * au - u * av) * d)
    return float(total) / math.comb(len(sample), 4)


def psi1_hat(sample: LtrcSample, weights=None, *, limit: str = "left",
             weighting: str = "censoring") -> np.ndarray:
    """Estimated first projection of the kernel at every failure row.

    Entry i averages psi over the anchor (T_i, J_i) and every 3-subset of
    the other rows, weighted by the three weights, with divisor C(n-1, 3).
    Censored rows get 0.  Cost is O(n log n).
    """
    w = _prepare(sample, weights, limit, weighting)
    n = len(sample)
    out = np.zeros(n)
    if not np.any(w):
        return out
    idx, grp, u, v, wg, cw, d, cu, cv, au, av = _fast_parts(sample, w)
    cw_excl = cw - wg
    vd, ud = v * d, u * d
    s_vd, s_ud = _excl_suffix(vd), _excl_suffix(ud)
    s_vdc, s_udc = _excl_suffix(vd * cw_excl), _excl_suffix(ud * cw_excl)
    # anchor in position 1 (largest time): needs cause 1 for +, 2 for -
    pos1_c1 = s_vdc - cw * s_vd
    pos1_c2 = -(s_udc - cw * s_ud)
    # anchor in position 2: sign set by the outer pair
    pos2 = cu * s_vd - cv * s_ud
    # anchor in position 3
    pos3_c2 = au * d
    pos3_c1 = -av * d
    # anchor in position 4
    pos4 = _excl_cumsum(v * au - u * av)
    anchor_c1 = sample.cause[idx] == 1
    vals = np.where(anchor_c1, pos1_c1[grp] + pos3_c1[grp], pos1_c2[grp] + pos3_c2[grp])
    vals = vals + pos2[grp] + pos4[grp]
    out[idx] = vals / math.comb(n - 1, 3)
    return out


def ties_discarded(sample: LtrcSample) -> int:
    """Number of failure quadruples with at least one tied time (kernel 0)."""
    _, sizes = np.unique(sample.time[sample.event], return_counts=True)
    e = [1, 0, 0, 0, 0]
    for s in sizes.tolist():
        for k in range(4, 0, -1):
            e[k] += e[k - 1] * s
    return math.comb(int(sizes.sum()), 4) - e[4]


def test_variance_parts(sample: LtrcSample, weights=None, *, limit: str = "left",
                        weighting: str = "censoring") -> VarianceEstimate:
    """All variance pieces for the statistic (see :class:`VarianceEstimate`)."""
    n = len(sample)
    if n < 5:
        raise SampleTooSmall(n, 5)
    w = _prepare(sample, weights, limit, weighting)
    h1 = psi1_hat(sample, w)
    return variance_from_h1(sample, w, h1, weighting=weighting)


def test_variance(sample: LtrcSample, weights=None, *, limit: str = "left",
                  weighting: str = "censoring", method: str = "influence") -> float:
    """sigma_1c^2; ``method="plugin"`` gives the sum of the two plug-in pieces."""
    return test_variance_parts(sample, weights, limit=limit,
                               weighting=weighting).get(method)


test_variance.__test__ = False
test_variance_parts.__test__ = False


@dataclass(frozen=True)
class TestResult:
    """Outcome of :func:`run_test`; ``sigma_sq`` is the variance actually used."""

    __test__ = False

    delta_hat: float
    sigma_sq: float
    z: float
    p_value: float
    reject: bool
    alpha: float
    n: int
    n_failures: int
    n_censored: int
    ties_discarded: int
    variance: VarianceEstimate
    conventions: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "delta_hat": self.delta_hat,
            "sigma1c_sq": self.sigma_sq,
            "z": self.z,
            "p_value": self.p_value,
            "reject": self.reject,
            "alpha": self.alpha,
            "n": self.n,
            "n_failures": self.n_failures,
            "n_censored": self.n_censored,
            "ties_discarded": self.ties_discarded,
            "variance_parts": asdict(self.variance),
            "conventions": dict(self.conventions),
        }


def z_statistic(delta_hat: float, sigma_sq: float, n: int,
                scaling: str = "theorem3") -> float:
    """sqrt(n) * delta_hat / sigma, with sigma multiplied by 4 (the kernel
    degree) under ``"theorem3"`` and left as is under ``"as-printed"``."""
    if scaling not in SCALINGS:
        raise ValueError(f"scaling must be one of {SCALINGS}")
    if not sigma_sq > 0:
        raise DegenerateVariance(sigma_sq)
    sigma = math.sqrt(sigma_sq)
    if scaling == "theorem3":
        sigma *= 4
    return math.sqrt(n) * delta_hat / sigma


def run_test(sample: LtrcSample, alpha: float = 0.05, *,
             scaling: str = "theorem3", variance: str = "influence",
             weighting: str = "censoring", limit: str = "left") -> TestResult:
    """One-sided test of H0: lifetime and cause are independent.

    Parameters
    ----------
    alpha : float
        Level; H0 is rejected when z exceeds the upper ``alpha`` quantile of
        N(0, 1).
    scaling : {"theorem3", "as-printed"}
        ``"theorem3"`` standardises by the full asymptotic standard deviation
        4 sigma_1c.  ``"as-printed"`` divides by sigma_1c only and is far
        too liberal (see README).
    variance : {"influence", "plugin"}
        Estimator of sigma_1c^2.
    weighting, limit
        Passed to :func:`~ltrc_ustat.estimators.ipcw_weights`.

    Raises
    ------
    DegenerateVariance
        The variance estimate is zero, e.g. when all causes are equal.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if variance not in VARIANCES:
        raise ValueError(f"variance must be one of {VARIANCES}")
    n = len(sample)
    if n < 5:
        raise SampleTooSmall(n, 5)
    w = _prepare(sample, None, limit, weighting)
    delta = delta_hat_fast(sample, w)
    parts = test_variance_parts(sample, w, weighting=weighting)
    sigma_sq = parts.get(variance)
    z = z_statistic(delta, sigma_sq, n, scaling)
    p = float(norm.sf(z))
    return TestResult(
        delta_hat=delta, sigma_sq=sigma_sq, z=z, p_value=p,
        reject=bool(p < alpha), alpha=alpha, n=n,
        n_failures=sample.n_failures, n_censored=sample.n_censored,
        ties_discarded=ties_discarded(sample), variance=parts,
        conventions={"limit": limit, "scaling": scaling,
                     "variance": variance, "weighting": weighting},
    )
