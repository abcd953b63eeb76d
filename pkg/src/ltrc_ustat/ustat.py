"""IPCW U-statistics for LTRC samples and their variance estimators."""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import LtrcSample, risk_set_size
from .errors import NonfiniteWeight, SampleTooSmall

log = logging.getLogger(__name__)

MAX_EXACT_TUPLES = 10**7
BLOCK = 1 << 16


@dataclass(frozen=True)
class Kernel:
    """Symmetric kernel of degree ``degree``.

    ``func`` is vectorised over tuples: it receives a ``(k, degree)`` array of
    times (and, when ``uses_cause`` is set, a matching ``(k, degree)`` array of
    cause labels as second argument) and returns ``k`` kernel values.
    Symmetry in the ``degree`` columns is the caller's responsibility.
    """

    degree: int
    func: Callable[..., np.ndarray]
    uses_cause: bool = False
    name: str = ""

    def __post_init__(self):
        if int(self.degree) < 1:
            raise ValueError("kernel degree must be a positive integer")

    def evaluate(self, times, causes=None) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        if self.uses_cause:
            out = self.func(times, np.asarray(causes))
        else:
            out = self.func(times)
        return np.broadcast_to(np.asarray(out, dtype=float), times.shape[:1])


@dataclass(frozen=True)
class VarianceEstimate:
    """Asymptotic variance pieces of sqrt(n)(U_m - theta) / m.

    ``sigma1_sq`` and ``sigma2_sq`` are the sample variance of
    V_i = h1(T_i) w_i and the censoring-martingale term; ``sigma_c_sq`` is
    their sum.  That sum omits the covariance between the two pieces, which
    is negative and of the same order as ``sigma2_sq``.  ``sigma_if_sq`` is
    the sample variance of per-row influence values and keeps it.
    """

    sigma1_sq: float
    sigma2_sq: float
    sigma_c_sq: float
    sigma_if_sq: float

    def get(self, method: str = "influence") -> float:
        if method == "influence":
            return self.sigma_if_sq
        if method == "plugin":
            return self.sigma_c_sq
        raise ValueError("method must be 'influence' or 'plugin'")


def combination_blocks(pool, m, block=BLOCK):
    """Yield ``(k, m)`` index arrays covering all m-subsets of ``pool`` in
    lexicographic order; block boundaries depend only on ``block``."""
    pool = np.asarray(pool)
    if m == 0:
        yield np.zeros((1, 0), dtype=np.intp)
        return
    it = itertools.combinations(range(pool.size), m)
    while True:
        chunk = list(itertools.islice(it, block))
        if not chunk:
            return
        yield pool[np.array(chunk, dtype=np.intp)]


def tuple_sum(pool, m, term, workers=1):
    """Sum ``term(idx_block)`` over all m-subsets of ``pool``.

    Blocks are reduced in enumeration order with ``math.fsum`` so the result
    is bit-identical for any ``workers``.
    """
    blocks = combination_blocks(pool, m)
    if workers <= 1:
        parts = [float(np.sum(term(b))) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda b: float(np.sum(term(b))), blocks))
    return math.fsum(parts)


def _check_weights(sample, weights):
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(sample),):
        raise ValueError("one weight per row is required")
    bad = np.flatnonzero(~np.isfinite(w))
    if bad.size:
        raise NonfiniteWeight(int(bad[0]))
    return w


def _random_tuples(rng, pool, m, size):
    # rows of m distinct draws from pool (uniform over m-subsets)
    keys = rng.random((size, pool.size))
    return pool[np.argpartition(keys, m - 1, axis=1)[:, :m]]


def u_statistic(sample: LtrcSample, kernel: Kernel, weights, *,
                n_total: int | None = None, max_tuples: int = MAX_EXACT_TUPLES,
                n_draws: int = 200_000, seed: int = 0, workers: int = 1,
                return_se: bool = False):
    """Weighted U-statistic (1/C(N,m)) sum_{i1<..<im} h(T_i1..T_im) prod w.

    ``N`` is the sample size, or ``n_total`` when the rows are the observed
    part of a larger population whose truncated members contribute zero.
    Rows with zero weight are skipped.  When the number of weighted tuples
    exceeds ``max_tuples`` the tuple mean is estimated from ``n_draws``
    uniformly drawn tuples (seeded); ``return_se=True`` then also returns its
    Monte Carlo standard error (0.0 for exact enumeration).
    """
    m = kernel.degree
    n = len(sample)
    big_n = n if n_total is None else int(n_total)
    if big_n < n:
        raise ValueError("n_total cannot be smaller than the sample size")
    if big_n < m:
        raise SampleTooSmall(big_n, m)
    w = _check_weights(sample, weights)
    pool = np.flatnonzero(w != 0)
    times, causes = sample.time, sample.cause
    norm = math.comb(big_n, m)

    def term(idx):
        return kernel.evaluate(times[idx], causes[idx]) * np.prod(w[idx], axis=1)

    n_tuples = math.comb(pool.size, m)
    if n_tuples <= max_tuples:
        value, se = tuple_sum(pool, m, term, workers) / norm, 0.0
    else:
        rng = np.random.default_rng(seed)
        draws = np.concatenate([term(_random_tuples(rng, pool, m, k))
                                for k in _split(n_draws)])
        scale = n_tuples / norm
        value = scale * float(draws.mean())
        se = scale * float(draws.std(ddof=1)) / math.sqrt(draws.size)
        log.debug("u_statistic subsampled %d of %d tuples, se=%.3g",
                  draws.size, n_tuples, se)
    return (value, se) if return_se else value


def _split(total, block=BLOCK):
    full, rest = divmod(total, block)
    return [block] * full + ([rest] if rest else [])


def h1_hat(sample: LtrcSample, kernel: Kernel, weights, i: int, *,
           max_tuples: int = MAX_EXACT_TUPLES, seed: int = 0) -> float:
    """Re-weighted estimate of h1 at the failure row ``i``.

    Averages h(T_i, T_j2..T_jm) prod w_j over all (m-1)-subsets of the other
    n - 1 rows (censored rows contribute 0), so a constant kernel c with unit
    weights gives exactly c.
    """
    m = kernel.degree
    n = len(sample)
    if n < m:
        raise SampleTooSmall(n, m)
    if not sample.event[i]:
        raise ValueError(f"row {i} is censored; h1 is defined at failures")
    w = _check_weights(sample, weights)
    if m == 1:
        return float(kernel.evaluate(sample.time[[i]][:, None],
                                     sample.cause[[i]][:, None])[0])
    pool = np.flatnonzero(w != 0)
    pool = pool[pool != i]
    t, c = sample.time, sample.cause

    def term(idx):
        k = idx.shape[0]
        full = np.column_stack([np.full(k, i), idx])
        return kernel.evaluate(t[full], c[full]) * np.prod(w[idx], axis=1)

    norm = math.comb(n - 1, m - 1)
    n_tuples = math.comb(pool.size, m - 1)
    if n_tuples <= max_tuples:
        return tuple_sum(pool, m - 1, term) / norm
    rng = np.random.default_rng([seed, i])
    draws = term(_random_tuples(rng, pool, m - 1, 100_000))
    return float(draws.mean()) * n_tuples / norm


def h1_hat_all(sample: LtrcSample, kernel: Kernel, weights, **kw) -> np.ndarray:
    """h1_hat at every failure row (0.0 on censored rows)."""
    out = np.zeros(len(sample))
    fail = np.flatnonzero(sample.event)
    if kernel.degree == 1:
        out[fail] = kernel.evaluate(sample.time[fail][:, None],
                                    sample.cause[fail][:, None])
        return out
    for i in fail:
        out[i] = h1_hat(sample, kernel, weights, int(i), **kw)
    return out


def _tail_mean(sample, values):
    """x -> (1/n) sum_j values_j I(T_j > x), as a vectorised callable."""
    order = np.argsort(sample.time, kind="stable")
    ts = sample.time[order]
    suffix = np.concatenate([np.cumsum(values[order][::-1])[::-1], [0.0]])
    n = len(sample)

    def f(x):
        return suffix[np.searchsorted(ts, np.asarray(x, dtype=float), side="right")] / n
    return f


def w_hat(sample: LtrcSample, kernel: Kernel, weights, x, *, h1=None):
    """(1/n) sum_i h1(T_i) I(T_i > x) w_i; ``x`` may be an array."""
    w = _check_weights(sample, weights)
    if h1 is None:
        h1 = h1_hat_all(sample, kernel, w)
    out = _tail_mean(sample, h1 * w)(x)
    return float(out) if np.ndim(out) == 0 else out


def _compensator(sample, event_mask, increments):
    """For each row i: sum of ``increments`` over event rows k of the given
    kind with L_i <= T_k <= T_i."""
    tk = sample.time[event_mask]
    order = np.argsort(tk, kind="stable")
    tk = tk[order]
    cum = np.concatenate([[0.0], np.cumsum(increments[order])])
    hi = np.searchsorted(tk, sample.time, side="right")
    lo = np.searchsorted(tk, sample.trunc, side="left")
    return cum[hi] - cum[lo]


def _pieces(sample, weights, h1):
    n = len(sample)
    w = _check_weights(sample, weights)
    v = np.where(sample.event, np.asarray(h1, dtype=float) * w, 0.0)
    tail = _tail_mean(sample, v)
    cens = ~sample.event
    y_c = np.asarray(risk_set_size(sample, sample.time[cens]), dtype=float)
    return n, v, tail, cens, y_c, tail(sample.time[cens])


def influence_values(sample: LtrcSample, weights, h1, *,
                     weighting: str = "censoring") -> np.ndarray:
    """Per-row influence values of the statistic; they sum to zero.

    ``weighting`` names how ``weights`` were produced and selects the
    representation: ``"censoring"`` adds the censoring-martingale term for
    the estimated K_c, ``"ltrc"`` uses the lifetime product-limit
    representation, ``"known"`` treats the weights as fixed.
    """
    n, v, tail, cens, y_c, w_c = _pieces(sample, weights, h1)
    if weighting == "censoring":
        b = n * w_c / y_c
        infl = v - v.mean()
        infl[cens] += b
        if b.size:
            infl -= _compensator(sample, cens, b / y_c)
    elif weighting == "ltrc":
        fail = sample.event
        y_f = np.asarray(risk_set_size(sample, sample.time[fail]), dtype=float)
        a = v[fail] - n * tail(sample.time[fail]) / y_f
        infl = np.zeros(n)
        infl[fail] = a
        if a.size:
            infl -= _compensator(sample, fail, a / y_f)
    elif weighting == "known":
        infl = v - v.mean()
    else:
        raise ValueError("weighting must be 'censoring', 'ltrc' or 'known'")
    return infl


def variance_from_h1(sample: LtrcSample, weights, h1, *,
                     weighting: str = "censoring") -> VarianceEstimate:
    """Variance pieces given h1 estimates at the failure rows.

    See :func:`influence_values` for ``weighting``.
    """
    if len(sample) < 2:
        raise SampleTooSmall(len(sample), 2)
    n, v, _, _, y_c, w_c = _pieces(sample, weights, h1)
    s1 = float(np.var(v, ddof=1))
    s2 = float(np.sum(n * w_c**2 / y_c**2)) if y_c.size else 0.0
    infl = influence_values(sample, weights, h1, weighting=weighting)
    return VarianceEstimate(s1, s2, s1 + s2, float(np.var(infl, ddof=1)))


def variance_estimate(sample: LtrcSample, kernel: Kernel, weights=None, *,
                      weighting: str = "censoring",
                      limit: str = "left") -> VarianceEstimate:
    """Estimate sigma_c^2 for ``u_statistic`` with the given kernel.

    When ``weights`` is omitted they are computed with
    :func:`~ltrc_ustat.estimators.ipcw_weights` using ``weighting`` and
    ``limit``.
    """
    from .estimators import ipcw_weights

    if weights is None:
        weights = ipcw_weights(sample, limit=limit, weighting=weighting)
    h1 = h1_hat_all(sample, kernel, weights)
    return variance_from_h1(sample, weights, h1, weighting=weighting)
