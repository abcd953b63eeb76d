"""Competing-risks LTRC data generator and Monte Carlo harness.

Lifetimes X follow Exp(1) or a Weibull law F(x) = 1 - exp(-x^k).  Causes are
drawn from P(J=1 | X=x) = p1 * a * F(x)^(a-1), which gives the
sub-distributions F_1 = p1 F^a and F_2 = F - F_1; a = 1 is independence.
Censoring C ~ Exp(rate gamma) and truncation L ~ Exp(scale mu) are
calibrated so that P(X > C) and P(L > X) hit their targets.  Units with
min(X, C) <= L are never observed and are redrawn.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from functools import lru_cache, partial
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy import integrate, optimize
from scipy.stats import norm

from .core import LtrcSample
from .errors import (
    ConfigError,
    GenerationStalled,
    InvalidProbability,
    NoRoot,
    NumericError,
)

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 10**6
PROB_TOL = 1e-8


# lifetime laws ---------------------------------------------------------------

def lifetime_cdf(x, lifetime: str = "exp", shape: float = 1.0):
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    k = 1.0 if lifetime == "exp" else shape
    return -np.expm1(-x**k)


def lifetime_pdf(x, lifetime: str = "exp", shape: float = 1.0):
    x = np.asarray(x, dtype=float)
    k = 1.0 if lifetime == "exp" else shape
    return np.where(x > 0, k * x**(k - 1) * np.exp(-x**k), 0.0)


def draw_lifetimes(rng, size, lifetime: str = "exp", shape: float = 1.0):
    e = rng.standard_exponential(size)
    return e if lifetime == "exp" else e ** (1.0 / shape)


def _laplace(s, lifetime, shape):
    """E exp(-s X)."""
    if lifetime == "exp":
        return 1.0 / (1.0 + s)
    val, _ = integrate.quad(lambda x: np.exp(-s * x) * lifetime_pdf(x, lifetime, shape),
                            0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def _solve(func, target, name):
    """Root of func(t) = target over t in (1e-8, 1e8); func is monotone.

    Bisection runs on log t so the wide bracket costs ~60 halvings.
    """
    g = lambda u: func(math.exp(u)) - target
    lo, hi = math.log(1e-8), math.log(1e8)
    if g(lo) * g(hi) > 0:
        raise NoRoot(target, "in (1e-8, 1e8)")
    u = optimize.bisect(g, lo, hi, xtol=1e-14, maxiter=200)
    if abs(g(u)) > PROB_TOL:
        raise NoRoot(target, f"(residual {g(u):.2e})")
    return math.exp(u)


def _check_frac(name, value):
    if not (isinstance(value, (int, float)) and 0 < value < 1):
        raise InvalidProbability(name, f"must lie in (0, 1), got {value!r}")


def calibrate_censoring(lifetime: str = "exp", p: float = 0.2,
                        shape: float = 1.0) -> float:
    """Rate gamma of C ~ Exp(gamma) with P(X > C) = p.

    Closed form p / (1 - p) for Exp(1) lifetimes, bisection otherwise.
    """
    _check_frac("censor_frac", p)
    if lifetime == "exp":
        return p / (1 - p)
    return _solve(lambda g: 1.0 - _laplace(g, lifetime, shape), p, "censor_frac")


def calibrate_truncation(lifetime: str = "exp", q: float = 0.2,
                         shape: float = 1.0) -> float:
    """Scale (mean) mu of L ~ Exp with P(L > X) = q.

    P(L > X) = E exp(-X / mu), which for Exp(1) lifetimes is mu / (1 + mu),
    so mu = q / (1 - q): 0.25 for q = 0.2, i.e. rate 4.
    """
    _check_frac("trunc_frac", q)
    if lifetime == "exp":
        return q / (1 - q)
    return _solve(lambda mu: _laplace(1.0 / mu, lifetime, shape), q, "trunc_frac")


def cause_probability(x, a: float, p1: float, lifetime: str = "exp",
                      shape: float = 1.0):
    """P(J = 1 | X = x) = p1 a F(x)^(a-1)."""
    if p1 * a > 1 + 1e-12:
        raise InvalidProbability("p1", f"p1 * a = {p1 * a:g} exceeds 1")
    f = lifetime_cdf(x, lifetime, shape)
    return p1 * a * f ** (a - 1)


def assign_cause(x, config: "SimConfig", rng=None):
    """Draw cause labels for lifetimes ``x`` (scalar or array)."""
    rng = np.random.default_rng() if rng is None else rng
    prob = cause_probability(x, config.a, config.p1, config.lifetime, config.shape)
    lab = np.where(rng.random(np.shape(prob)) < prob, 1, 2)
    return int(lab) if np.ndim(lab) == 0 else lab


# configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    """One simulation cell plus the test conventions used on each draw."""

    lifetime: str = "exp"
    shape: float = 1.0
    a: float = 1.0
    p1: float = 0.45
    censor_frac: float = 0.2
    trunc_frac: float = 0.2
    n: int = 100
    reps: int = 2000
    alpha: float = 0.05
    seed: int = 0
    scaling: str = "theorem3"
    variance: str = "influence"
    weighting: str = "censoring"
    limit: str = "left"

    def __post_init__(self):
        if self.lifetime not in ("exp", "weibull"):
            raise ConfigError("lifetime", "must be 'exp' or 'weibull'")
        if self.lifetime == "weibull" and not self.shape > 1:
            raise ConfigError("shape", "Weibull shape must exceed 1")
        if not 1 <= self.a <= 2:
            raise ConfigError("a", f"must lie in [1, 2], got {self.a!r}")
        for name in ("p1", "censor_frac", "trunc_frac", "alpha"):
            _check_frac(name, getattr(self, name))
        if self.p1 * self.a > 1:
            raise InvalidProbability("p1", f"p1 * a = {self.p1 * self.a:g} exceeds 1")
        if not (isinstance(self.n, int) and self.n >= 5):
            raise ConfigError("n", f"must be an integer >= 5, got {self.n!r}")
        if not (isinstance(self.reps, int) and self.reps >= 1):
            raise ConfigError("reps", f"must be a positive integer, got {self.reps!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", "must be a nonnegative integer")
        choices = {"scaling": ("theorem3", "as-printed"),
                   "variance": ("influence", "plugin"),
                   "weighting": ("censoring", "ltrc"),
                   "limit": ("left", "right")}
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(name, f"must be one of {allowed}")

    @property
    def censor_rate(self) -> float:
        return _cached_censor(self.lifetime, self.censor_frac, self.shape)

    @property
    def trunc_scale(self) -> float:
        return _cached_trunc(self.lifetime, self.trunc_frac, self.shape)


_cached_censor = lru_cache(maxsize=None)(calibrate_censoring)
_cached_trunc = lru_cache(maxsize=None)(calibrate_truncation)


@dataclass(frozen=True)
class EmpiricalRate:
    """Rejection frequency over ``reps`` usable replications.

    ``mc_standard_error`` is sqrt(r (1 - r) / reps); ``skipped`` counts
    replications dropped because the statistic was undefined on them.
    """

    rejection_rate: float
    reps: int
    mc_standard_error: float
    skipped: int = 0

    @classmethod
    def from_hits(cls, hits: int, reps: int, skipped: int = 0):
        r = hits / reps if reps else float("nan")
        se = math.sqrt(r * (1 - r) / reps) if reps else float("nan")
        return cls(r, reps, se, skipped)


# generation ------------------------------------------------------------------

def draw_population(config: SimConfig, size: int, rng) -> dict:
    """``size`` raw units (X, C, L, J) before the observation filter."""
    x = draw_lifetimes(rng, size, config.lifetime, config.shape)
    c = rng.exponential(1.0 / config.censor_rate, size)
    trunc = rng.exponential(config.trunc_scale, size)
    j = assign_cause(x, config, rng)
    t = np.minimum(x, c)
    return {"X": x, "C": c, "L": trunc, "J": np.atleast_1d(j),
            "T": t, "delta": x < c, "observed": t > trunc}


def draw_ltrc_sample(config: SimConfig, rng) -> LtrcSample:
    """Rejection-sample until exactly ``config.n`` units are observed."""
    need = config.n
    parts = []
    got = 0
    stall = 0
    batch = 2 * need + 16
    while got < need:
        pop = draw_population(config, batch, rng)
        keep = np.flatnonzero(pop["observed"])
        if keep.size == 0:
            stall += batch
            batch = min(2 * batch, 1 << 20)
        else:
            stall = batch - 1 - int(keep[-1])
        if stall >= MAX_ATTEMPTS:
            raise GenerationStalled(stall, got)
        keep = keep[: need - got]
        parts.append({k: v[keep] for k, v in pop.items()})
        got += keep.size
    cat = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    cause = np.where(cat["delta"], cat["J"], 0)
    return LtrcSample(cat["L"], cat["T"], cat["delta"], cause)


def observation_probability(config: SimConfig) -> float:
    """P(min(X, C) > L)."""
    fail, cens = _observed_split(config)
    return fail + cens


def observed_censor_fraction(config: SimConfig) -> float:
    """P(C < X | min(X, C) > L), the censored share of an observed sample."""
    fail, cens = _observed_split(config)
    return cens / (fail + cens)


def _observed_split(config):
    g, mu = config.censor_rate, config.trunc_scale
    lt, k = config.lifetime, config.shape
    entered = lambda t: -np.expm1(-t / mu)  # P(L < t)
    surv = lambda t: 1.0 - lifetime_cdf(t, lt, k)
    opts = dict(epsabs=1e-12, epsrel=1e-10, limit=200)
    fail, _ = integrate.quad(
        lambda x: lifetime_pdf(x, lt, k) * math.exp(-g * x) * entered(x), 0, np.inf, **opts)
    cens, _ = integrate.quad(
        lambda c: g * math.exp(-g * c) * surv(c) * entered(c), 0, np.inf, **opts)
    return fail, cens


# Monte Carlo -----------------------------------------------------------------

def replication_rng(seed: int, rep: int, cell: int = 0):
    """Independent stream for one replication; depends only on its labels."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(cell, rep)))


def test_z(sample: LtrcSample, config: SimConfig) -> float:
    from .crtest import run_test

    res = run_test(sample, config.alpha, scaling=config.scaling,
                   variance=config.variance, weighting=config.weighting,
                   limit=config.limit)
    return res.z


test_z.__test__ = False


def _run_chunk(config, func, cell, reps):
    out = np.empty(len(reps))
    for k, rep in enumerate(reps):
        sample = draw_ltrc_sample(config, replication_rng(config.seed, rep, cell))
        try:
            out[k] = func(sample, config)
        except NumericError as exc:
            log.debug("replication %d skipped: %s", rep, exc)
            out[k] = np.nan
    return out


def replicate(config: SimConfig, func: Callable = test_z, *, cell: int = 0,
              workers: int = 1, chunk: int = 50) -> np.ndarray:
    """``func(sample, config)`` on ``config.reps`` independent draws.

    Replications where ``func`` raises a numeric error yield NaN.  Results
    depend only on (config, seed, cell), never on ``workers``.  ``func``
    must be picklable when ``workers > 1``.
    """
    reps = list(range(config.reps))
    chunks = [reps[i:i + chunk] for i in range(0, len(reps), chunk)]
    job = partial(_run_chunk, config, func, cell)
    if workers <= 1:
        parts = [job(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, chunks))
    return np.concatenate(parts) if parts else np.zeros(0)


def rate_from_z(z: np.ndarray, alpha: float) -> EmpiricalRate:
    ok = z[~np.isnan(z)]
    hits = int(np.sum(ok > norm.isf(alpha)))
    return EmpiricalRate.from_hits(hits, ok.size, int(z.size - ok.size))


def monte_carlo(config: SimConfig, *, workers: int = 1, cell: int = 0) -> EmpiricalRate:
    """Empirical rejection rate of the test at ``config.alpha``."""
    return rate_from_z(replicate(config, cell=cell, workers=workers), config.alpha)


# tables ----------------------------------------------------------------------

TABLE_COLUMNS = ("a", "p1", "n", "censor_frac", "alpha", "rejection_rate",
                 "mc_se", "reps", "seed")
GRID_KEYS = ("a", "p1", "n", "censor_frac", "alpha")


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def expand_grid(grid: Mapping) -> list[SimConfig]:
    """Expand a config mapping whose grid keys may hold lists.

    ``pairs`` (a list of ``[a, p1]``) replaces the product of ``a`` and
    ``p1``.  Every other key must be a :class:`SimConfig` field.  The
    ``alpha`` axis is kept innermost so cells that differ only in alpha
    are adjacent.
    """
    grid = dict(grid)
    known = {f.name for f in fields(SimConfig)} | {"pairs"}
    for key in grid:
        if key not in known:
            raise ConfigError(key, "unknown key")
    pairs = grid.pop("pairs", None)
    if pairs is None:
        pairs = list(itertools.product(_as_list(grid.pop("a", 1.0)),
                                       _as_list(grid.pop("p1", 0.45))))
    else:
        grid.pop("a", None)
        grid.pop("p1", None)
        try:
            pairs = [(float(a), float(p)) for a, p in pairs]
        except (TypeError, ValueError):
            raise ConfigError("pairs", "must be a list of [a, p1] pairs") from None
    ns = _as_list(grid.pop("n", 100))
    cens = _as_list(grid.pop("censor_frac", 0.2))
    alphas = _as_list(grid.pop("alpha", 0.05))
    if grid.get("lifetime") == "weibull" and "shape" not in grid:
        grid["shape"] = 2.0
    out = []
    for (a, p1), n, cf, al in itertools.product(pairs, ns, cens, alphas):
        try:
            out.append(SimConfig(a=a, p1=p1, n=n, censor_frac=cf, alpha=al, **grid))
        except TypeError as exc:
            raise ConfigError("config", str(exc)) from None
    return out


def simulate_table(configs: Iterable[SimConfig], *, workers: int = 1) -> list[dict]:
    """One row per config.

    Configs that differ only in ``alpha`` share one set of replications: the
    z values are computed once and thresholded at each level.
    """
    rows = []
    cache: dict = {}
    for cfg in configs:
        key = replace(cfg, alpha=0.05)
        if key not in cache:
            cache[key] = replicate(cfg, cell=len(cache), workers=workers)
        rate = rate_from_z(cache[key], cfg.alpha)
        row = {"a": cfg.a, "p1": cfg.p1, "n": cfg.n, "censor_frac": cfg.censor_frac,
               "alpha": cfg.alpha, "rejection_rate": rate.rejection_rate,
               "mc_se": rate.mc_standard_error, "reps": rate.reps, "seed": cfg.seed,
               "skipped": rate.skipped, "lifetime": cfg.lifetime, "shape": cfg.shape,
               "trunc_frac": cfg.trunc_frac, "scaling": cfg.scaling}
        rows.append(row)
    return rows


def table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    extra = [k for k in rows[0] if k not in TABLE_COLUMNS] if rows else []
    writer = csv.DictWriter(buf, fieldnames=list(TABLE_COLUMNS) + extra,
                            lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def config_dict(config: SimConfig) -> dict:
    return asdict(config)
