import numpy as np
import pytest

from ltrc_ustat import sim
from ltrc_ustat.errors import ConfigError, InvalidProbability, NoRoot
from ltrc_ustat.sim import SimConfig


def test_exponential_calibration_closed_forms():
    assert sim.calibrate_censoring("exp", 0.2) == pytest.approx(0.25)
    assert sim.calibrate_censoring("exp", 0.4) == pytest.approx(2 / 3)
    assert sim.calibrate_truncation("exp", 0.2) == pytest.approx(0.25)
    assert sim.calibrate_truncation("exp", 0.5) == pytest.approx(1.0)


@pytest.mark.parametrize("lifetime, shape", [("exp", 1.0), ("weibull", 2.0)])
def test_calibration_monotone(lifetime, shape):
    c = [sim.calibrate_censoring(lifetime, p, shape) for p in (0.01, 0.2, 0.4)]
    t = [sim.calibrate_truncation(lifetime, q, shape) for q in (0.01, 0.2, 0.4)]
    assert c[0] < c[1] < c[2]
    assert t[0] < t[1] < t[2]


def test_weibull_calibration_hits_target(rng):
    g = sim.calibrate_censoring("weibull", 0.2, 2.0)
    mu = sim.calibrate_truncation("weibull", 0.2, 2.0)
    x = sim.draw_lifetimes(rng, 400_000, "weibull", 2.0)
    c = rng.exponential(1 / g, x.size)
    l = rng.exponential(mu, x.size)
    assert np.mean(x > c) == pytest.approx(0.2, abs=0.003)
    assert np.mean(l > x) == pytest.approx(0.2, abs=0.003)


def test_weibull_cdf():
    assert sim.lifetime_cdf(1.0, "weibull", 2.0) == pytest.approx(1 - np.exp(-1))
    assert sim.lifetime_cdf(0.5, "weibull", 2.0) == pytest.approx(1 - np.exp(-0.25))


def test_bad_fraction():
    with pytest.raises(InvalidProbability):
        sim.calibrate_censoring("exp", 1.2)


def test_no_root():
    with pytest.raises(NoRoot):
        sim._solve(lambda t: 0.5, 0.2, "x")


def test_cause_probability():
    cfg = SimConfig(a=1.0, p1=0.45)
    assert np.allclose(sim.cause_probability(np.array([0.1, 1, 5]), 1.0, 0.45), 0.45)
    x = -np.log(0.5)  # F(x) = 0.5
    assert sim.cause_probability(x, 2.0, 0.3) == pytest.approx(0.3)
    with pytest.raises(InvalidProbability):
        sim.cause_probability(1.0, 2.0, 0.6)
    assert sim.assign_cause(1.0, cfg, np.random.default_rng(0)) in (1, 2)


@pytest.mark.parametrize("a", [1.0, 1.5, 2.0])
def test_marginal_cause_frequency(rng, a):
    cfg = SimConfig(a=a, p1=0.3)
    x = sim.draw_lifetimes(rng, 100_000)
    freq = np.mean(sim.assign_cause(x, cfg, rng) == 1)
    se = np.sqrt(0.3 * 0.7 / x.size)
    assert abs(freq - 0.3) < 3 * se


@pytest.mark.parametrize("field, value", [
    ("a", 2.5), ("p1", 0.0), ("censor_frac", 1.0), ("n", 4), ("reps", 0),
    ("lifetime", "gamma"), ("scaling", "other"), ("alpha", 0.0),
])
def test_config_validation(field, value):
    with pytest.raises(ConfigError) as err:
        SimConfig(**{field: value})
    assert err.value.field == field


def test_config_rejects_improper_cause_law():
    with pytest.raises(InvalidProbability):
        SimConfig(a=2.0, p1=0.6)


def test_generated_rows_are_observed(rng):
    s = sim.draw_ltrc_sample(SimConfig(n=500), rng)
    assert len(s) == 500
    assert np.all(s.time > s.trunc)
    assert np.all((s.cause != 0) == s.event)


def test_limiting_configuration_has_few_censorings(rng):
    s = sim.draw_ltrc_sample(SimConfig(n=2000, censor_frac=1e-4, trunc_frac=1e-4), rng)
    assert s.n_censored / len(s) < 0.01


def test_observed_censoring_fraction_oracle():
    cfg = SimConfig(n=10_000, censor_frac=0.2, trunc_frac=0.2)
    s = sim.draw_ltrc_sample(cfg, np.random.default_rng(5))
    want = sim.observed_censor_fraction(cfg)
    se = np.sqrt(want * (1 - want) / len(s))
    assert abs(s.n_censored / len(s) - want) < 4 * se


def test_observation_probability_matches_draws(rng):
    cfg = SimConfig(lifetime="weibull", shape=2.0)
    pop = sim.draw_population(cfg, 200_000, rng)
    assert np.mean(pop["observed"]) == pytest.approx(sim.observation_probability(cfg), abs=0.004)


def test_empirical_rate_standard_error():
    r = sim.EmpiricalRate.from_hits(30, 200, 1)
    assert r.rejection_rate == 0.15
    assert r.mc_standard_error == pytest.approx(np.sqrt(0.15 * 0.85 / 200))
    assert r.skipped == 1


def test_monte_carlo_deterministic_across_workers():
    cfg = SimConfig(n=40, reps=30, seed=9)
    z1 = sim.replicate(cfg, workers=1, chunk=7)
    z2 = sim.replicate(cfg, workers=2, chunk=7)
    assert np.array_equal(z1, z2, equal_nan=True)
    assert sim.monte_carlo(cfg) == sim.monte_carlo(cfg, workers=2)


def test_smoke_single_rep():
    r = sim.monte_carlo(SimConfig(n=30, reps=1))
    assert r.rejection_rate in (0.0, 1.0) or r.skipped == 1


def test_grid_expansion_and_table():
    grid = {"pairs": [[1.0, 0.45], [2.0, 0.45]], "n": [30, 40], "censor_frac": [0.2, 0.4],
            "alpha": [0.05, 0.01], "reps": 5, "seed": 1}
    configs = sim.expand_grid(grid)
    assert len(configs) == 16
    rows = sim.simulate_table(configs[:4])
    text = sim.table_csv(rows)
    assert text.splitlines()[0].startswith(
        "a,p1,n,censor_frac,alpha,rejection_rate,mc_se,reps,seed")
    assert sim.table_csv(sim.simulate_table(configs[:4])) == text
    # the two alpha rows share replications: the 1% rate cannot exceed the 5% one
    assert rows[1]["rejection_rate"] <= rows[0]["rejection_rate"]


def test_grid_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        sim.expand_grid({"colour": "red"})
    assert sim.expand_grid({"lifetime": "weibull"})[0].shape == 2.0
