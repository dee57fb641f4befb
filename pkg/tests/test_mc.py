import math

import numpy as np
import pytest

from bbm_lowmax import fkpp, mc
from bbm_lowmax.mc import McConfig, estimate_prob, run_blocks, sanity_population, simulate
from bbm_lowmax.rates import SQRT2, DomainError, typical_max


@pytest.mark.parametrize("kwargs", [
    dict(t=1.0, alpha=0.0, replicas=0),
    dict(t=0.0, alpha=0.0, replicas=10),
    dict(t=13.0, alpha=0.0, replicas=10),
    dict(t=1.0, alpha=0.0, replicas=10, seed=-1),
])
def test_config_validation(kwargs):
    with pytest.raises(DomainError):
        McConfig(**kwargs)


def test_population_mean_t2():
    cfg = McConfig(2.0, math.inf, 100_000, seed=1)
    pop = run_blocks(cfg).population
    se = math.sqrt(math.exp(2) * (math.exp(2) - 1) / cfg.replicas)
    assert abs(pop.mean() - math.exp(2)) <= 3 * se
    assert pop.min() >= 1


def test_first_branch_marginal():
    t = 1.5
    cfg = McConfig(t, math.inf, 100_000, seed=2)
    res = run_blocks(cfg)
    no_branch = np.isnan(res.first_tau).mean()
    p = math.exp(-t)
    assert abs(no_branch - p) <= 3 * math.sqrt(p * (1 - p) / cfg.replicas)
    taus = res.first_tau[~np.isnan(res.first_tau)]
    assert np.all(taus <= t)
    assert mc.tau_histogram_pvalue(taus / t, t) > 0.01


def test_median_max_t10(sol10):
    res = run_blocks(McConfig(10.0, math.inf, 400, seed=3))
    med = float(np.median(res.max_position))
    exact = float(np.interp(math.log(0.5), sol10.log_f[-1], sol10.x))
    # the density of the maximum at its median is about 0.19, so the sample
    # median of 400 draws has a standard error near 1/(2*0.19*20) = 0.13
    assert abs(med - exact) <= 0.4
    # typical_max carries no O(1) shift; the gap stays bounded
    assert abs(med - typical_max(10.0)) <= 2.0


def test_simulate_single():
    r = simulate(3.0, seed=5, replica=7)
    assert r == simulate(3.0, seed=5, replica=7)
    assert r.final_population >= 1
    if r.first_branch_time is not None:
        assert 0.0 < r.first_branch_time <= 3.0
    assert r != simulate(3.0, seed=5, replica=8)


def test_simulate_domain():
    with pytest.raises(DomainError):
        simulate(0.0, seed=0)


def test_population_cap():
    with pytest.raises(mc.PopulationCapError):
        run_blocks(McConfig(8.0, math.inf, 50, population_cap=100))


def test_worker_independence():
    cfg = McConfig(3.0, 0.3, 3500, seed=9, block_size=1000)
    a = estimate_prob(cfg, workers=1)
    b = estimate_prob(cfg, workers=2)
    assert (a.hits, a.p_hat, a.std_err) == (b.hits, b.p_hat, b.std_err)
    np.testing.assert_array_equal(a.cond_tau_samples, b.cond_tau_samples)
    np.testing.assert_array_equal(a.cond_y_samples, b.cond_y_samples)


def test_seed_changes_result():
    a = run_blocks(McConfig(3.0, 0.0, 2000, seed=1)).max_position
    b = run_blocks(McConfig(3.0, 0.0, 2000, seed=2)).max_position
    assert not np.array_equal(a, b)


def test_estimate_fields():
    cfg = McConfig(4.0, 0.99, 5000, seed=4)
    res = run_blocks(cfg)
    est = estimate_prob(cfg, result=res)
    assert 0.0 < est.p_hat < 1.0
    assert est.p_hat == est.hits / est.replicas
    assert est.std_err == pytest.approx(math.sqrt(est.p_hat * (1 - est.p_hat) / est.replicas))
    # conditioning consistency: every hit sits below the level
    hit = res.max_position <= cfg.level
    assert hit.sum() == est.hits
    assert np.all(res.max_position[hit] <= SQRT2 * 0.99 * 4.0)
    assert est.cond_tau_samples.size == (hit & ~np.isnan(res.first_tau)).sum()


def test_unconditional_tau_mean():
    t = 6.0
    rng = np.random.default_rng(0)
    sample = np.minimum(rng.exponential(size=200_000), t) / t
    assert mc.unconditional_tau_mean(t) == pytest.approx(sample.mean(), abs=3e-3)


def test_unconditional_histogram():
    cfg = McConfig(3.0, math.inf, 20_000, seed=12)
    est = estimate_prob(cfg)
    assert est.p_hat == 1.0
    assert mc.tau_histogram_pvalue(est.cond_tau_samples, cfg.t) > 0.01


def test_too_few_hits():
    cfg = McConfig(4.0, -0.5, 1000, seed=0)
    with pytest.raises(mc.TooFewHitsError):
        mc.conditional_first_branch(cfg)


def test_conditional_summary():
    cfg = McConfig(4.0, 0.0, 20_000, seed=6)
    summ = mc.conditional_first_branch(cfg, bins=10)
    assert summ.hits_with_branch >= 100
    assert summ.tau_hist.sum() == summ.hits_with_branch
    assert summ.mean_tau_over_t > summ.unconditional_tau_mean
    assert summ.mean_y_over_t < 0.0
    assert set(summ.as_dict()) >= {"mean_tau_over_t", "mean_y_over_t", "tau_hist", "y_hist"}


@pytest.mark.parametrize("t, replicas", [(3.0, 100_000), (0.1, 100_000)])
def test_sanity_population(t, replicas):
    rep = sanity_population(t, replicas, seed=0)
    assert rep.expected_mean == pytest.approx(math.exp(t))
    assert rep.expected_variance == pytest.approx(math.exp(t) * (math.exp(t) - 1))
    assert abs(rep.z_mean) <= 3.0
    assert not rep.flagged


def test_sanity_population_reproducible():
    assert sanity_population(2.0, 5000, seed=3) == sanity_population(2.0, 5000, seed=3)


def test_sanity_population_domain():
    with pytest.raises(DomainError):
        sanity_population(11.0, 10)


@pytest.mark.slow
def test_unbiased_against_fkpp_t4(sol10):
    cfg = McConfig(4.0, 0.0, 100_000, seed=21)
    est = estimate_prob(cfg)
    oracle = math.exp(fkpp.query(sol10, 4.0, 0.0))
    assert abs(est.p_hat - oracle) <= 3 * est.std_err


@pytest.mark.slow
def test_slope_band():
    ts = [4.0, 6.0, 8.0]
    reps = [20_000, 20_000, 5_000]
    logs = []
    for t, n in zip(ts, reps):
        est = estimate_prob(McConfig(t, 0.0, n, seed=31))
        logs.append(-math.log(est.p_hat))
    slope = np.polyfit(ts, logs, 1)[0]
    assert 0.6 < slope < 1.2


def test_exports(tmp_path):
    cfg = McConfig(3.0, 0.2, 500, seed=8)
    res = run_blocks(cfg)
    est = estimate_prob(cfg, result=res)
    mc.export_csv(est, cfg, res, tmp_path / "r.csv")
    mc.export_json(est, tmp_path / "r.json")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "replica,hit,tau_over_t,y_over_t"
    assert len(lines) == 501
    assert sum(int(l.split(",")[1]) for l in lines[1:]) == est.hits
    assert '"p_hat"' in (tmp_path / "r.json").read_text()
