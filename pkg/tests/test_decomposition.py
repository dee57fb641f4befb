import math

import numpy as np
import pytest

from bbm_lowmax import fkpp
from bbm_lowmax.decomposition import (CoverageError, DecompositionQuery, Mode,
                                      constrained_prob, constrained_prob_asymptotic,
                                      constrained_prob_exact, slope_fit)
from bbm_lowmax.rates import SQRT2, DomainError, Region, psi1, psi2, psi3, psi4
from bbm_lowmax.variational import ConstraintSpec, Location, spec_for


def exact(sol, alpha, t, spec, **kw):
    return constrained_prob_exact(DecompositionQuery(alpha, t, spec, Mode.EXACT), sol, **kw)


def asym(alpha, t, spec, **kw):
    return constrained_prob_asymptotic(DecompositionQuery(alpha, t, spec, Mode.ASYMPTOTIC, **kw))


@pytest.mark.parametrize("alpha", [0.0, -0.5, 0.3])
def test_total_probability(sol10, alpha):
    est = exact(sol10, alpha, 10.0, ConstraintSpec((0.0, 1.0)))
    direct = fkpp.query(sol10, 10.0, SQRT2 * alpha * 10.0)
    assert est.ln_prob == pytest.approx(direct, abs=1e-3)
    assert 0.0 < est.probability <= 1.0


@pytest.mark.parametrize("alpha, gamma", [(0.0, 0.4), (-0.5, 0.7), (0.3, 0.2)])
def test_partition_additivity(sol10, alpha, gamma):
    whole = exact(sol10, alpha, 10.0, ConstraintSpec((0.0, 1.0)))
    left = exact(sol10, alpha, 10.0, ConstraintSpec((0.0, gamma)))
    right = exact(sol10, alpha, 10.0, ConstraintSpec((gamma, 1.0)))
    joined = np.logaddexp(left.ln_prob, right.ln_prob)
    err = whole.quadrature_error + left.quadrature_error + right.quadrature_error
    assert abs(joined - whole.ln_prob) <= 2.0 * err + 1e-6


@pytest.mark.parametrize("alpha, outer, inner", [
    (0.0, ConstraintSpec((0.0, 1.0)), ConstraintSpec((0.0, 0.5))),
    (0.0, ConstraintSpec((0.0, 0.5)), ConstraintSpec((0.1, 0.3))),
    (0.0, ConstraintSpec((0.499, 0.5), Location.BELOW, 1.0),
     ConstraintSpec((0.499, 0.5), Location.BELOW, 2.0)),
    (-0.5, ConstraintSpec((0.299, 0.3), Location.ABOVE, 0.5),
     ConstraintSpec((0.299, 0.3), Location.ABOVE, -1.0)),
])
def test_constraint_monotonicity(sol10, alpha, outer, inner):
    a = exact(sol10, alpha, 10.0, outer)
    b = exact(sol10, alpha, 10.0, inner)
    assert b.ln_prob <= a.ln_prob + a.quadrature_error + b.quadrature_error


def test_exact_needs_coverage(sol10):
    with pytest.raises(CoverageError):
        exact(sol10, 0.0, 20.0, ConstraintSpec((0.0, 0.3)))


def test_mode_mismatch(sol10):
    q = DecompositionQuery(0.0, 10.0, ConstraintSpec((0.0, 0.3)), Mode.ASYMPTOTIC)
    with pytest.raises(DomainError):
        constrained_prob_exact(q, sol10)
    with pytest.raises(DomainError):
        constrained_prob(DecompositionQuery(0.0, 10.0, ConstraintSpec((0.0, 0.3))))


@pytest.mark.parametrize("t, alpha", [(0.0, 0.0), (10.0, 1.0)])
def test_query_validation(t, alpha):
    with pytest.raises(DomainError):
        DecompositionQuery(alpha, t, ConstraintSpec((0.0, 1.0)))


def test_slope_fit_exact():
    t = np.array([10.0, 20.0, 30.0, 40.0])
    fit = slope_fit(t, -(2 * t + np.log(t) + 3))
    assert (fit.psi_hat, fit.c, fit.d) == pytest.approx((2.0, 1.0, 3.0), abs=1e-10)


def test_slope_fit_noisy():
    rng = np.random.default_rng(0)
    t = np.arange(10.0, 41.0, 2.0)
    for _ in range(20):
        noisy = -(1.3 * t + 0.5 * np.log(t) - 1.0) + rng.normal(0.0, 0.01, t.size)
        assert slope_fit(t, noisy).psi_hat == pytest.approx(1.3, abs=0.02)


def test_slope_fit_constant():
    assert slope_fit([10, 20, 30, 40], [-4.0] * 4).psi_hat == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("t", [[10, 20, 20, 40], [10, 20]])
def test_slope_fit_errors(t):
    with pytest.raises(DomainError):
        slope_fit(t, [-1.0] * len(t))


def test_exact_slope_time(sol40):
    ts = [10.0, 20.0, 30.0, 40.0]
    lp = [exact(sol40, 0.0, t, ConstraintSpec((0.0, 0.3))).ln_prob for t in ts]
    assert slope_fit(ts, lp).psi_hat == pytest.approx(psi1(0.0, 0.3).value, rel=0.10)


def test_asymptotic_time_t400():
    est = asym(0.0, 400.0, ConstraintSpec((0.0, 0.2)))
    assert est.minus_log_over_t == pytest.approx(psi1(0.0, 0.2).value, rel=0.03)


def test_asymptotic_regions():
    spec = ConstraintSpec((0.0, 0.2))
    full = asym(0.0, 400.0, spec)
    comps = full.components
    assert set(comps) == {"I1", "I2", "I3"}
    assert np.logaddexp.reduce(list(comps.values())) == pytest.approx(full.ln_prob, abs=1e-9)
    assert comps["I2"] == max(comps.values())
    no_y3 = asym(0.0, 400.0, spec, regions=frozenset({Region.I1, Region.I2}))
    assert abs(no_y3.ln_prob - full.ln_prob) / abs(full.ln_prob) < 1e-6


@pytest.mark.parametrize("theorem, alpha, gamma, beta, ts", [
    ("time_late", 0.0, 0.8, None, [100.0, 200.0, 400.0]),
    ("location_below", 0.0, 0.5, 2.0, [100.0, 200.0, 400.0]),
    ("location_above", -1.0, 0.3, -1.0, [100.0, 200.0, 400.0]),
])
def test_asymptotic_slopes(theorem, alpha, gamma, beta, ts):
    spec = spec_for(theorem, alpha, gamma, beta, eps=1e-3)
    target = {"time_late": lambda: psi2(alpha, gamma), "location_below": lambda: psi3(alpha, gamma, beta),
              "location_above": lambda: psi4(alpha, gamma, beta)}[theorem]().value
    lp = [asym(alpha, t, spec).ln_prob for t in ts]
    assert slope_fit(ts, lp).psi_hat == pytest.approx(target, rel=0.10)


@pytest.mark.slow
def test_exact_minus_asymptotic_is_sublinear():
    sol = fkpp.solve(fkpp.FkppConfig.default(400.0, -0.5, dx=0.25))
    spec = ConstraintSpec((0.0, 0.2))
    gaps = []
    for t in (100.0, 400.0):
        e = exact(sol, 0.0, t, spec, panel_len=t / 100.0)
        a = asym(0.0, t, spec)
        gaps.append(abs(e.ln_prob - a.ln_prob) / t)
    assert gaps[1] < gaps[0]


def test_asymptotic_is_deterministic():
    spec = ConstraintSpec((0.0, 0.3))
    assert asym(0.0, 100.0, spec).ln_prob == asym(0.0, 100.0, spec).ln_prob
    assert math.isfinite(asym(-1.0, 100.0, spec).ln_prob)
