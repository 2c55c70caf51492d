import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tte_estimand import errors
from tte_estimand.survival import contrast, kaplan_meier, nelson_aalen, quantile, rmst, survival_at


def km_oracle(time, event):
    """Product-limit estimate in exact arithmetic, one distinct event time at a time."""
    data = list(zip(time, event))
    out = []
    s = Fraction(1)
    for t in sorted({t for t, e in data if e}):
        y = sum(1 for u, _ in data if u >= t)
        d = sum(1 for u, e in data if u == t and e)
        s *= Fraction(y - d, y)
        out.append((t, s))
    return out


def test_km_no_censoring():
    c = kaplan_meier([1, 2, 3], [1, 1, 1])
    assert c.times.tolist() == [1, 2, 3]
    assert c.estimates.tolist() == [2 / 3, 1 / 3, 0.0]


def test_km_with_censoring():
    c = kaplan_meier([1, 2, 3], [1, 0, 1])
    assert c(1) == 2 / 3 and c(3) == 0.0


def test_km_all_censored():
    c = kaplan_meier([1, 2], [0, 0])
    assert c.times.size == 0
    assert c(0) == 1.0 and c(2) == 1.0


def test_km_events_before_censoring_at_ties():
    c = kaplan_meier([2, 2, 3], [1, 0, 1])
    assert c.at_risk.tolist() == [3, 1]
    assert c(2) == pytest.approx(2 / 3)


def test_km_input_errors():
    with pytest.raises(errors.EmptyData):
        kaplan_meier([], [])
    with pytest.raises(errors.NonPositiveTime):
        kaplan_meier([0, 1], [1, 1])


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(1, 20), st.booleans()), min_size=1, max_size=30))
def test_km_matches_exact_oracle(rows):
    t, e = zip(*rows)
    c = kaplan_meier(t, e)
    oracle = km_oracle(t, e)
    assert c.times.tolist() == [float(x) for x, _ in oracle]
    np.testing.assert_allclose(c.estimates, [float(s) for _, s in oracle], rtol=1e-13, atol=1e-15)
    assert np.all(np.diff(c.estimates) <= 0)


def test_greenwood_against_formula():
    t = [1, 2, 2, 3, 4, 5, 6]
    e = [1, 1, 0, 1, 0, 1, 0]
    c = kaplan_meier(t, e)
    s, acc = 1.0, 0.0
    for k, time in enumerate(c.times):
        y = sum(u >= time for u in t)
        d = sum(u == time and x for u, x in zip(t, e))
        s *= 1 - d / y
        acc += d / (y * (y - d)) if y > d else 0.0
        assert c.greenwood_var[k] == pytest.approx(s * s * acc if s > 0 else 0.0)


def test_nelson_aalen():
    times, h, v = nelson_aalen([1, 2, 3], [1, 1, 1])
    np.testing.assert_allclose(h, [1 / 3, 1 / 3 + 1 / 2, 1 / 3 + 1 / 2 + 1])
    np.testing.assert_allclose(v, [1 / 9, 1 / 9 + 1 / 4, 1 / 9 + 1 / 4 + 1])


def test_survival_at():
    c = kaplan_meier([1, 2, 3], [1, 1, 1])
    assert survival_at(c, 2.5).value == pytest.approx(1 / 3)
    zero = survival_at(c, 0)
    assert (zero.value, zero.ci_low, zero.ci_high) == (1.0, 1.0, 1.0)
    with pytest.raises(errors.BeyondFollowUp):
        survival_at(c, 10)


def test_survival_ci_loglog_within_unit_interval():
    rng = np.random.default_rng(3)
    t = rng.exponential(1, 200)
    c = kaplan_meier(t, rng.uniform(size=200) < 0.7)
    for t0 in (0.2, 0.5, 1.0, 2.0):
        est = survival_at(c, t0)
        assert 0 <= est.ci_low <= est.value <= est.ci_high <= 1


def test_quantile():
    c = kaplan_meier([1, 2, 3], [1, 1, 1])
    assert quantile(c, 0.5) == 2.0
    heavy = kaplan_meier([1, 2, 3, 4, 5], [1, 0, 0, 0, 0])
    assert quantile(heavy, 0.5) is None
    with pytest.raises(errors.QOutOfRange):
        quantile(c, 0)


def test_rmst_examples():
    c = kaplan_meier([1, 2, 3], [1, 1, 1])
    assert rmst(c, 3).value == 2.0
    assert rmst(c, 1e-9).value == pytest.approx(0, abs=1e-8)
    assert rmst(kaplan_meier([1, 2], [0, 0]), 2).value == 2.0


def test_rmst_against_riemann_sum():
    rng = np.random.default_rng(7)
    t = rng.exponential(2, 80)
    e = rng.uniform(size=80) < 0.8
    c = kaplan_meier(t, e)
    tau = 2.5
    grid = np.linspace(0, tau, 250001)
    riemann = np.sum(c(grid[:-1]) * np.diff(grid))
    assert rmst(c, tau).value == pytest.approx(riemann, abs=2e-4)


def test_rmst_variance_close_to_bootstrap():
    rng = np.random.default_rng(11)
    t = rng.exponential(1, 400)
    c = kaplan_meier(t, np.ones(400, bool))
    a = rmst(c, 1.0)
    b = rmst(c, 1.0, variance="bootstrap", n_boot=400, seed=1)
    assert b.se == pytest.approx(a.se, rel=0.2)


def test_contrast_identical_curves():
    rng = np.random.default_rng(5)
    t = rng.exponential(1, 100)
    c = kaplan_meier(t, np.ones(100, bool))
    for measure, p in (("milestone", 0.5), ("rmst", 1.0), ("quantile", 0.5)):
        est = contrast(c, c, measure, p, n_boot=200, seed=1)
        assert est.value == 0
        assert est.ci_low <= 0 <= est.ci_high


def test_milestone_difference():
    exp = kaplan_meier([1, 2, 6, 7, 8], [1, 1, 0, 0, 0])
    ctrl = kaplan_meier([1, 2, 3, 7, 8], [1, 1, 1, 0, 0])
    est = contrast(exp, ctrl, "milestone", 5.0)
    assert est.value == pytest.approx(0.2, abs=1e-12)
    r = contrast(exp, ctrl, "milestone", 5.0, scale="ratio")
    assert r.value == pytest.approx(1.5)
    o = contrast(exp, ctrl, "milestone", 5.0, scale="odds_ratio")
    assert o.value == pytest.approx((0.6 / 0.4) / (0.4 / 0.6))


def test_rmst_difference_exponential():
    rng = np.random.default_rng(2024)
    n = 10000
    exp = kaplan_meier(rng.exponential(1.0, n), np.ones(n, bool))
    ctrl = kaplan_meier(rng.exponential(0.5, n), np.ones(n, bool))
    est = contrast(exp, ctrl, "rmst", 1.0)
    truth = (1 - math.exp(-1)) - (1 - math.exp(-2)) / 2
    assert abs(est.value - truth) < 0.02
    assert est.ci_low < truth < est.ci_high


def test_undefined_quantile_contrast():
    a = kaplan_meier([1, 2, 3, 4], [1, 0, 0, 0])
    b = kaplan_meier([1, 2, 3, 4], [1, 1, 1, 1])
    with pytest.raises(errors.UndefinedQuantile):
        contrast(a, b, "quantile", 0.5, n_boot=50)
