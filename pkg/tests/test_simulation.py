import math

import numpy as np
import pytest

from tte_estimand import errors
from tte_estimand.simulation import (
    Scenario,
    builtin_scenario,
    censoring_dependence_experiment,
    derive_arrays,
    experiment_spec,
    parse_scenario,
    sample_piecewise_exponential,
    simulate_arrays,
    simulate_cohort,
    true_average_effect,
)
from tte_estimand.spec import EVENT, derive_dataset


def small(**kw):
    base = dict(
        hazards={"control": [(0, 1.0)], "experimental": [(0, 0.5)]},
        accrual_duration=1.0, cutoff_calendar_time=3.0, n_per_arm=50, seed=1,
    )
    base.update(kw)
    return Scenario(**base)


def test_exponential_mean():
    t = sample_piecewise_exponential([(0, 1.0)], 10000, np.random.default_rng(0))
    assert abs(t.mean() - 1.0) < 0.03


def test_piecewise_survival_matches_closed_form():
    pieces = [(0, 0.5), (1.0, 2.0), (2.0, 0.25)]
    t = sample_piecewise_exponential(pieces, 200000, np.random.default_rng(1))
    for x, h in ((0.5, 0.25), (1.5, 1.5), (3.0, 2.75)):
        assert abs(np.mean(t > x) - math.exp(-h)) < 0.005


def test_degenerate_pieces_are_bit_identical():
    a = sample_piecewise_exponential([(0, 0.7)], 1000, np.random.default_rng(2))
    b = sample_piecewise_exponential([(0, 0.7), (1.5, 0.7), (4.0, 0.7)], 1000, np.random.default_rng(2))
    assert np.array_equal(a, b)


def test_same_seed_same_cohort():
    s = builtin_scenario("ph_exponential").with_(n_per_arm=30)
    assert simulate_cohort(s) == simulate_cohort(s)
    assert simulate_cohort(s) != simulate_cohort(s.with_(seed=8))


def test_cohort_respects_cutoff_and_terminal_events():
    s = builtin_scenario("ph_exponential").with_(n_per_arm=300)
    cohort = simulate_cohort(s)
    for subj in cohort:
        horizon = s.cutoff_calendar_time - subj.entry_calendar_time
        kinds = [e.kind for e in subj.events]
        assert all(e.time <= horizon for e in subj.events)
        for stop in ("dropout", "death"):
            if stop in kinds:
                assert kinds.index(stop) == len(kinds) - 1


def test_invalid_scenario_lists_fields():
    with pytest.raises(errors.InvalidScenario) as exc:
        small(hazards={"control": [(1, 1.0)], "experimental": [(0, -1.0)]}, n_per_arm=0)
    msg = str(exc.value)
    assert "hazards.control" in msg and "hazards.experimental" in msg and "n_per_arm" in msg


def test_parse_scenario_text():
    s = parse_scenario("""
[scenario]
name = "t"
accrual_duration = 10
cutoff_calendar_time = 30
n_per_arm = 5
[scenario.hazards]
control = [[0, 0.1]]
experimental = [[0, 0.05], [5, 0.2]]
""")
    assert s.hazards["experimental"] == ((0.0, 0.05), (5.0, 0.2))
    assert float(s.log_hazard_ratio(6.0)) == pytest.approx(math.log(2))


def test_truth_constant_ratio():
    assert true_average_effect(small()) == pytest.approx(math.log(0.5), abs=1e-12)
    assert true_average_effect(small(), 2.0) == pytest.approx(math.log(0.5), abs=1e-12)
    null = small(hazards={"control": [(0, 1.0)], "experimental": [(0, 1.0)]})
    assert true_average_effect(null, 5.0) == 0.0


def delayed_truth(lam, t0, tau):
    """Closed form for a control rate ``lam`` and an experimental rate halving after ``t0``."""
    after_c = math.exp(-lam * t0) - (math.exp(-lam * tau) if tau < math.inf else 0.0)
    after_e = math.exp(-lam * t0) * (1 - (math.exp(-lam / 2 * (tau - t0)) if tau < math.inf else 0.0))
    mass = 0.5 * (1 - math.exp(-lam * t0)) * 2 + 0.5 * (after_c + after_e)
    return math.log(0.5) * 0.5 * (after_c + after_e) / mass


def test_truth_closed_form_delayed_effect():
    lam, t0 = 0.8, 1.0
    s = small(hazards={"control": [(0, lam)], "experimental": [(0, lam), (t0, lam / 2)]})
    for tau in (0.5, 1.5, 3.0, math.inf):
        got = true_average_effect(s, None if tau == math.inf else tau)
        assert got == pytest.approx(delayed_truth(lam, t0, tau) if tau > t0 else 0.0, abs=1e-9)


def test_truth_unchanged_by_refining_pieces():
    a = small(hazards={"control": [(0, 0.8)], "experimental": [(0, 0.8), (1.0, 0.4)]})
    b = small(hazards={"control": [(0, 0.8), (0.3, 0.8)], "experimental": [(0, 0.8), (1.0, 0.4), (2.2, 0.4)]})
    for tau in (1.7, 4.0):
        assert abs(true_average_effect(a, tau) - true_average_effect(b, tau)) < 1e-6


def test_derive_arrays_matches_subject_compilation():
    s = builtin_scenario("ph_exponential").with_(n_per_arm=150)
    cohort = simulate_cohort(s)
    sim = simulate_arrays(s)
    spec = experiment_spec(s)
    for cutoff in (900.0, s.cutoff_calendar_time):
        data = derive_dataset(spec, cohort, cutoff=cutoff)
        t, e, z = derive_arrays(sim, cutoff)
        assert np.array_equal(t, [o.time for o in data.observations])
        assert np.array_equal(e, [o.status == EVENT for o in data.observations])
        assert np.array_equal(z, [o.arm == "experimental" for o in data.observations])


def test_too_few_regimes():
    with pytest.raises(errors.TooFewRegimes):
        censoring_dependence_experiment(small(), [2.0], replicates=2, seed=1)


def test_ph_estimates_stable_across_regimes():
    s = builtin_scenario("ph_exponential").with_(n_per_arm=2000, intercurrent={}, dropout_rate=0.0)
    rep = censoring_dependence_experiment(s, [1100.0, 1826.25], replicates=10, seed=3)
    assert rep.drift["cox_beta_hat"] < 0.03
    assert rep.drift["avg_regression_effect"] < 0.03
    for r in rep.regimes:
        assert r.true_beta_bar == pytest.approx(math.log(0.7), abs=1e-12)


def test_experiment_threads_and_seed():
    s = builtin_scenario("delayed_effect").with_(n_per_arm=500)
    a = censoring_dependence_experiment(s, [547.875, 2191.5], replicates=4, seed=9)
    b = censoring_dependence_experiment(s, [547.875, 2191.5], replicates=4, seed=9, threads=3)
    assert a.to_dict() == b.to_dict()
    assert len(set(a.replicate_seeds)) == 4


def test_average_effect_robust_when_horizon_is_shared():
    # regimes differ in accrual speed and dropout; the last entrant always gets the same follow-up
    base = builtin_scenario("delayed_effect").with_(n_per_arm=5000)
    truth = true_average_effect(base, base.cutoff_calendar_time)
    means = []
    for accrual, dropout in ((365.25, 0.0), (1095.75, 0.0), (365.25, 0.0004)):
        s = base.with_(accrual_duration=accrual, dropout_rate=dropout)
        shift = accrual - base.accrual_duration
        cutoff = base.cutoff_calendar_time + shift
        rep = censoring_dependence_experiment(s, [cutoff, cutoff + 1e-6], replicates=4, seed=5)
        means.append(rep.regimes[0].xoq_mean)
    assert max(means) - min(means) < 0.05
    assert all(abs(m - truth) < 0.05 for m in means)
