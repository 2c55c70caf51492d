import numpy as np
import pytest

from tte_estimand.events import ClinicalEvent, Cohort, SubjectTimeline

ACCEPTANCE_LINES = []


def record_acceptance(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def pytest_addoption(parser):
    parser.addoption("--regen-golden", action="store_true", help="rewrite golden report files")


def random_two_arm(rng, n, censoring=True):
    """Continuous event times (no ties) with both arms present."""
    z = np.zeros(n)
    z[rng.permutation(n)[: rng.integers(1, n)]] = 1
    t = rng.exponential(1.0, n) * np.exp(0.5 * rng.normal() * z)
    if censoring:
        c = rng.exponential(1.5, n)
        e = t <= c
        t = np.minimum(t, c)
        if not e.any():
            e[np.argmin(t)] = True
    else:
        e = np.ones(n, dtype=bool)
    return t, e, z


def timeline(sid, events, arm="control", **kw):
    return SubjectTimeline(sid, arm, tuple(ClinicalEvent(k, float(t)) for k, t in events), **kw)


@pytest.fixture
def dlbcl_cohort():
    """Six subjects covering every NALT / failure-to-respond / death ordering of interest."""
    subjects = [
        timeline("S1", [("PD", 100)]),
        timeline("S2", [("NALT", 50), ("PD", 120)], "experimental"),
        timeline("S3", [("failure_to_respond", 40), ("PD", 150)]),
        timeline("S4", [("NALT", 60), ("failure_to_respond", 70), ("death", 200)], "experimental"),
        timeline("S5", [("NALT", 80)]),
        timeline("S6", [("death", 90)], "experimental"),
    ]
    return Cohort(tuple(subjects), 365.0)


def gallium_like_cohort(n=120, seed=11, cutoff=1500.0):
    """Synthetic follicular-lymphoma-style cohort with every GALLIUM event kind."""
    rng = np.random.default_rng(seed)
    subjects = []
    chemo = ["CHOP", "CVP", "bendamustine"]
    flipi = ["low", "intermediate", "high"]
    for i in range(n):
        arm = "experimental" if i % 2 else "control"
        entry = float(rng.uniform(0, 600))
        horizon = cutoff - entry
        pd = rng.exponential(700 if arm == "experimental" else 500)
        death = rng.exponential(4000)
        drop = rng.exponential(6000)
        events = []
        t = 120.0
        while t < min(pd, death, drop, horizon):
            if rng.uniform() < 0.05:
                events.append(("missed_assessment", t))
            else:
                events.append(("response_assessment", t))
                if t == 120.0 and rng.uniform() < 0.6:
                    events.append(("CR" if rng.uniform() < 0.5 else "PR", t))
            t += 120.0
        if pd < min(death, drop):
            events.append(("PD", pd))
        for kind, scale in (("NALT", 3000), ("withdrawal", 8000), ("treatment_discontinuation", 3000)):
            x = rng.exponential(scale)
            if x < min(death, drop):
                events.append((kind, x))
        if drop < death:
            events.append(("dropout", drop))
        else:
            events.append(("death", death))
        events = [(k, round(float(x), 3)) for k, x in events if x <= horizon]
        subjects.append(timeline(
            f"G{i:03d}", events, arm,
            strata={"chemotherapy": chemo[i % 3], "FLIPI1": flipi[(i // 3) % 3],
                    "histology": "MZL" if i % 10 == 9 else "FL"},
            entry_calendar_time=round(entry, 3),
        ))
    from tte_estimand.events import validate_timeline

    return Cohort(tuple(validate_timeline(s) for s in subjects), cutoff)
