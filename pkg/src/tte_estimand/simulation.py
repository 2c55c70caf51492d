"""Scenario-driven cohort simulation and the censoring-dependence experiment.

Each arm has a piecewise-constant hazard for the endpoint, so the log hazard
ratio ``beta(t)`` between the arms is itself piecewise constant. Subjects
enter uniformly over the accrual period and are followed until the clinical
cutoff. Dropout and every intercurrent kind are independent exponentials.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import errors
from .events import ARMS, CONTROL, DEATH, DROPOUT, EXPERIMENTAL, ClinicalEvent, Cohort, SubjectTimeline
from .regression import avg_regression_effect, cox_fit
from .spec import (
    CENSORED,
    EVENT,
    EstimandSpec,
    Handling,
    IntercurrentRule,
    Strategy,
    SummarySpec,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def _merge_pieces(pieces):
    """Drop adjacent pieces that repeat the previous rate."""
    out = []
    for start, rate in pieces:
        if out and out[-1][1] == rate:
            continue
        out.append((float(start), float(rate)))
    return tuple(out)


@dataclass(frozen=True)
class Scenario:
    """Two-arm trial scenario.

    ``hazards[arm]`` is a list of ``(start, rate)`` pieces; the first starts
    at 0 and each rate holds until the next start. ``intercurrent[kind][arm]``
    is the exponential rate of an intercurrent event kind.
    """

    hazards: Mapping[str, tuple]
    accrual_duration: float
    cutoff_calendar_time: float
    n_per_arm: int
    seed: int = 0
    dropout_rate: float = 0.0
    intercurrent: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    endpoint_kind: str = "PD"
    name: str = "scenario"

    def __post_init__(self):
        problems = []
        hz = {}
        for arm in ARMS:
            pieces = self.hazards.get(arm) if isinstance(self.hazards, Mapping) else None
            if not pieces:
                problems.append(f"hazards.{arm}: missing")
                continue
            try:
                pieces = [(float(s), float(r)) for s, r in pieces]
            except (TypeError, ValueError):
                problems.append(f"hazards.{arm}: pieces must be (start, rate) pairs")
                continue
            if pieces[0][0] != 0.0:
                problems.append(f"hazards.{arm}: first piece must start at 0")
            if any(b[0] <= a[0] for a, b in zip(pieces, pieces[1:])):
                problems.append(f"hazards.{arm}: piece starts must increase")
            if any(not (math.isfinite(r) and r > 0) for _, r in pieces):
                problems.append(f"hazards.{arm}: rates must be finite and > 0")
            hz[arm] = tuple(pieces)
        extra = set(self.hazards) - set(ARMS) if isinstance(self.hazards, Mapping) else set()
        if extra:
            problems.append(f"hazards: unknown arm(s) {sorted(extra)}")
        if not (math.isfinite(self.accrual_duration) and self.accrual_duration > 0):
            problems.append("accrual_duration: must be > 0")
        if not (math.isfinite(self.cutoff_calendar_time) and self.cutoff_calendar_time > 0):
            problems.append("cutoff_calendar_time: must be > 0")
        if not (isinstance(self.n_per_arm, int) and self.n_per_arm >= 1):
            problems.append("n_per_arm: must be a positive integer")
        if not (math.isfinite(self.dropout_rate) and self.dropout_rate >= 0):
            problems.append("dropout_rate: must be >= 0")
        for kind, rates in self.intercurrent.items():
            if kind in (self.endpoint_kind, DROPOUT):
                problems.append(f"intercurrent.{kind}: clashes with the endpoint or dropout")
            for arm, r in rates.items():
                if arm not in ARMS or not (math.isfinite(r) and r >= 0):
                    problems.append(f"intercurrent.{kind}.{arm}: need a known arm and a rate >= 0")
        if problems:
            raise errors.InvalidScenario("; ".join(problems))
        object.__setattr__(self, "hazards", hz)
        object.__setattr__(
            self, "intercurrent", {k: {a: float(v.get(a, 0.0)) for a in ARMS} for k, v in sorted(self.intercurrent.items())}
        )

    def with_(self, **changes) -> Scenario:
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return Scenario(**fields)

    def breakpoints(self):
        return sorted({s for arm in ARMS for s, _ in self.hazards[arm]})

    def hazard(self, arm, t):
        pieces = self.hazards[arm]
        starts = np.array([s for s, _ in pieces])
        rates = np.array([r for _, r in pieces])
        return rates[np.searchsorted(starts, t, side="right") - 1]

    def cumulative_hazard(self, arm, t):
        pieces = self.hazards[arm]
        starts = np.array([s for s, _ in pieces])
        rates = np.array([r for _, r in pieces])
        h_at = np.concatenate(([0.0], np.cumsum(rates[:-1] * np.diff(starts))))
        i = np.searchsorted(starts, t, side="right") - 1
        return h_at[i] + rates[i] * (np.asarray(t, dtype=float) - starts[i])

    def log_hazard_ratio(self, t):
        """beta(t) = log(hazard_experimental / hazard_control)."""
        return np.log(self.hazard(EXPERIMENTAL, t) / self.hazard(CONTROL, t))

    def to_dict(self):
        return {
            "name": self.name,
            "hazards": {a: [list(p) for p in self.hazards[a]] for a in ARMS},
            "accrual_duration": self.accrual_duration,
            "cutoff_calendar_time": self.cutoff_calendar_time,
            "n_per_arm": self.n_per_arm,
            "seed": self.seed,
            "dropout_rate": self.dropout_rate,
            "intercurrent": {k: dict(v) for k, v in self.intercurrent.items()},
            "endpoint_kind": self.endpoint_kind,
        }


def scenario_from_dict(doc: Mapping) -> Scenario:
    """Build a scenario from a decoded config document with a ``scenario`` table."""
    if "scenario" not in doc:
        raise errors.InvalidScenario("missing [scenario] table")
    s = dict(doc["scenario"])
    try:
        return Scenario(
            hazards=s["hazards"],
            accrual_duration=float(s["accrual_duration"]),
            cutoff_calendar_time=float(s["cutoff_calendar_time"]),
            n_per_arm=int(s["n_per_arm"]),
            seed=int(s.get("seed", 0)),
            dropout_rate=float(s.get("dropout_rate", 0.0)),
            intercurrent=s.get("intercurrent", {}),
            endpoint_kind=str(s.get("endpoint_kind", "PD")),
            name=str(s.get("name", "scenario")),
        )
    except KeyError as exc:
        raise errors.InvalidScenario(f"scenario.{exc.args[0]}: missing") from None
    except (TypeError, ValueError) as exc:
        raise errors.InvalidScenario(f"scenario: {exc}") from None


def parse_scenario(text: str) -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise errors.ParseError(str(exc)) from None
    return scenario_from_dict(doc)


def builtin_scenario(name: str) -> Scenario:
    from importlib import resources

    path = resources.files(__package__) / "scenarios" / f"{name}.toml"
    if not path.is_file():
        raise errors.InvalidScenario(f"no built-in scenario named {name!r}")
    return parse_scenario(path.read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# sampling


def sample_piecewise_exponential(pieces, size, rng):
    """Invert the piecewise-linear cumulative hazard at standard exponential draws."""
    pieces = _merge_pieces(pieces)
    starts = np.array([s for s, _ in pieces])
    rates = np.array([r for _, r in pieces])
    h_at = np.concatenate(([0.0], np.cumsum(rates[:-1] * np.diff(starts))))
    e = rng.standard_exponential(size)
    i = np.searchsorted(h_at, e, side="right") - 1
    return starts[i] + (e - h_at[i]) / rates[i]


@dataclass(frozen=True)
class SimulatedArrays:
    """Latent times for every subject; ``arm`` is 0 (control) / 1 (experimental)."""

    arm: np.ndarray
    entry: np.ndarray
    endpoint: np.ndarray
    dropout: np.ndarray
    intercurrent: Mapping[str, np.ndarray]


def simulate_arrays(scenario: Scenario, rng=None) -> SimulatedArrays:
    """Draw latent entry, endpoint, dropout and intercurrent times.

    Draw order is fixed: entry times, then the endpoint per arm, then
    dropout, then each intercurrent kind in sorted order.
    """
    rng = np.random.default_rng(scenario.seed) if rng is None else rng
    n = scenario.n_per_arm
    arm = np.repeat([0, 1], n).astype(np.int8)
    entry = rng.uniform(0.0, scenario.accrual_duration, 2 * n)
    endpoint = np.concatenate([sample_piecewise_exponential(scenario.hazards[a], n, rng) for a in ARMS])
    if scenario.dropout_rate > 0:
        dropout = rng.standard_exponential(2 * n) / scenario.dropout_rate
    else:
        dropout = np.full(2 * n, np.inf)
    ic = {}
    for kind, rates in scenario.intercurrent.items():
        r = np.repeat([rates[CONTROL], rates[EXPERIMENTAL]], n)
        e = rng.standard_exponential(2 * n)
        with np.errstate(divide="ignore"):
            ic[kind] = np.where(r > 0, e / np.where(r > 0, r, 1.0), np.inf)
    return SimulatedArrays(arm, entry, endpoint, dropout, ic)


def _timeline(i, sim, scenario, horizon):
    arm = ARMS[sim.arm[i]]
    events = [(sim.endpoint[i], scenario.endpoint_kind), (sim.dropout[i], DROPOUT)]
    events += [(t[i], kind) for kind, t in sim.intercurrent.items()]
    kept = []
    for t, kind in sorted(e for e in events if e[0] <= horizon):
        kept.append(ClinicalEvent(kind, float(t)))
        if kind in (DROPOUT, DEATH):
            break
    prefix = "E" if arm == EXPERIMENTAL else "C"
    return SubjectTimeline(f"{prefix}{i:06d}", arm, tuple(kept), {}, float(sim.entry[i]))


def simulate_cohort(scenario: Scenario, rng=None) -> Cohort:
    """Simulate a cohort observed up to the scenario's clinical cutoff.

    Events after dropout or death, or after the cutoff, are not recorded.
    """
    sim = simulate_arrays(scenario, rng)
    subjects = [
        _timeline(i, sim, scenario, scenario.cutoff_calendar_time - sim.entry[i]) for i in range(sim.arm.size)
    ]
    return Cohort(tuple(subjects), scenario.cutoff_calendar_time)


def experiment_spec(scenario: Scenario) -> EstimandSpec:
    """Endpoint and every intercurrent kind count as events; dropout is censored."""
    rules = {k: IntercurrentRule(k, Handling(Strategy.COMPOSITE)) for k in scenario.intercurrent}
    rules[DROPOUT] = IntercurrentRule(DROPOUT, Handling(Strategy.HYPOTHETICAL))
    return EstimandSpec(
        name=f"{scenario.name}_composite",
        population=(),
        endpoint_kinds=frozenset({scenario.endpoint_kind}),
        rules=rules,
        summary=SummarySpec(gatekeeper="logrank", measures=("cox_hr", "avg_regression_effect")),
    )


def derive_arrays(sim: SimulatedArrays, cutoff: float):
    """Vectorized derivation under :func:`experiment_spec`.

    Gives the same times and statuses as compiling each simulated subject;
    subjects entering at or after ``cutoff`` are dropped.
    """
    horizon = cutoff - sim.entry
    keep = horizon > 0
    first_event = sim.endpoint
    for t in sim.intercurrent.values():
        first_event = np.minimum(first_event, t)
    censor = np.minimum(sim.dropout, horizon)
    time = np.minimum(first_event, censor)
    event = first_event <= censor
    return time[keep], event[keep], sim.arm[keep]


# --------------------------------------------------------------------------
# truth


def true_average_effect(scenario: Scenario, cutoff_regime: float | None = None) -> float:
    """Failure-weighted mean log hazard ratio, ``int beta dF / F(tau)`` on ``[0, tau]``.

    ``F`` is the pooled failure distribution with equal allocation. ``tau`` is
    the longest possible follow-up under ``cutoff_regime`` (entry starts at
    time 0); without a regime the integral runs over ``[0, inf)``.
    """
    if cutoff_regime is not None and not cutoff_regime > 0:
        raise errors.InvalidScenario(f"cutoff_regime must be > 0, got {cutoff_regime}")
    tau = math.inf if cutoff_regime is None else float(cutoff_regime)

    def density(t):
        return 0.5 * sum(
            float(scenario.hazard(a, t)) * math.exp(-float(scenario.cumulative_hazard(a, t))) for a in ARMS
        )

    knots = [b for b in scenario.breakpoints() if b < tau] + [tau]
    num = 0.0
    mass = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        beta = float(scenario.log_hazard_ratio(lo))
        m, _ = integrate.quad(density, lo, hi, epsabs=1e-10, epsrel=1e-10, limit=200)
        num += beta * m
        mass += m
    if mass <= 0:
        raise errors.InvalidScenario("no failure mass before the cutoff")
    return num / mass


# --------------------------------------------------------------------------
# experiment


@dataclass(frozen=True)
class RegimeSummary:
    cutoff: float
    cox_mean: float
    cox_sd: float
    xoq_mean: float
    xoq_sd: float
    true_beta_bar: float
    mean_events: float
    cox_estimates: tuple
    xoq_estimates: tuple

    def to_dict(self):
        return {
            "cutoff_calendar_time": self.cutoff,
            "cox_beta_hat": {"mean": self.cox_mean, "sd": self.cox_sd, "replicates": list(self.cox_estimates)},
            "avg_regression_effect": {"mean": self.xoq_mean, "sd": self.xoq_sd,
                                      "replicates": list(self.xoq_estimates)},
            "true_beta_bar": self.true_beta_bar,
            "mean_events": self.mean_events,
        }


@dataclass(frozen=True)
class ExperimentReport:
    scenario: Scenario
    regimes: tuple
    replicates: int
    seed: int
    replicate_seeds: tuple

    @property
    def drift(self):
        """Range over regimes of the replicate-mean estimates."""
        cox = [r.cox_mean for r in self.regimes]
        xoq = [r.xoq_mean for r in self.regimes]
        return {"cox_beta_hat": max(cox) - min(cox), "avg_regression_effect": max(xoq) - min(xoq)}

    def to_dict(self):
        return {
            "scenario": self.scenario.to_dict(),
            "regimes": [r.to_dict() for r in self.regimes],
            "replicates": self.replicates,
            "seed": self.seed,
            "replicate_seeds": list(self.replicate_seeds),
            "drift": self.drift,
        }


def _replicate(scenario, regimes, rep_seed):
    sim = simulate_arrays(scenario, np.random.default_rng(rep_seed))
    out = []
    for cutoff in regimes:
        t, e, z = derive_arrays(sim, cutoff)
        cox = cox_fit(t, e, z).beta_hat
        xoq = avg_regression_effect(t, e, z, n_boot=0).beta_bar
        out.append((cox, xoq, int(e.sum())))
    return out


def censoring_dependence_experiment(scenario: Scenario, regimes, replicates: int = 20, seed: int | None = None,
                                    threads: int = 1) -> ExperimentReport:
    """Compare Cox and average-regression-effect estimates across cutoff regimes.

    Every replicate simulates one cohort and analyses it at each cutoff, so
    regimes differ only in how much follow-up they see. Replicate seeds are
    derived from ``seed`` (the scenario seed if omitted) and results do not
    depend on ``threads``.
    """
    regimes = tuple(float(r) for r in regimes)
    if len(regimes) < 2:
        raise errors.TooFewRegimes(f"need at least two cutoff regimes, got {len(regimes)}")
    if any(not r > 0 for r in regimes):
        raise errors.InvalidScenario("regime cutoffs must be > 0")
    if int(replicates) < 1:
        raise errors.InvalidArgument(f"replicates must be >= 1, got {replicates}")
    seed = scenario.seed if seed is None else int(seed)
    children = np.random.SeedSequence(seed).spawn(int(replicates))
    rep_seeds = tuple(int(c.generate_state(1, np.uint64)[0]) for c in children)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda s: _replicate(scenario, regimes, s), rep_seeds))
    else:
        results = [_replicate(scenario, regimes, s) for s in rep_seeds]

    summaries = []
    for j, cutoff in enumerate(regimes):
        cox = np.array([r[j][0] for r in results])
        xoq = np.array([r[j][1] for r in results])
        ev = np.array([r[j][2] for r in results], dtype=float)
        sd = (lambda x: float(np.std(x, ddof=1)) if x.size > 1 else 0.0)
        summaries.append(RegimeSummary(
            cutoff, float(cox.mean()), sd(cox), float(xoq.mean()), sd(xoq),
            true_average_effect(scenario, cutoff), float(ev.mean()),
            tuple(cox.tolist()), tuple(xoq.tolist()),
        ))
    return ExperimentReport(scenario, tuple(summaries), int(replicates), seed, rep_seeds)
