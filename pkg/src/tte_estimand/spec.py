"""Declarative estimand specifications and their compilation to survival data.

A spec names the four estimand attributes: a population filter, the variable
(time origin plus endpoint-defining event kinds), one handling strategy per
intercurrent event kind, and the summary measure. ``compile_subject`` turns a
subject timeline into a single ``(time, status, cause)`` observation and keeps
an audit log of every decision it made on the way.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from typing import Any, Mapping

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from . import errors
from .events import ARMS, EXPERIMENTAL, Cohort, SubjectTimeline, apply_clinical_cutoff

RANDOMISATION = "randomisation"

EVENT = "event"
CENSORED = "censored"
COMPETING = "competing"

# Observations whose derived time would be zero or negative (censoring at the
# origin) are placed on day one.
DAY_ONE = 1.0


class Strategy(str, Enum):
    TREATMENT_POLICY = "treatment_policy"
    COMPOSITE = "composite"
    HYPOTHETICAL = "hypothetical"
    WHILE_ON_TREATMENT = "while_on_treatment"
    PRINCIPAL_STRATUM = "principal_stratum"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        if not isinstance(text, str):
            raise errors.UnknownStrategy(repr(text))
        key = text.strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"principal_strata": "principal_stratum", "competing": "while_on_treatment"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise errors.UnknownStrategy(text) from None


class TimeRule(str, Enum):
    """Where an intercurrent event places the derived time."""

    AT_EVENT = "at_event"
    LAST_ASSESSMENT = "last_assessment"
    DAY_AFTER_LAST_ASSESSMENT = "day_after_last_assessment"
    NEXT_ASSESSMENT = "next_assessment"


@dataclass(frozen=True)
class Handling:
    strategy: Strategy
    cause: str | None = None
    time_rule: TimeRule = TimeRule.AT_EVENT

    def to_dict(self):
        out = {"strategy": self.strategy.value}
        if self.cause is not None:
            out["cause"] = self.cause
        if self.time_rule is not TimeRule.AT_EVENT:
            out["time_rule"] = self.time_rule.value
        return out


@dataclass(frozen=True)
class GapOverride:
    """Alternative handling when the event occurs long after the last assessment."""

    min_gap: float
    handling: Handling


@dataclass(frozen=True)
class IntercurrentRule:
    kind: str
    handling: Handling
    arm_override: Mapping[str, Handling] = field(default_factory=dict)
    gap_override: GapOverride | None = None

    def resolve(self, arm: str, gap: float | None = None) -> Handling:
        h = self.arm_override.get(arm, self.handling)
        if self.gap_override is not None and gap is not None and gap >= self.gap_override.min_gap:
            h = self.gap_override.handling
        return h

    def handlings(self):
        out = [self.handling, *self.arm_override.values()]
        if self.gap_override is not None:
            out.append(self.gap_override.handling)
        return out

    def to_dict(self):
        out = self.handling.to_dict()
        if self.arm_override:
            out["arm_override"] = {a: h.to_dict() for a, h in sorted(self.arm_override.items())}
        if self.gap_override is not None:
            g = self.gap_override.handling.to_dict()
            g["min_gap_after_last_assessment"] = self.gap_override.min_gap
            out["gap_override"] = g
        return out


@dataclass(frozen=True)
class Clause:
    """One atomic population clause: equality, or an inclusive numeric range."""

    key: str
    value: Any = None
    low: float | None = None
    high: float | None = None

    def _lookup(self, subject):
        if self.key == "arm":
            return subject.arm
        if self.key.startswith("stratum."):
            return subject.strata.get(self.key[len("stratum."):])
        if self.key.startswith("cov."):
            return subject.covariates.get(self.key[len("cov."):])
        if self.key in subject.strata:
            return subject.strata[self.key]
        return subject.covariates.get(self.key)

    def matches(self, subject) -> bool:
        actual = self._lookup(subject)
        if actual is None:
            return False
        if self.low is not None or self.high is not None:
            try:
                x = float(actual)
            except (TypeError, ValueError):
                return False
            if self.low is not None and x < self.low:
                return False
            return not (self.high is not None and x > self.high)
        if isinstance(self.value, bool):
            return str(actual).lower() == str(self.value).lower()
        if isinstance(self.value, (int, float)):
            try:
                return float(actual) == float(self.value)
            except (TypeError, ValueError):
                return False
        return str(actual) == str(self.value)

    def to_value(self):
        if self.low is not None or self.high is not None:
            out = {}
            if self.low is not None:
                out["min"] = self.low
            if self.high is not None:
                out["max"] = self.high
            return out
        return self.value


TEST_MEASURES = ("logrank", "stratified_logrank", "rerandomization")
EFFECT_MEASURES = ("cox_hr", "avg_regression_effect", "milestone", "quantile_diff", "rmst_diff")
SCALES = ("difference", "ratio", "odds_ratio")


@dataclass(frozen=True)
class SummarySpec:
    gatekeeper: str | None = "logrank"
    measures: tuple[str, ...] = ("cox_hr",)
    stratified: tuple[str, ...] | bool = ()
    t0: float | None = None
    q: float | None = None
    tau: float | None = None
    scale: str = "difference"
    ties: str = "breslow"
    alpha: float = 0.05
    level: float = 0.95
    permutations: int = 10000
    bootstrap: int = 1000

    @property
    def effects(self):
        return tuple(m for m in self.measures if m in EFFECT_MEASURES)

    @property
    def randomized(self):
        """True if analysing under this summary consumes random numbers."""
        return self.gatekeeper == "rerandomization" or any(
            m in ("avg_regression_effect", "quantile_diff") for m in self.effects
        )

    def to_dict(self):
        out = {
            "gatekeeper": self.gatekeeper if self.gatekeeper is not None else "none",
            "measure": list(self.measures),
            "stratified": self.stratified if isinstance(self.stratified, bool) else list(self.stratified),
            "scale": self.scale,
            "ties": self.ties,
            "alpha": self.alpha,
            "level": self.level,
            "permutations": self.permutations,
            "bootstrap": self.bootstrap,
        }
        for key in ("t0", "q", "tau"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out


@dataclass(frozen=True)
class EstimandSpec:
    name: str
    population: tuple[Clause, ...]
    endpoint_kinds: frozenset[str]
    rules: Mapping[str, IntercurrentRule]
    summary: SummarySpec
    origin: tuple[str, ...] = ()
    origin_before: tuple[str, ...] = ()
    assessment_kinds: frozenset[str] = frozenset()
    marker_kinds: frozenset[str] = frozenset()
    censor_at_last_assessment: bool = False
    assessment_interval: float | None = None
    label: str | None = None
    description: str = ""

    @property
    def effective_endpoint_kinds(self) -> frozenset[str]:
        """Endpoint kinds plus every kind that is Composite under all overrides."""
        comp = {
            k
            for k, r in self.rules.items()
            if all(h.strategy is Strategy.COMPOSITE for h in r.handlings())
        }
        return frozenset(self.endpoint_kinds | comp)

    @property
    def strategies(self) -> dict[str, Strategy]:
        return {k: r.handling.strategy for k, r in self.rules.items()}

    def accepts(self, subject: SubjectTimeline) -> bool:
        return all(c.matches(subject) for c in self.population)

    def to_dict(self):
        variable = {
            "origin": list(self.origin) if self.origin else RANDOMISATION,
            "endpoint_events": sorted(self.endpoint_kinds),
            "censor_at_last_assessment": self.censor_at_last_assessment,
        }
        if self.origin_before:
            variable["origin_before"] = list(self.origin_before)
        if self.assessment_kinds:
            variable["assessment_events"] = sorted(self.assessment_kinds)
        if self.marker_kinds:
            variable["marker_events"] = sorted(self.marker_kinds)
        if self.assessment_interval is not None:
            variable["assessment_interval"] = self.assessment_interval
        if self.label is not None:
            variable["label"] = self.label
        return {
            "name": self.name,
            "description": self.description,
            "population": {c.key: c.to_value() for c in self.population},
            "variable": variable,
            "intercurrent": {k: r.to_dict() for k, r in sorted(self.rules.items())},
            "summary": self.summary.to_dict(),
        }


# --------------------------------------------------------------------------
# parsing


def _require(doc, key, where):
    if key not in doc:
        raise errors.MissingAttribute(f"{where}{key}" if where else key)
    return doc[key]


def _str_list(value, where):
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) and v for v in value):
        raise errors.SpecError(f"{where} must be a string or a list of strings")
    return tuple(value)


def _parse_handling(doc, where):
    if isinstance(doc, str):
        doc = {"strategy": doc}
    if not isinstance(doc, Mapping):
        raise errors.SpecError(f"{where} must be a table")
    strategy = Strategy.parse(_require(doc, "strategy", f"{where}."))
    cause = doc.get("cause")
    if strategy is Strategy.WHILE_ON_TREATMENT:
        if cause is None:
            cause = where.rsplit(".", 1)[-1]
        if not isinstance(cause, str) or not cause:
            raise errors.SpecError(f"{where}.cause must be a non-empty label")
    elif cause is not None:
        raise errors.SpecError(f"{where}.cause is only meaningful for while_on_treatment")
    rule = doc.get("time_rule", TimeRule.AT_EVENT.value)
    try:
        rule = TimeRule(rule)
    except ValueError:
        raise errors.SpecError(f"{where}.time_rule: unknown rule {rule!r}") from None
    return Handling(strategy, cause, rule)


def _parse_rule(kind, doc):
    where = f"intercurrent.{kind}"
    if isinstance(doc, str):
        doc = {"strategy": doc}
    handling = _parse_handling(doc, where)
    overrides = {}
    for arm, sub in (doc.get("arm_override") or {}).items():
        overrides[arm] = _parse_handling(sub, f"{where}.arm_override.{arm}")
    gap = None
    if "gap_override" in doc:
        g = dict(doc["gap_override"])
        min_gap = _require(g, "min_gap_after_last_assessment", f"{where}.gap_override.")
        g.pop("min_gap_after_last_assessment")
        gap = GapOverride(float(min_gap), _parse_handling(g, f"{where}.gap_override"))
    return IntercurrentRule(kind, handling, overrides, gap)


def _parse_population(doc):
    if not isinstance(doc, Mapping):
        raise errors.SpecError("population must be a table of clauses")
    clauses = []
    for key, value in doc.items():
        if isinstance(value, Mapping):
            unknown = set(value) - {"min", "max"}
            if unknown or not value:
                raise errors.SpecError(f"population.{key}: range clauses take 'min' and/or 'max'")
            lo, hi = value.get("min"), value.get("max")
            clauses.append(Clause(key, low=None if lo is None else float(lo), high=None if hi is None else float(hi)))
        elif isinstance(value, (str, int, float, bool)):
            clauses.append(Clause(key, value=value))
        else:
            raise errors.SpecError(f"population.{key}: unsupported clause {value!r}")
    return tuple(clauses)


def _parse_summary(doc):
    if not isinstance(doc, Mapping):
        raise errors.SpecError("summary must be a table")
    measures = _str_list(_require(doc, "measure", "summary."), "summary.measure")
    for m in measures:
        if m not in TEST_MEASURES + EFFECT_MEASURES:
            raise errors.UnknownSummaryMeasure(m)
    gatekeeper = doc.get("gatekeeper")
    if gatekeeper is None:
        gatekeeper = next((m for m in measures if m in TEST_MEASURES), None)
    elif gatekeeper == "none":
        gatekeeper = None
    elif gatekeeper not in TEST_MEASURES:
        raise errors.UnknownSummaryMeasure(gatekeeper)

    stratified = doc.get("stratified", ())
    if not isinstance(stratified, bool):
        stratified = _str_list(stratified, "summary.stratified") if stratified else ()

    kwargs = {}
    for key, needed_by in (("t0", "milestone"), ("q", "quantile_diff"), ("tau", "rmst_diff")):
        if key in doc:
            kwargs[key] = float(doc[key])
        elif needed_by in measures:
            raise errors.MissingAttribute(f"summary.{key}")
    if "q" in kwargs and not 0 < kwargs["q"] < 1:
        raise errors.SpecError("summary.q must lie in (0, 1)")
    scale = doc.get("scale", "difference")
    if scale not in SCALES:
        raise errors.SpecError(f"summary.scale must be one of {SCALES}")
    ties = doc.get("ties", "breslow")
    if ties not in ("breslow", "efron"):
        raise errors.SpecError("summary.ties must be 'breslow' or 'efron'")
    return SummarySpec(
        gatekeeper=gatekeeper,
        measures=measures,
        stratified=stratified,
        scale=scale,
        ties=ties,
        alpha=float(doc.get("alpha", 0.05)),
        level=float(doc.get("level", 0.95)),
        permutations=int(doc.get("permutations", 10000)),
        bootstrap=int(doc.get("bootstrap", 1000)),
        **kwargs,
    )


def parse_spec_dict(doc: Mapping) -> EstimandSpec:
    """Build a validated spec from an already-decoded config document."""
    name = _require(doc, "name", "")
    for section in ("population", "variable", "intercurrent", "summary"):
        _require(doc, section, "")
    variable = doc["variable"]
    origin = variable.get("origin", RANDOMISATION)
    origin = () if origin == RANDOMISATION else _str_list(origin, "variable.origin")
    endpoint = _require(variable, "endpoint_events", "variable.")
    endpoint = frozenset(_str_list(endpoint, "variable.endpoint_events") if endpoint else ())

    rules = {kind: _parse_rule(kind, sub) for kind, sub in doc["intercurrent"].items()}
    overlap = sorted(endpoint & set(rules))
    if overlap:
        raise errors.OverlapEndpointIntercurrent(overlap[0])

    assessment = frozenset(_str_list(variable.get("assessment_events", ()), "variable.assessment_events")
                           if variable.get("assessment_events") else ())
    markers = frozenset(_str_list(variable.get("marker_events", ()), "variable.marker_events")
                        if variable.get("marker_events") else ())
    clash = sorted((assessment | markers) & (endpoint | set(rules)))
    if clash:
        raise errors.SpecError(f"event kind {clash[0]!r} is declared both informational and analysed")

    interval = variable.get("assessment_interval")
    spec = EstimandSpec(
        name=str(name),
        description=str(doc.get("description", "")),
        population=_parse_population(doc["population"]),
        origin=origin,
        origin_before=_str_list(variable["origin_before"], "variable.origin_before")
        if variable.get("origin_before") else (),
        endpoint_kinds=endpoint,
        assessment_kinds=assessment,
        marker_kinds=markers,
        censor_at_last_assessment=bool(variable.get("censor_at_last_assessment", False)),
        assessment_interval=None if interval is None else float(interval),
        label=variable.get("label"),
        rules=rules,
        summary=_parse_summary(doc["summary"]),
    )
    if not endpoint and not any(h.strategy is Strategy.COMPOSITE for r in rules.values() for h in r.handlings()):
        raise errors.MissingAttribute("variable.endpoint_events (no endpoint-defining event kind)")
    uses_next = any(h.time_rule is TimeRule.NEXT_ASSESSMENT for r in rules.values() for h in r.handlings())
    if uses_next and spec.assessment_interval is None:
        raise errors.MissingAttribute("variable.assessment_interval (required by next_assessment)")
    return spec


def parse_spec(text: str) -> EstimandSpec:
    """Parse a TOML estimand document."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise errors.ParseError(str(exc)) from None
    return parse_spec_dict(doc)


# --------------------------------------------------------------------------
# compilation


@dataclass(frozen=True)
class LogEntry:
    """One derivation decision.

    ``event_time`` and ``derived_time`` are measured from the spec's origin.
    Terminal entries (action ``event``, ``censor`` or ``competing``) carry the
    derived time; there is exactly one of them per observation.
    """

    event_time: float
    kind: str
    strategy: str
    action: str
    derived_time: float | None = None
    cause: str | None = None
    note: str | None = None

    def __str__(self):
        txt = f"{self.kind}@{self.event_time:g}:{self.strategy}:{self.action}"
        if self.derived_time is not None and self.derived_time != self.event_time:
            txt += f"->{self.derived_time:g}"
        if self.cause is not None:
            txt += f"[{self.cause}]"
        return txt


TERMINAL_ACTIONS = {"event": EVENT, "censor": CENSORED, "competing": COMPETING}
_PRECEDENCE = {EVENT: 0, COMPETING: 1, CENSORED: 2}


@dataclass(frozen=True)
class DerivedObservation:
    subject_id: str
    time: float
    status: str
    arm: str
    strata: Mapping[str, str] = field(default_factory=dict)
    cause: str | None = None
    derivation_log: tuple[LogEntry, ...] = ()

    @property
    def is_event(self):
        return self.status == EVENT


@dataclass(frozen=True)
class Excluded:
    subject_id: str
    reason: str


def replay_log(log) -> tuple[float, str, str | None]:
    """Recover ``(time, status, cause)`` from a derivation log."""
    terminal = [e for e in log if e.action in TERMINAL_ACTIONS]
    if len(terminal) != 1:
        raise errors.ValidationError(f"derivation log has {len(terminal)} terminal entries")
    e = terminal[0]
    return e.derived_time, TERMINAL_ACTIONS[e.action], e.cause


def _reject_principal_stratum(spec):
    for kind, rule in spec.rules.items():
        if any(h.strategy is Strategy.PRINCIPAL_STRATUM for h in rule.handlings()):
            raise errors.PrincipalStratumUnsupported(
                f"spec {spec.name!r}: principal-stratum handling of {kind!r} cannot be derived; "
                "stratum membership must be modelled from covariates"
            )


def _find_origin(spec, subject):
    if not spec.origin:
        return 0.0, None
    stop = math.inf
    for ev in subject.events:
        if ev.kind in spec.origin_before:
            stop = ev.time
            break
    for i, ev in enumerate(subject.events):
        if ev.kind in spec.origin and ev.time < stop:
            return ev.time, i
    raise errors.OriginEventMissing(
        f"subject {subject.subject_id}: no {'/'.join(spec.origin)} event"
        + (f" before {'/'.join(spec.origin_before)}" if spec.origin_before else "")
    )


def _rule_time(handling, t, last_assessment, interval, local_horizon):
    rule = handling.time_rule
    if rule is TimeRule.AT_EVENT:
        out = t
    elif rule is TimeRule.LAST_ASSESSMENT:
        out = last_assessment
    elif rule is TimeRule.DAY_AFTER_LAST_ASSESSMENT:
        out = last_assessment + DAY_ONE
    else:
        k = max(1, math.ceil((t - last_assessment) / interval))
        out = last_assessment + k * interval
    return min(out, local_horizon)


def compile_subject(spec: EstimandSpec, subject: SubjectTimeline, horizon: float | None = None):
    """Derive one analysis observation for ``subject`` under ``spec``.

    ``horizon`` defaults to the one attached by :func:`apply_clinical_cutoff`.
    Returns :class:`Excluded` when the subject fails the population filter.
    """
    if horizon is None:
        horizon = subject.horizon
    if horizon is None or not horizon > 0:
        raise errors.ValidationError(
            f"subject {subject.subject_id}: a positive administrative horizon is required, got {horizon!r}"
        )
    _reject_principal_stratum(spec)
    if not spec.accepts(subject):
        return Excluded(subject.subject_id, "population")

    origin_time, origin_idx = _find_origin(spec, subject)
    local_h = horizon - origin_time
    if not local_h > 0:
        raise errors.OriginEventMissing(
            f"subject {subject.subject_id}: origin at {origin_time} leaves no follow-up before the cutoff"
        )

    informational = spec.assessment_kinds | spec.marker_kinds | set(spec.origin)
    log: list[LogEntry] = []
    last_assessment = 0.0
    assessed = False
    events = [
        e for i, e in enumerate(subject.events)
        if (e.time > origin_time if origin_idx is not None else e.time >= origin_time) and i != origin_idx
    ]

    def finish(entry, status):
        if not entry.derived_time > 0:
            entry = replace(entry, derived_time=min(DAY_ONE, local_h), note="floored to day one")
        log.append(entry)
        return DerivedObservation(
            subject.subject_id, float(entry.derived_time), status, subject.arm,
            dict(subject.strata), entry.cause, tuple(log),
        )

    i = 0
    while i < len(events):
        t_abs = events[i].time
        j = i
        while j < len(events) and events[j].time == t_abs:
            j += 1
        group = events[i:j]
        t = t_abs - origin_time
        for ev in group:
            if ev.kind in spec.assessment_kinds:
                last_assessment = t
                assessed = True
        candidates = []
        for ev in group:
            kind = ev.kind
            if kind in spec.endpoint_kinds:
                candidates.append((EVENT, LogEntry(t, kind, "endpoint", "event", t)))
            elif kind in spec.rules:
                h = spec.rules[kind].resolve(subject.arm, t - last_assessment)
                s = h.strategy
                if s is Strategy.TREATMENT_POLICY:
                    log.append(LogEntry(t, kind, s.value, "skip"))
                    continue
                when = _rule_time(h, t, last_assessment, spec.assessment_interval, local_h)
                if s is Strategy.COMPOSITE:
                    candidates.append((EVENT, LogEntry(t, kind, s.value, "event", when)))
                elif s is Strategy.HYPOTHETICAL:
                    candidates.append((CENSORED, LogEntry(t, kind, s.value, "censor", when)))
                else:
                    candidates.append((COMPETING, LogEntry(t, kind, s.value, "competing", when, h.cause)))
            elif kind in informational:
                continue
            else:
                raise errors.UndeclaredEventKind(
                    f"subject {subject.subject_id}: event kind {kind!r} at {ev.time} is not declared "
                    f"in spec {spec.name!r}"
                )
        if candidates:
            order = sorted(range(len(candidates)), key=lambda k: _PRECEDENCE[candidates[k][0]])
            winner = order[0]
            for k in order[1:]:
                e = candidates[k][1]
                log.append(LogEntry(e.event_time, e.kind, e.strategy, "outranked"))
            status, entry = candidates[winner]
            return finish(entry, status)
        i = j

    end = last_assessment if spec.censor_at_last_assessment and assessed else local_h
    return finish(LogEntry(local_h, "cutoff", "administrative", "censor", end), CENSORED)


@dataclass(frozen=True)
class DerivedDataset:
    spec_name: str
    observations: tuple[DerivedObservation, ...]
    n_excluded_by_population: int = 0
    exclusion_reasons: Mapping[str, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.observations)

    @property
    def time(self):
        return np.array([o.time for o in self.observations], dtype=float)

    @property
    def event(self):
        return np.array([o.status == EVENT for o in self.observations], dtype=bool)

    @property
    def treatment(self):
        """1 for experimental, 0 for control."""
        out = np.empty(len(self.observations), dtype=np.int8)
        for i, o in enumerate(self.observations):
            if o.arm not in ARMS:
                raise errors.UnknownArm(f"subject {o.subject_id}: arm {o.arm!r} is not one of {ARMS}")
            out[i] = o.arm == EXPERIMENTAL
        return out

    def causes(self, event_label="endpoint"):
        """Per-observation cause labels for competing-risks analysis (None = censored)."""
        return [event_label if o.status == EVENT else o.cause for o in self.observations]

    def strata_labels(self, factors):
        """Stratum label per observation. ``True`` means every factor present."""
        if factors is True:
            factors = sorted({k for o in self.observations for k in o.strata})
        if not factors:
            return None
        labels = []
        for o in self.observations:
            missing = [f for f in factors if f not in o.strata]
            if missing:
                raise errors.ValidationError(f"subject {o.subject_id}: missing stratification factor(s) {missing}")
            labels.append("|".join(f"{f}={o.strata[f]}" for f in factors))
        return labels

    def status_counts(self):
        c = Counter(o.status if o.status != COMPETING else f"competing:{o.cause}" for o in self.observations)
        return dict(sorted(c.items()))


def _derive_one(spec, subject, cutoff):
    s = apply_clinical_cutoff(subject, cutoff)
    if not s.horizon > 0:
        return Excluded(s.subject_id, "no follow-up before cutoff")
    try:
        return compile_subject(spec, s)
    except errors.OriginEventMissing:
        return Excluded(s.subject_id, "origin event missing")


def derive_dataset(spec: EstimandSpec, cohort: Cohort, cutoff: float | None = None, threads: int = 1) -> DerivedDataset:
    """Compile every subject of ``cohort``; excluded subjects are counted.

    ``cutoff`` overrides the cohort's clinical cutoff. The result does not
    depend on ``threads``.
    """
    _reject_principal_stratum(spec)
    cutoff = cohort.cutoff_calendar_time if cutoff is None else cutoff
    subjects = list(cohort.subjects)
    if threads > 1 and len(subjects) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda s: _derive_one(spec, s, cutoff), subjects))
    else:
        results = [_derive_one(spec, s, cutoff) for s in subjects]
    obs = tuple(r for r in results if isinstance(r, DerivedObservation))
    reasons = Counter(r.reason for r in results if isinstance(r, Excluded))
    return DerivedDataset(spec.name, obs, sum(reasons.values()), dict(sorted(reasons.items())))


# --------------------------------------------------------------------------
# presets


def _preset_files():
    root = resources.files(__package__) / "presets"
    return sorted((p for p in root.iterdir() if p.name.endswith(".toml")), key=lambda p: _preset_key(p.name))


def _preset_key(filename):
    stem = filename[:-5]
    head, _, tail = stem.rpartition("_")
    return (head, int(tail)) if tail.isdigit() else (stem, -1)


def preset_names() -> list[str]:
    return [p.name[:-5] for p in _preset_files()]


def preset_text(name: str) -> str:
    root = resources.files(__package__) / "presets"
    path = root / f"{name}.toml"
    if not path.is_file():
        raise errors.UnknownPreset(f"no built-in spec named {name!r}; known: {', '.join(preset_names())}")
    return path.read_text(encoding="utf-8")


def get_preset(name: str) -> EstimandSpec:
    return parse_spec(preset_text(name))


def builtin_specs() -> dict[str, EstimandSpec]:
    return {name: get_preset(name) for name in preset_names()}
