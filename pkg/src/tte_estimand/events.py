"""Subject timelines of typed clinical events and administrative cutoffs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

from . import errors

# Canonical event kinds. The vocabulary is open: any non-empty identifier is a
# legal kind here, and specs decide what each kind means.
PD = "PD"
DEATH = "death"
NALT = "NALT"
DROPOUT = "dropout"
WITHDRAWAL = "withdrawal"
RESPONSE_ASSESSMENT = "response_assessment"
CR = "CR"
PR = "PR"
TREATMENT_DISCONTINUATION = "treatment_discontinuation"
FAILURE_TO_RESPOND = "failure_to_respond"
MISSED_ASSESSMENT = "missed_assessment"

CONTROL = "control"
EXPERIMENTAL = "experimental"
ARMS = (CONTROL, EXPERIMENTAL)


@dataclass(frozen=True)
class ClinicalEvent:
    kind: str
    time: float


@dataclass(frozen=True)
class SubjectTimeline:
    """One randomised subject.

    ``time`` of each event is measured in days from the subject's own time
    origin (randomisation). ``horizon`` is ``None`` until a clinical cutoff
    has been applied.
    """

    subject_id: str
    arm: str
    events: tuple[ClinicalEvent, ...] = ()
    strata: Mapping[str, str] = field(default_factory=dict)
    entry_calendar_time: float = 0.0
    covariates: Mapping[str, float] = field(default_factory=dict)
    horizon: float | None = None

    def kinds(self):
        return [e.kind for e in self.events]


@dataclass(frozen=True)
class Cohort:
    subjects: tuple[SubjectTimeline, ...]
    cutoff_calendar_time: float

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        seen = set()
        for s in self.subjects:
            if s.subject_id in seen:
                raise errors.DuplicateSubject(f"duplicate subject_id {s.subject_id!r}")
            seen.add(s.subject_id)
        c = self.cutoff_calendar_time
        if not (isinstance(c, (int, float)) and math.isfinite(c) and c > 0):
            raise errors.CutoffBeforeEntry(f"cutoff_calendar_time must be positive, got {c!r}")
        if self.subjects:
            first_entry = min(s.entry_calendar_time for s in self.subjects)
            if not c > first_entry:
                raise errors.CutoffBeforeEntry(
                    f"cutoff {c} is not after the earliest entry time {first_entry}"
                )

    def __len__(self):
        return len(self.subjects)

    def __iter__(self):
        return iter(self.subjects)


def _check_time(value, subject_id, what):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise errors.NegativeTime(f"subject {subject_id}: {what} must be a finite number, got {value!r}")
    if value < 0:
        raise errors.NegativeTime(f"subject {subject_id}: {what} is negative ({value})")


def validate_timeline(subject: SubjectTimeline) -> SubjectTimeline:
    """Check the timeline invariants and return it with events sorted.

    Sorting is stable, so events sharing a time keep their input order.
    """
    sid = subject.subject_id
    if not isinstance(sid, str) or not sid:
        raise errors.InvalidEvent(f"subject_id must be a non-empty string, got {sid!r}")
    if not isinstance(subject.arm, str) or not subject.arm.strip():
        raise errors.EmptyArmLabel(f"subject {sid}: empty arm label")
    _check_time(subject.entry_calendar_time, sid, "entry_calendar_time")
    for ev in subject.events:
        if not isinstance(ev.kind, str) or not ev.kind.strip():
            raise errors.InvalidEvent(f"subject {sid}: event kind must be a non-empty identifier")
        _check_time(ev.time, sid, f"time of event {ev.kind!r}")

    events = tuple(sorted(subject.events, key=lambda e: e.time))
    deaths = [e for e in events if e.kind == DEATH]
    if len(deaths) > 1:
        raise errors.DuplicateDeath(
            f"subject {sid}: {len(deaths)} death events (at {[d.time for d in deaths]})"
        )
    if deaths:
        t_death = deaths[0].time
        for ev in events:
            if ev.time > t_death:
                raise errors.EventAfterDeath(
                    f"subject {sid}: event {ev.kind!r} at {ev.time} after death at {t_death}"
                )
    if events == subject.events:
        return subject
    return replace(subject, events=events)


def apply_clinical_cutoff(subject: SubjectTimeline, cutoff_calendar_time: float) -> SubjectTimeline:
    """Drop events after the cutoff and attach the administrative horizon.

    The horizon is ``cutoff - entry``, expressed on the subject's own clock.
    Events exactly at the horizon are kept.
    """
    if cutoff_calendar_time < subject.entry_calendar_time:
        raise errors.CutoffBeforeEntry(
            f"subject {subject.subject_id}: cutoff {cutoff_calendar_time} precedes "
            f"entry {subject.entry_calendar_time}"
        )
    horizon = cutoff_calendar_time - subject.entry_calendar_time
    kept = tuple(e for e in subject.events if e.time <= horizon)
    return replace(subject, events=kept, horizon=horizon)


def swap_arms(subject: SubjectTimeline) -> SubjectTimeline:
    """Relabel control <-> experimental (other labels untouched)."""
    other = {CONTROL: EXPERIMENTAL, EXPERIMENTAL: CONTROL}
    return replace(subject, arm=other.get(subject.arm, subject.arm))
