"""Cohort and derived-dataset CSV files, and deterministic JSON reports.

Subjects file columns: ``subject_id``, ``arm``, optional
``entry_calendar_time`` and ``cutoff_calendar_time`` (constant across rows),
``stratum.<name>`` and ``cov.<name>``. Events file columns: ``subject_id``,
``kind``, ``time``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import errors
from .events import ClinicalEvent, Cohort, SubjectTimeline, validate_timeline
from .spec import DerivedDataset, DerivedObservation, LogEntry, replay_log

FLOAT_DIGITS = 15


def _read_rows(path, required):
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise errors.InputOutputError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise errors.ParseError(f"missing column(s) {missing}", line=1, path=path)
        rows = []
        for row in reader:
            if None in row or any(v is None for v in row.values()):
                raise errors.ParseError("wrong number of fields", line=reader.line_num, path=path)
            rows.append((reader.line_num, {k: v.strip() for k, v in row.items()}))
    return header, rows


def _number(text, what, line, path):
    try:
        x = float(text)
    except ValueError:
        raise errors.ParseError(f"{what}: {text!r} is not a number", line=line, path=path) from None
    if not math.isfinite(x):
        raise errors.ParseError(f"{what}: {text!r} is not finite", line=line, path=path)
    return x


def load_cohort(subjects_file, events_file, cutoff: float | None = None) -> Cohort:
    """Read, join and validate a cohort; ``cutoff`` overrides the file's cutoff."""
    header, rows = _read_rows(subjects_file, ("subject_id", "arm"))
    strata_cols = [c for c in header if c.startswith("stratum.")]
    cov_cols = [c for c in header if c.startswith("cov.")]
    subjects = {}
    file_cutoffs = set()
    for line, row in rows:
        sid = row["subject_id"]
        if not sid:
            raise errors.ParseError("empty subject_id", line=line, path=subjects_file)
        if sid in subjects:
            raise errors.DuplicateSubject(f"duplicate subject_id {sid!r} ({subjects_file}:{line})")
        entry = row.get("entry_calendar_time") or "0"
        if row.get("cutoff_calendar_time"):
            file_cutoffs.add(_number(row["cutoff_calendar_time"], "cutoff_calendar_time", line, subjects_file))
        covs = {}
        for c in cov_cols:
            if row[c] != "":
                covs[c[4:]] = _number(row[c], c, line, subjects_file)
        subjects[sid] = dict(
            subject_id=sid,
            arm=row["arm"],
            entry_calendar_time=_number(entry, "entry_calendar_time", line, subjects_file),
            strata={c[8:]: row[c] for c in strata_cols if row[c] != ""},
            covariates=covs,
        )
    if len(file_cutoffs) > 1:
        raise errors.ValidationError(f"{subjects_file}: cutoff_calendar_time differs between rows")
    if cutoff is None:
        if not file_cutoffs:
            raise errors.MissingAttribute("cutoff_calendar_time (not in the subjects file and not given)")
        cutoff = file_cutoffs.pop()

    _, ev_rows = _read_rows(events_file, ("subject_id", "kind", "time"))
    events = defaultdict(list)
    for line, row in ev_rows:
        sid = row["subject_id"]
        if sid not in subjects:
            raise errors.UnknownSubjectInEvents(f"{events_file}:{line}: subject {sid!r} is not in the subjects file")
        if not row["kind"]:
            raise errors.ParseError("empty event kind", line=line, path=events_file)
        events[sid].append(ClinicalEvent(row["kind"], _number(row["time"], "time", line, events_file)))
    timelines = [
        validate_timeline(SubjectTimeline(events=tuple(events[sid]), **fields)) for sid, fields in subjects.items()
    ]
    return Cohort(tuple(timelines), float(cutoff))


def _fmt(x):
    return repr(float(x))


def write_cohort(cohort: Cohort, subjects_file, events_file) -> None:
    strata = sorted({k for s in cohort for k in s.strata})
    covs = sorted({k for s in cohort for k in s.covariates})
    with open(subjects_file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "arm", "entry_calendar_time", "cutoff_calendar_time"]
                   + [f"stratum.{k}" for k in strata] + [f"cov.{k}" for k in covs])
        for s in cohort:
            w.writerow([s.subject_id, s.arm, _fmt(s.entry_calendar_time), _fmt(cohort.cutoff_calendar_time)]
                       + [s.strata.get(k, "") for k in strata]
                       + [_fmt(s.covariates[k]) if k in s.covariates else "" for k in covs])
    with open(events_file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "kind", "time"])
        for s in cohort:
            for e in s.events:
                w.writerow([s.subject_id, e.kind, _fmt(e.time)])


def _log_to_json(log):
    return json.dumps([
        {k: v for k, v in (("t", e.event_time), ("kind", e.kind), ("strategy", e.strategy), ("action", e.action),
                           ("derived", e.derived_time), ("cause", e.cause), ("note", e.note)) if v is not None}
        for e in log
    ], sort_keys=True)


def _log_from_json(text):
    return tuple(
        LogEntry(d["t"], d["kind"], d["strategy"], d["action"], d.get("derived"), d.get("cause"), d.get("note"))
        for d in json.loads(text)
    )


def write_derived(dataset: DerivedDataset, path) -> None:
    """One row per observation, with its derivation log as a JSON list.

    ``path`` may also be an open text stream.
    """
    if hasattr(path, "write"):
        _write_derived_rows(dataset, path)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_derived_rows(dataset, fh)


def _write_derived_rows(dataset, fh):
    strata = sorted({k for o in dataset.observations for k in o.strata})
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["subject_id", "arm", "time", "status", "cause"] + [f"stratum.{k}" for k in strata]
               + ["derivation_log", "derivation_summary"])
    for o in dataset.observations:
        w.writerow([o.subject_id, o.arm, _fmt(o.time), o.status, o.cause or ""]
                   + [o.strata.get(k, "") for k in strata]
                   + [_log_to_json(o.derivation_log), "; ".join(str(e) for e in o.derivation_log)])


def read_derived(path, spec_name: str = "derived") -> DerivedDataset:
    """Re-ingest a file written by :func:`write_derived`.

    Each row's time and status are checked against its derivation log.
    """
    header, rows = _read_rows(path, ("subject_id", "arm", "time", "status"))
    strata_cols = [c for c in header if c.startswith("stratum.")]
    obs = []
    for line, row in rows:
        log = ()
        if row.get("derivation_log"):
            try:
                log = _log_from_json(row["derivation_log"])
            except (ValueError, KeyError, TypeError):
                raise errors.ParseError("unreadable derivation_log", line=line, path=path) from None
        time = _number(row["time"], "time", line, path)
        if log:
            t, status, _ = replay_log(log)
            if t != time or status != row["status"]:
                raise errors.ValidationError(f"{path}:{line}: row disagrees with its derivation log")
        obs.append(DerivedObservation(row["subject_id"], time, row["status"], row["arm"],
                                      {c[8:]: row[c] for c in strata_cols if row[c] != ""},
                                      row.get("cause") or None, log))
    return DerivedDataset(spec_name, tuple(obs))


def _clean(obj):
    if isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        return bool(obj) if isinstance(obj, np.bool_) else obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.{FLOAT_DIGITS}g}")
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return _clean(obj.to_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_report(obj) -> str:
    """JSON with sorted keys and floats rounded to 15 significant digits.

    NaN becomes ``null`` and infinities the strings ``"inf"`` / ``"-inf"``.
    """
    return json.dumps(_clean(obj), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_report(obj, path) -> None:
    try:
        Path(path).write_text(dumps_report(obj), encoding="utf-8")
    except OSError as exc:
        raise errors.InputOutputError(f"cannot write {path}: {exc.strerror}") from None


def file_digest(path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise errors.InputOutputError(f"cannot read {path}: {exc.strerror}") from None
