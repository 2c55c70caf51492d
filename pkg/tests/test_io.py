import json
import math

import numpy as np
import pytest

from tte_estimand import errors
from tte_estimand.hypothesis_tests import logrank
from tte_estimand.io import dumps_report, load_cohort, read_derived, write_cohort, write_derived
from tte_estimand.regression import cox_fit
from tte_estimand.spec import derive_dataset, get_preset

from conftest import gallium_like_cohort


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_two_subject_load(tmp_path):
    subj = write(tmp_path / "s.csv", "subject_id,arm,stratum.site\nA,control,x\nB,experimental,y\n")
    ev = write(tmp_path / "e.csv", "subject_id,kind,time\nA,PD,10\nB,death,5\nB,PD,3\n")
    cohort = load_cohort(subj, ev, cutoff=100)
    a, b = cohort.subjects
    assert a.strata == {"site": "x"} and [e.kind for e in a.events] == ["PD"]
    assert [(e.kind, e.time) for e in b.events] == [("PD", 3.0), ("death", 5.0)]
    assert cohort.cutoff_calendar_time == 100.0


def test_load_errors(tmp_path):
    subj = write(tmp_path / "s.csv", "subject_id,arm\nA,control\n")
    with pytest.raises(errors.UnknownSubjectInEvents):
        load_cohort(subj, write(tmp_path / "e1.csv", "subject_id,kind,time\nZ,PD,1\n"), 10)
    with pytest.raises(errors.ParseError) as exc:
        load_cohort(subj, write(tmp_path / "e2.csv", "subject_id,kind,time\nA,PD,1\nA,PD,abc\n"), 10)
    assert exc.value.line == 3
    assert exc.value.to_dict()["line"] == 3
    with pytest.raises(errors.MissingAttribute):
        load_cohort(subj, write(tmp_path / "e3.csv", "subject_id,kind,time\n"))
    with pytest.raises(errors.DuplicateSubject):
        load_cohort(write(tmp_path / "d.csv", "subject_id,arm\nA,control\nA,control\n"), tmp_path / "e3.csv", 10)
    with pytest.raises(errors.InputOutputError):
        load_cohort(tmp_path / "missing.csv", tmp_path / "e3.csv", 10)


def test_cohort_round_trip(tmp_path):
    cohort = gallium_like_cohort(n=40)
    write_cohort(cohort, tmp_path / "s.csv", tmp_path / "e.csv")
    assert load_cohort(tmp_path / "s.csv", tmp_path / "e.csv") == cohort


def test_derived_round_trip_gives_same_statistics(tmp_path):
    data = derive_dataset(get_preset("gallium_primary"), gallium_like_cohort())
    write_derived(data, tmp_path / "d.csv")
    back = read_derived(tmp_path / "d.csv", data.spec_name)
    assert back.observations == data.observations
    strata = data.strata_labels(("chemotherapy", "FLIPI1"))
    a = logrank(data.time, data.event, data.treatment, strata)
    b = logrank(back.time, back.event, back.treatment, back.strata_labels(("chemotherapy", "FLIPI1")))
    assert a == b
    assert cox_fit(data.time, data.event, data.treatment) == cox_fit(back.time, back.event, back.treatment)


def test_tampered_derived_row_rejected(tmp_path):
    data = derive_dataset(get_preset("gallium_primary"), gallium_like_cohort(n=10))
    write_derived(data, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    cells = lines[1].split(",")
    cells[2] = "12345.0"
    lines[1] = ",".join(cells)
    write(tmp_path / "bad.csv", "\n".join(lines) + "\n")
    with pytest.raises(errors.ValidationError):
        read_derived(tmp_path / "bad.csv")


def test_report_serialization():
    obj = {"b": np.float64(1 / 3), "a": [math.nan, math.inf, -math.inf], "c": np.int64(4), "d": np.bool_(True)}
    text = dumps_report(obj)
    assert text == dumps_report(dict(reversed(list(obj.items()))))
    back = json.loads(text)
    assert back == {"a": [None, "inf", "-inf"], "b": 0.333333333333333, "c": 4, "d": True}
    assert list(back) == ["a", "b", "c", "d"]
