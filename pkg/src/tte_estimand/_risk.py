"""Two-arm risk-set tables shared by the logrank test and the Cox fitters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import errors


@dataclass(frozen=True)
class RiskTable:
    """At-risk and event counts per arm at each distinct event time.

    Rows are grouped by stratum and sorted by time within each stratum.
    Censorings tied with an event time are still at risk at that time.
    """

    time: np.ndarray
    stratum: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    strata: tuple

    @property
    def y(self):
        return self.y0 + self.y1

    @property
    def d(self):
        return self.d0 + self.d1

    @property
    def has_tied_events(self):
        return bool(np.any(self.d > 1))


def as_arrays(time, event, arm):
    t = np.asarray(time, dtype=float)
    e = np.asarray(event, dtype=bool)
    z = np.asarray(arm, dtype=float)
    if not (t.shape == e.shape == z.shape and t.ndim == 1):
        raise errors.ValidationError("time, event and arm must be 1-d arrays of equal length")
    if t.size == 0:
        raise errors.EmptyData("no observations")
    if not np.all(np.isfinite(t)) or np.any(t <= 0):
        raise errors.NonPositiveTime("all times must be finite and > 0")
    if not np.all((z == 0) | (z == 1)):
        raise errors.ValidationError("arm must be coded 0 (control) / 1 (experimental)")
    return t, e, z


def _one_stratum(t, e, z):
    order = np.argsort(t, kind="stable")
    ts, es, zs = t[order], e[order], z[order]
    ev_times = np.unique(ts[es])
    idx = np.searchsorted(ts, ev_times, side="left")
    cz = np.concatenate(([0.0], np.cumsum(zs)))
    y = (ts.size - idx).astype(float)
    y1 = cz[-1] - cz[idx]
    pos = np.searchsorted(ev_times, ts[es])
    d = np.bincount(pos, minlength=ev_times.size).astype(float)
    d1 = np.bincount(pos, weights=zs[es], minlength=ev_times.size)
    return ev_times, y - y1, y1, d - d1, d1


def risk_table(time, event, arm, strata=None) -> RiskTable:
    t, e, z = as_arrays(time, event, arm)
    if strata is None:
        labels, inverse = ("all",), np.zeros(t.size, dtype=int)
    else:
        s = np.asarray(strata, dtype=object).astype(str)
        if s.shape != t.shape:
            raise errors.ValidationError("strata must have one label per observation")
        labels, inverse = np.unique(s, return_inverse=True)
        labels = tuple(labels.tolist())
    parts = []
    for k in range(len(labels)):
        m = inverse == k
        tt, y0, y1, d0, d1 = _one_stratum(t[m], e[m], z[m])
        parts.append((tt, np.full(tt.size, k), y0, y1, d0, d1))
    cols = [np.concatenate([p[i] for p in parts]) for i in range(6)]
    return RiskTable(cols[0], cols[1], cols[2], cols[3], cols[4], cols[5], labels)
