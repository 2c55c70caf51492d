"""Competing risks: Aalen-Johansen cumulative incidence and the naive-KM comparison.

Outcomes are given as a time array plus one cause label per observation,
with ``None`` marking a censored observation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import errors
from .survival import kaplan_meier


@dataclass(frozen=True)
class IncidenceCurve:
    cause_label: str
    times: np.ndarray
    cif: np.ndarray
    variance: np.ndarray
    overall_survival: np.ndarray

    def __call__(self, t):
        idx = np.searchsorted(self.times, t, side="right")
        return np.concatenate(([0.0], self.cif))[idx]

    def to_dict(self):
        return {
            "cause": self.cause_label,
            "time": self.times.tolist(),
            "cif": self.cif.tolist(),
            "variance": self.variance.tolist(),
        }


def _prepare(time, cause):
    t = np.asarray(time, dtype=float)
    labels = list(cause)
    if t.ndim != 1 or t.size != len(labels):
        raise errors.ValidationError("time and cause must have equal length")
    if t.size == 0:
        raise errors.EmptyData("no observations")
    if not np.all(np.isfinite(t)) or np.any(t <= 0):
        raise errors.NonPositiveTime("all times must be finite and > 0")
    return t, labels


def observed_causes(cause) -> list[str]:
    return sorted({c for c in cause if c is not None})


def _aalen_variance(cif, s_minus, y, d, dk):
    """Aalen-type (counting-process) variance of one cumulative incidence curve."""
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where((y > 1) & (y > d), d / ((y - 1) * (y - d)), 0.0)
        b = np.where(y > 1, s_minus**2 * dk * (y - dk) / (y**2 * (y - 1)), 0.0)
        c = np.where((y > 1) & (y > d), s_minus * dk * (y - dk) / (y * (y - d) * (y - 1)), 0.0)
    # sum_j<=i (F_i - F_j)^2 a_j expanded into running sums
    f = cif
    sq = f**2 * np.cumsum(a) - 2 * f * np.cumsum(f * a) + np.cumsum(f**2 * a)
    cross = f * np.cumsum(c) - np.cumsum(f * c)
    return np.maximum(sq + np.cumsum(b) - 2 * cross, 0.0)


def aalen_johansen(time, cause, causes=None) -> dict[str, IncidenceCurve]:
    """Cumulative incidence per cause on the grid of all distinct event times.

    ``CIF_k(t) = sum_{s <= t} S(s-) d_k(s) / Y(s)`` with ``S`` the all-cause
    Kaplan-Meier estimate. With a single cause the curve is ``1 - S`` itself.
    ``causes`` declares labels that may have no observed events (their CIF is
    identically zero).
    """
    t, labels = _prepare(time, cause)
    names = observed_causes(labels)
    if causes is not None:
        names = sorted(set(names) | set(causes))
    is_event = np.array([c is not None for c in labels])
    km = kaplan_meier(t, is_event)
    grid, y, d, s = km.times, km.at_risk, km.n_events, km.estimates
    s_minus = np.concatenate(([1.0], s[:-1]))
    n_observed = len(observed_causes(labels))
    out = {}
    for k in names:
        mask = np.array([c == k for c in labels])
        dk = np.zeros(grid.size)
        if mask.any():
            pos = np.searchsorted(grid, t[mask])
            dk = np.bincount(pos, minlength=grid.size).astype(float)
        if n_observed == 1 and mask.any():
            cif = 1.0 - s
        else:
            cif = np.cumsum(s_minus * dk / y)
        var = _aalen_variance(cif, s_minus, y, d, dk)
        out[k] = IncidenceCurve(k, grid, cif, var, s)
    return out


def cause_specific_dataset(time, cause, cause_label, causes=None):
    """Recode to ``(time, is_event)`` for cause-specific hazard analysis."""
    t, labels = _prepare(time, cause)
    known = set(observed_causes(labels)) | set(causes or ())
    if cause_label not in known:
        raise errors.UnknownCause(f"cause {cause_label!r} not among {sorted(known)}")
    return t, np.array([c == cause_label for c in labels], dtype=bool)


@dataclass(frozen=True)
class NaiveComparison:
    cause_label: str
    times: np.ndarray
    one_minus_km: np.ndarray
    cif: np.ndarray

    @property
    def gap(self):
        return self.one_minus_km - self.cif

    @property
    def max_gap(self):
        return float(self.gap.max()) if self.gap.size else 0.0

    def to_dict(self):
        return {
            "cause": self.cause_label,
            "time": self.times.tolist(),
            "one_minus_km": self.one_minus_km.tolist(),
            "cif": self.cif.tolist(),
            "max_gap": self.max_gap,
        }


def naive_km_comparison(time, cause) -> dict[str, NaiveComparison]:
    """Contrast 1 - KM (other causes treated as censoring) with the CIF.

    The naive curve overstates the probability of each cause once a
    competing event has removed subjects from the risk set.
    """
    t, labels = _prepare(time, cause)
    names = observed_causes(labels)
    if len(names) < 2:
        raise errors.SingleCauseOnly(f"need at least two causes, observed {names}")
    cifs = aalen_johansen(t, labels)
    out = {}
    for k in names:
        _, ev = cause_specific_dataset(t, labels, k)
        naive = kaplan_meier(t, ev)
        # 1 - KM written as sum S(s-) d / Y, the same form as the CIF, so the
        # two agree to the last bit until the first competing event
        s_minus = np.concatenate(([1.0], naive.estimates[:-1]))
        jumps = np.concatenate(([0.0], np.cumsum(s_minus * naive.n_events / naive.at_risk)))
        grid = cifs[k].times
        one_minus_km = jumps[np.searchsorted(naive.times, grid, side="right")]
        out[k] = NaiveComparison(k, grid, one_minus_km, cifs[k](grid))
    return out
