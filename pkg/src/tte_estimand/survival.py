"""One-sample nonparametric survival estimation and two-arm contrasts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import errors


@dataclass(frozen=True)
class EffectEstimate:
    value: float
    ci_low: float
    ci_high: float
    scale: str
    method: str
    level: float = 0.95
    se: float | None = None

    def to_dict(self):
        return {
            "value": self.value,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "scale": self.scale,
            "method": self.method,
            "level": self.level,
            "se": self.se,
        }


@dataclass(frozen=True)
class SurvivalCurve:
    """Kaplan-Meier step function; ``estimates[i]`` is S at ``times[i]``."""

    times: np.ndarray
    estimates: np.ndarray
    greenwood_var: np.ndarray
    at_risk: np.ndarray
    n_events: np.ndarray
    n_total: int
    max_time: float
    data: tuple = field(default=(), repr=False, compare=False)

    def __call__(self, t):
        """S(t), right-continuous."""
        idx = np.searchsorted(self.times, t, side="right")
        vals = np.concatenate(([1.0], self.estimates))
        return vals[idx]

    def left_limit(self, t):
        """S(t-)."""
        idx = np.searchsorted(self.times, t, side="left")
        vals = np.concatenate(([1.0], self.estimates))
        return vals[idx]

    def to_dict(self):
        return {
            "time": self.times.tolist(),
            "survival": self.estimates.tolist(),
            "greenwood_var": self.greenwood_var.tolist(),
            "at_risk": self.at_risk.astype(int).tolist(),
            "n_events": self.n_events.astype(int).tolist(),
            "n_total": self.n_total,
        }


def _z(level):
    if not 0 < level < 1:
        raise errors.InvalidProbability(f"confidence level must lie in (0, 1), got {level}")
    return stats.norm.ppf(0.5 + level / 2)


def _check_data(time, event):
    t = np.asarray(time, dtype=float)
    e = np.asarray(event, dtype=bool)
    if t.ndim != 1 or t.shape != e.shape:
        raise errors.ValidationError("time and event must be 1-d arrays of equal length")
    if t.size == 0:
        raise errors.EmptyData("kaplan_meier needs at least one observation")
    if not np.all(np.isfinite(t)) or np.any(t <= 0):
        raise errors.NonPositiveTime("all times must be finite and > 0")
    return t, e


def kaplan_meier(time, event) -> SurvivalCurve:
    """Product-limit estimate with Greenwood variance.

    Events are taken to precede censorings recorded at the same time.
    """
    t, e = _check_data(time, event)
    ev_times, d = np.unique(t[e], return_counts=True)
    y = (t.size - np.searchsorted(np.sort(t), ev_times, side="left")).astype(float)
    d = d.astype(float)
    # prod (y_i - d_i) / y_i regrouped so that, without censoring, every
    # factor after the first is exactly 1 and S(t) = (n - events) / n
    r = y - d
    s = r / y[0] * np.concatenate(([1.0], np.cumprod(r[:-1] / y[1:]))) if y.size else y
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(y > d, d / (y * (y - d)), 0.0)
    var = s**2 * np.cumsum(terms)
    var[s == 0] = 0.0
    return SurvivalCurve(ev_times, s, var, y, d, int(t.size), float(t.max()), (t, e))


def nelson_aalen(time, event):
    """Cumulative hazard at each distinct event time, with its variance."""
    t, e = _check_data(time, event)
    ev_times, d = np.unique(t[e], return_counts=True)
    y = (t.size - np.searchsorted(np.sort(t), ev_times, side="left")).astype(float)
    return ev_times, np.cumsum(d / y), np.cumsum(d / y**2)


def _check_horizon(curve, t, what):
    if not math.isfinite(t) or t < 0:
        raise errors.InvalidArgument(f"{what} must be a finite non-negative time, got {t}")
    if t > curve.max_time:
        raise errors.BeyondFollowUp(f"{what}={t} exceeds the last observed time {curve.max_time}")


def survival_at(curve: SurvivalCurve, t0: float, level: float = 0.95) -> EffectEstimate:
    """Milestone survival S(t0) with a log(-log) transformed Greenwood interval."""
    _check_horizon(curve, t0, "t0")
    z = _z(level)
    k = np.searchsorted(curve.times, t0, side="right")
    if k == 0:
        return EffectEstimate(1.0, 1.0, 1.0, "survival", "kaplan_meier", level, 0.0)
    s = float(curve.estimates[k - 1])
    var = float(curve.greenwood_var[k - 1])
    se = math.sqrt(var)
    if s <= 0.0 or s >= 1.0 or var == 0.0:
        return EffectEstimate(s, s, s, "survival", "kaplan_meier", level, se)
    theta = se / (s * abs(math.log(s)))
    lo = s ** math.exp(z * theta)
    hi = s ** math.exp(-z * theta)
    return EffectEstimate(s, lo, hi, "survival", "kaplan_meier loglog", level, se)


def quantile(curve: SurvivalCurve, q: float) -> float | None:
    """Smallest event time with S(t) <= 1 - q; ``None`` if never reached."""
    if not 0 < q < 1:
        raise errors.QOutOfRange(f"q must lie in (0, 1), got {q}")
    hit = np.nonzero(curve.estimates <= (1.0 - q) + 1e-12)[0]
    if hit.size == 0:
        return None
    return float(curve.times[hit[0]])


def _rmst_parts(curve, tau):
    k = np.searchsorted(curve.times, tau, side="right")
    t = curve.times[:k]
    s = curve.estimates[:k]
    knots = np.concatenate(([0.0], t, [tau]))
    heights = np.concatenate(([1.0], s))
    pieces = heights * np.diff(knots)
    area = math.fsum(pieces)
    # area from each event time to tau
    tail = np.cumsum(pieces[::-1])[::-1][1:]
    y, d = curve.at_risk[:k], curve.n_events[:k]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(y > d, tail**2 * d / (y * (y - d)), 0.0)
    return area, float(terms.sum())


def rmst(curve: SurvivalCurve, tau: float, level: float = 0.95, variance: str = "asymptotic",
         n_boot: int = 2000, seed: int = 0) -> EffectEstimate:
    """Restricted mean survival time up to ``tau`` by exact step integration."""
    _check_horizon(curve, tau, "tau")
    if tau <= 0:
        raise errors.InvalidArgument("tau must be > 0")
    area, var = _rmst_parts(curve, tau)
    if variance == "bootstrap":
        rng = np.random.default_rng(seed)
        t, e = curve.data
        boots = []
        for _ in range(n_boot):
            i = rng.integers(0, t.size, t.size)
            c = kaplan_meier(t[i], e[i])
            boots.append(_rmst_parts(c, min(tau, c.max_time))[0])
        var = float(np.var(boots, ddof=1))
    elif variance != "asymptotic":
        raise errors.InvalidArgument(f"unknown rmst variance {variance!r}")
    se = math.sqrt(var)
    z = _z(level)
    return EffectEstimate(area, area - z * se, area + z * se, "time", f"rmst {variance}", level, se)


def _wald(value, var, scale, method, level, transform=None):
    z = _z(level)
    se = math.sqrt(var)
    lo, hi = value - z * se, value + z * se
    if transform == "exp":
        return EffectEstimate(math.exp(value), math.exp(lo), math.exp(hi), scale, method, level, se)
    return EffectEstimate(value, lo, hi, scale, method, level, se)


def _two_arm(exp_value, exp_var, ctrl_value, ctrl_var, scale, method, level, probability):
    if scale == "difference":
        return _wald(exp_value - ctrl_value, exp_var + ctrl_var, "difference", method, level)
    if scale == "ratio":
        if exp_value <= 0 or ctrl_value <= 0:
            raise errors.DegenerateContrast(f"{method}: ratio undefined for a zero estimate")
        v = exp_var / exp_value**2 + ctrl_var / ctrl_value**2
        return _wald(math.log(exp_value / ctrl_value), v, "ratio", method, level, "exp")
    if scale == "odds_ratio":
        if not probability:
            raise errors.InvalidArgument("odds ratios are defined for milestone survival only")
        if not (0 < exp_value < 1 and 0 < ctrl_value < 1):
            raise errors.DegenerateContrast(f"{method}: odds undefined at survival 0 or 1")
        lo_e = math.log(exp_value / (1 - exp_value))
        lo_c = math.log(ctrl_value / (1 - ctrl_value))
        v = exp_var / (exp_value * (1 - exp_value)) ** 2 + ctrl_var / (ctrl_value * (1 - ctrl_value)) ** 2
        return _wald(lo_e - lo_c, v, "odds_ratio", method, level, "exp")
    raise errors.InvalidArgument(f"unknown scale {scale!r}")


def _milestone_var(curve, t0):
    k = np.searchsorted(curve.times, t0, side="right")
    return 0.0 if k == 0 else float(curve.greenwood_var[k - 1])


def contrast(experimental: SurvivalCurve, control: SurvivalCurve, measure: str, param: float,
             scale: str = "difference", level: float = 0.95, n_boot: int = 2000, seed: int = 0) -> EffectEstimate:
    """Experimental-vs-control contrast of a KM-based summary.

    ``measure`` is ``milestone`` (``param`` = t0), ``quantile`` (``param`` = q)
    or ``rmst`` (``param`` = tau). Milestone and RMST intervals are Wald
    intervals on the difference or log scale; quantile intervals are
    percentile bootstrap intervals.
    """
    if measure == "milestone":
        se_, sc_ = survival_at(experimental, param, level), survival_at(control, param, level)
        return _two_arm(se_.value, _milestone_var(experimental, param), sc_.value, _milestone_var(control, param),
                        scale, f"milestone survival at {param:g}", level, True)
    if measure == "rmst":
        re_, rc_ = rmst(experimental, param, level), rmst(control, param, level)
        return _two_arm(re_.value, re_.se**2, rc_.value, rc_.se**2, scale, f"rmst to {param:g}", level, False)
    if measure == "quantile":
        return _quantile_contrast(experimental, control, param, scale, level, n_boot, seed)
    raise errors.InvalidArgument(f"unknown contrast measure {measure!r}")


def _quantile_contrast(experimental, control, q, scale, level, n_boot, seed):
    qe, qc = quantile(experimental, q), quantile(control, q)
    if qe is None or qc is None:
        arm = "experimental" if qe is None else "control"
        raise errors.UndefinedQuantile(f"the {arm} curve never drops to {1 - q:g}")
    if scale == "difference":
        f = lambda a, b: a - b  # noqa: E731
    elif scale == "ratio":
        f = lambda a, b: a / b  # noqa: E731
    else:
        raise errors.InvalidArgument("quantile contrasts support 'difference' and 'ratio' scales")
    value = f(qe, qc)
    rng = np.random.default_rng(seed)
    (te, ee), (tc, ec) = experimental.data, control.data
    boots = []
    for _ in range(n_boot):
        ie = rng.integers(0, te.size, te.size)
        ic = rng.integers(0, tc.size, tc.size)
        be = quantile(kaplan_meier(te[ie], ee[ie]), q)
        bc = quantile(kaplan_meier(tc[ic], ec[ic]), q)
        if be is not None and bc is not None:
            boots.append(f(be, bc))
    if len(boots) < n_boot / 2:
        raise errors.UndefinedQuantile(
            f"quantile {q:g} undefined in {n_boot - len(boots)} of {n_boot} bootstrap resamples"
        )
    alpha = 1 - level
    lo, hi = np.quantile(boots, [alpha / 2, 1 - alpha / 2])
    lo, hi = min(lo, value), max(hi, value)
    return EffectEstimate(float(value), float(lo), float(hi), scale, f"quantile {q:g} bootstrap", level,
                          float(np.std(boots, ddof=1)))
