"""Cox regression on the treatment indicator and the average regression effect.

The covariate is the arm (1 = experimental), optionally with strata, so the
partial likelihood is a scalar concave function of one coefficient. The
average regression effect solves the same score equation with each event
time weighted by ``S(t-) / (Y(t) / n)``, where ``S`` is the pooled
Kaplan-Meier estimate and ``Y`` the pooled risk-set size. Those weights turn
the risk-set-weighted Cox score into one weighted by the marginal failure
distribution, so the estimate does not depend on the censoring pattern.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import errors
from ._risk import RiskTable, risk_table
from .survival import EffectEstimate

MAX_ITER = 50
MAX_HALVINGS = 20
SCORE_TOL = 1e-9
STEP_TOL = 1e-10


def partial_likelihood(beta: float, table: RiskTable, ties: str = "breslow", weights=None):
    """Log partial likelihood, score and information at ``beta``.

    ``weights`` (one per row of ``table``) multiply each event time's
    contribution; only the Breslow form supports them.
    """
    y0, y1, d0, d1 = table.y0, table.y1, table.d0, table.d1
    d = d0 + d1
    w = np.ones_like(d) if weights is None else np.asarray(weights, dtype=float)
    e = math.exp(beta)
    if ties == "breslow":
        r = y0 + y1 * e
        p = y1 * e / r
        ll = float(np.sum(w * (d1 * beta - d * np.log(r))))
        u = float(np.sum(w * (d1 - d * p)))
        info = float(np.sum(w * d * p * (1.0 - p)))
        return ll, u, info
    if ties != "efron":
        raise errors.InvalidArgument(f"unknown ties method {ties!r}")
    if weights is not None:
        raise errors.InvalidArgument("weighted fits use Breslow ties")
    counts = d.astype(int)
    rows = np.repeat(np.arange(d.size), counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    frac = (np.arange(rows.size) - starts) / d[rows]
    a = (y1[rows] - frac * d1[rows]) * e
    b = y0[rows] - frac * d0[rows] + a
    m = a / b
    ll = float(np.sum(d1 * beta) - np.sum(np.log(b)))
    u = float(np.sum(d1) - np.sum(m))
    info = float(np.sum(m - m**2))
    return ll, u, info


@dataclass(frozen=True)
class CoxFit:
    beta_hat: float
    se: float
    loglik_null: float
    loglik: float
    score_statistic: float
    wald_statistic: float
    iterations: int
    converged: bool
    ties: str
    strata_used: tuple
    n_events: int
    monotone: str | None = None

    @property
    def hazard_ratio(self):
        return math.exp(self.beta_hat) if math.isfinite(self.beta_hat) else (math.inf if self.beta_hat > 0 else 0.0)

    @property
    def score_p_value(self):
        return float(stats.chi2.sf(self.score_statistic, 1))

    @property
    def wald_p_value(self):
        return float(stats.chi2.sf(self.wald_statistic, 1)) if math.isfinite(self.wald_statistic) else float("nan")

    def confint(self, level: float = 0.95) -> EffectEstimate:
        """Hazard ratio with a Wald interval built on the log scale."""
        z = stats.norm.ppf(0.5 + level / 2)
        if self.monotone is not None:
            hr = self.hazard_ratio
            lo, hi = (hr, hr) if not math.isfinite(self.beta_hat) else (0.0, math.inf)
            return EffectEstimate(hr, min(lo, hr), max(hi, hr), "hazard_ratio", "cox (monotone likelihood)", level, math.inf)
        b, se = self.beta_hat, self.se
        return EffectEstimate(math.exp(b), math.exp(b - z * se), math.exp(b + z * se), "hazard_ratio",
                              f"cox {self.ties}" + (" stratified" if len(self.strata_used) > 1 else ""), level, se)

    def to_dict(self):
        return {
            "beta_hat": self.beta_hat,
            "se": self.se,
            "hazard_ratio": self.hazard_ratio,
            "loglik_null": self.loglik_null,
            "loglik": self.loglik,
            "score_statistic": self.score_statistic,
            "wald_statistic": self.wald_statistic,
            "iterations": self.iterations,
            "converged": self.converged,
            "ties": self.ties,
            "n_strata": len(self.strata_used),
            "n_events": self.n_events,
            "monotone": self.monotone,
        }


def _monotone_direction(table, weights=None):
    """'+inf' / '-inf' when the partial likelihood has no finite maximiser."""
    w = np.ones_like(table.d0) if weights is None else weights
    # the score tends to -sum(d0 | y1>0) as beta -> +inf and to +sum(d1 | y0>0) as beta -> -inf
    ctrl_events_vs_exp = float(np.sum(w * table.d0 * (table.y1 > 0)))
    exp_events_vs_ctrl = float(np.sum(w * table.d1 * (table.y0 > 0)))
    if ctrl_events_vs_exp == 0 and exp_events_vs_ctrl > 0:
        return "+inf"
    if exp_events_vs_ctrl == 0 and ctrl_events_vs_exp > 0:
        return "-inf"
    return None


def _newton(table, ties, weights):
    """Maximise the (weighted) partial likelihood; returns beta, ll, info, iterations, converged."""
    beta = 0.0
    ll, u, info = partial_likelihood(beta, table, ties, weights)
    for it in range(1, MAX_ITER + 1):
        if not info > 0:
            raise errors.SingularInformation("partial-likelihood information is zero")
        step = u / info
        for _ in range(MAX_HALVINGS + 1):
            ll_new, u_new, info_new = partial_likelihood(beta + step, table, ties, weights)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            step /= 2
        beta += step
        ll, u, info = ll_new, u_new, info_new
        if abs(u) < SCORE_TOL or abs(step) < STEP_TOL:
            return beta, ll, info, it, True
    return beta, ll, info, MAX_ITER, False


def _score_at_zero(table, ties, weights=None):
    ll0, u0, i0 = partial_likelihood(0.0, table, ties, weights)
    if not i0 > 0:
        raise errors.SingularInformation(
            "no risk set contains both arms; the treatment effect is not identifiable"
        )
    return ll0, u0, i0


def _fit_table(table, ties, weights=None):
    n_events = int(table.d.sum())
    if n_events == 0:
        raise errors.NoEvents("no events: the partial likelihood is empty")
    ll0, u0, i0 = _score_at_zero(table, ties, weights)
    score = u0**2 / i0
    mono = _monotone_direction(table, weights)
    if mono is not None:
        beta = math.inf if mono == "+inf" else -math.inf
        return CoxFit(beta, math.inf, ll0, float("nan"), score, float("nan"), 0, False, ties,
                      table.strata, n_events, mono)
    beta, ll, info, iters, ok = _newton(table, ties, weights)
    se = 1.0 / math.sqrt(info)
    return CoxFit(beta, se, ll0, ll, score, beta**2 * info, iters, ok, ties, table.strata, n_events)


def cox_fit(time, event, arm, strata=None, ties: str = "breslow") -> CoxFit:
    """Fit the (stratified) Cox model on the arm indicator by Newton-Raphson.

    A likelihood that increases without bound (all events of one arm happen
    while the other arm has no events at risk) is reported through
    ``monotone`` with an infinite ``beta_hat`` instead of a spurious finite
    value.
    """
    table = risk_table(time, event, arm, strata)
    return _fit_table(table, ties)


def score_test(time, event, arm, strata=None, ties: str = "breslow") -> float:
    """Cox score statistic for beta = 0 (chi-square, 1 df)."""
    table = risk_table(time, event, arm, strata)
    if table.d.sum() == 0:
        raise errors.NoEvents("no events")
    _, u0, i0 = _score_at_zero(table, ties)
    return u0**2 / i0


@dataclass(frozen=True)
class ScoreLogrankCheck:
    chi2_score: float
    chi2_logrank: float
    tied_event_times: bool

    @property
    def gap(self):
        return abs(self.chi2_score - self.chi2_logrank)

    def __iter__(self):
        return iter((self.chi2_score, self.chi2_logrank, self.gap))


def score_test_equals_logrank_check(time, event, arm, strata=None) -> ScoreLogrankCheck:
    """Compare the Breslow score statistic at zero with the logrank statistic.

    The two agree to rounding error when event times are untied. With tied
    event times the logrank uses the hypergeometric variance, which is
    smaller than the Breslow information by ``(Y - d) / (Y - 1)`` at each
    tied time, so the gap is then expected and reported via
    ``tied_event_times``.
    """
    from .hypothesis_tests import logrank

    table = risk_table(time, event, arm, strata)
    chi2_score = score_test(time, event, arm, strata, "breslow")
    chi2_lr = logrank(time, event, arm, strata).statistic
    return ScoreLogrankCheck(chi2_score, chi2_lr, table.has_tied_events)


@dataclass(frozen=True)
class AvgEffectEstimate:
    beta_bar: float
    ci_low: float | None
    ci_high: float | None
    weights_summary: dict
    converged: bool
    monotone: str | None = None
    se: float | None = None
    level: float = 0.95
    n_boot: int = 0

    @property
    def hazard_ratio(self):
        return math.exp(self.beta_bar) if math.isfinite(self.beta_bar) else (math.inf if self.beta_bar > 0 else 0.0)

    def confint(self) -> EffectEstimate:
        if self.ci_low is None:
            lo = hi = self.hazard_ratio
        else:
            lo, hi = math.exp(self.ci_low), math.exp(self.ci_high)
        return EffectEstimate(self.hazard_ratio, lo, hi, "hazard_ratio",
                              f"average regression effect, bootstrap {self.n_boot}", self.level, self.se)

    def to_dict(self):
        return {
            "beta_bar": self.beta_bar,
            "hazard_ratio": self.hazard_ratio,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "se": self.se,
            "level": self.level,
            "n_boot": self.n_boot,
            "converged": self.converged,
            "monotone": self.monotone,
            "weights": self.weights_summary,
        }


def xoq_weights(table: RiskTable, n_total: int) -> np.ndarray:
    """``S(t-) / (Y(t) / n)`` at each event time of an unstratified table."""
    y, d = table.y, table.d
    s = np.cumprod(1.0 - d / y)
    s_minus = np.concatenate(([1.0], s[:-1]))
    return s_minus * n_total / y


def _avg_effect_point(time, event, arm):
    table = risk_table(time, event, arm)
    if table.d.sum() == 0:
        raise errors.NoEvents("no events: the weighted score is empty")
    w = xoq_weights(table, len(time))
    _score_at_zero(table, "breslow", w)
    mono = _monotone_direction(table, w)
    if mono is not None:
        return (math.inf if mono == "+inf" else -math.inf), w, table, False, mono
    beta, _, _, _, ok = _newton(table, "breslow", w)
    return beta, w, table, ok, None


BOOT_CHUNK = 100


def _boot_chunk(t, e, z, seed_seq, size):
    rng = np.random.default_rng(seed_seq)
    out = []
    for _ in range(size):
        i = rng.integers(0, t.size, t.size)
        try:
            b, *_ = _avg_effect_point(t[i], e[i], z[i])
        except (errors.SingularInformation, errors.NoEvents):
            b = float("nan")
        out.append(b)
    return out


def avg_regression_effect(time, event, arm, n_boot: int = 1000, seed: int = 0, level: float = 0.95,
                          threads: int = 1) -> AvgEffectEstimate:
    """Average regression effect (log hazard ratio scale) with a bootstrap interval.

    Bootstrap resamples are drawn in fixed-size chunks, each from its own
    child seed, so the interval does not depend on ``threads``. Pass
    ``n_boot=0`` for the point estimate alone.
    """
    t = np.asarray(time, dtype=float)
    e = np.asarray(event, dtype=bool)
    z = np.asarray(arm, dtype=float)
    beta, w, table, ok, mono = _avg_effect_point(t, e, z)
    d = table.d
    summary = {"min": float(w.min()), "max": float(w.max()), "mean": float(np.sum(w * d) / np.sum(d))}
    if n_boot <= 0:
        return AvgEffectEstimate(beta, None, None, summary, ok, mono, None, level, 0)

    sizes = [min(BOOT_CHUNK, n_boot - k) for k in range(0, n_boot, BOOT_CHUNK)]
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(seeds, sizes))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda j: _boot_chunk(t, e, z, *j), jobs))
    else:
        chunks = [_boot_chunk(t, e, z, *j) for j in jobs]
    boots = np.array([b for c in chunks for b in c])
    boots = boots[np.isfinite(boots)]
    if boots.size < 2:
        return AvgEffectEstimate(beta, None, None, summary, ok, mono, None, level, n_boot)
    alpha = 1 - level
    lo, hi = np.quantile(boots, [alpha / 2, 1 - alpha / 2])
    if math.isfinite(beta):
        lo, hi = min(lo, beta), max(hi, beta)
    return AvgEffectEstimate(beta, float(lo), float(hi), summary, ok, mono, float(np.std(boots, ddof=1)),
                             level, n_boot)
