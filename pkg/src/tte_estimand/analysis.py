"""Two-stage analysis of one estimand: a gatekeeper test, then effect estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import __version__, errors
from .competing import aalen_johansen
from .events import Cohort
from .hypothesis_tests import TestResult, logrank, rerandomization_test
from .regression import avg_regression_effect, cox_fit
from .spec import COMPETING, DerivedDataset, EstimandSpec, derive_dataset
from .survival import EffectEstimate, contrast, kaplan_meier

DIFFER_WARNING = "gatekeeper and effect quantifier differ"


@dataclass(frozen=True)
class AnalysisReport:
    spec: EstimandSpec
    derivation: dict
    gatekeeper: TestResult | None
    gatekeeper_passed: bool | None
    effects: tuple
    warnings: tuple
    curves: dict
    competing_risks: dict | None = None
    inputs: dict = field(default_factory=dict)
    seed: int | None = None
    cutoff: float | None = None

    def to_dict(self):
        return {
            "tool": {"name": "tte-estimand", "version": __version__},
            "spec": self.spec.to_dict(),
            "derivation": self.derivation,
            "gatekeeper": None if self.gatekeeper is None else
            {**self.gatekeeper.to_dict(), "passed": self.gatekeeper_passed, "alpha": self.spec.summary.alpha},
            "effects": [dict(e) for e in self.effects],
            "warnings": list(self.warnings),
            "curves": self.curves,
            "competing_risks": self.competing_risks,
            "inputs": self.inputs,
            "seed": self.seed,
            "cutoff_calendar_time": self.cutoff,
        }


def _strata(data, summary):
    return data.strata_labels(summary.stratified) if summary.stratified else None


def _gatekeeper(data, spec, seed, threads):
    s = spec.summary
    t, e, z = data.time, data.event, data.treatment
    if s.gatekeeper is None:
        return None
    if s.gatekeeper == "logrank":
        return logrank(t, e, z)
    if s.gatekeeper == "stratified_logrank":
        strata = _strata(data, s)
        if strata is None:
            raise errors.MissingAttribute("summary.stratified (required by stratified_logrank)")
        return logrank(t, e, z, strata)
    return rerandomization_test(t, e, z, B=s.permutations, seed=seed, strata=_strata(data, s), threads=threads)


def _effects(data, spec, seed, threads, warnings):
    s = spec.summary
    t, e, z = data.time, data.event, data.treatment
    out = []
    curves = None
    for m in s.effects:
        if m == "cox_hr":
            fit = cox_fit(t, e, z, _strata(data, s), s.ties)
            if fit.monotone is not None:
                warnings.append(f"monotone likelihood: the Cox estimate diverges to {fit.monotone}")
            elif not fit.converged:
                warnings.append("Cox fit did not converge")
            out.append({"measure": m, **fit.confint(s.level).to_dict(), "fit": fit.to_dict()})
        elif m == "avg_regression_effect":
            if seed is None:
                raise errors.SeedRequired("the average regression effect bootstrap needs an explicit seed")
            est = avg_regression_effect(t, e, z, n_boot=s.bootstrap, seed=seed, level=s.level, threads=threads)
            if est.monotone is not None:
                warnings.append(f"monotone likelihood: the average regression effect diverges to {est.monotone}")
            out.append({"measure": m, **est.confint().to_dict(), "fit": est.to_dict()})
        else:
            if curves is None:
                curves = (kaplan_meier(t[z == 1], e[z == 1]), kaplan_meier(t[z == 0], e[z == 0]))
            if m == "milestone":
                est = contrast(*curves, "milestone", s.t0, s.scale, s.level)
            elif m == "rmst_diff":
                est = contrast(*curves, "rmst", s.tau, s.scale, s.level)
            else:
                if seed is None:
                    raise errors.SeedRequired("the quantile contrast bootstrap needs an explicit seed")
                scale = "difference" if s.scale == "odds_ratio" else s.scale
                est = contrast(*curves, "quantile", s.q, scale, s.level, n_boot=s.bootstrap, seed=seed)
            out.append({"measure": m, **est.to_dict()})
    return out


def _curve_dict(data):
    t, e, z = data.time, data.event, data.treatment
    out = {}
    for label, code in (("control", 0), ("experimental", 1)):
        if np.any(z == code):
            out[label] = kaplan_meier(t[z == code], e[z == code]).to_dict()
    return out


def _competing(data):
    if not any(o.status == COMPETING for o in data.observations):
        return None
    causes = data.causes()
    z = data.treatment
    names = sorted({c for c in causes if c is not None})
    out = {}
    for label, code in (("control", 0), ("experimental", 1)):
        idx = np.nonzero(z == code)[0]
        if idx.size:
            cifs = aalen_johansen(data.time[idx], [causes[i] for i in idx], names)
            out[label] = {k: c.to_dict() for k, c in cifs.items()}
    return out


def analyze_dataset(spec: EstimandSpec, data: DerivedDataset, seed: int | None = None, threads: int = 1,
                    inputs: dict | None = None, cutoff: float | None = None) -> AnalysisReport:
    """Run the gatekeeper test and every effect measure of ``spec`` on derived data."""
    s = spec.summary
    if s.randomized and seed is None:
        raise errors.SeedRequired(f"spec {spec.name!r} uses a randomized procedure; pass a seed")
    if len(data) == 0:
        raise errors.EmptyData(f"spec {spec.name!r}: no subjects remain after derivation")
    if not data.event.any():
        raise errors.NoEvents(f"spec {spec.name!r}: derivation yields zero events")
    warnings = []
    try:
        gate = _gatekeeper(data, spec, seed, threads)
        effects = _effects(data, spec, seed, threads, warnings)
    except errors.EstimandError as exc:
        raise type(exc)(f"spec {spec.name!r}: {exc}") from None
    passed = None if gate is None else bool(gate.p_value < s.alpha)
    if gate is not None and any(m != "cox_hr" for m in s.effects):
        warnings.append(DIFFER_WARNING)
    if passed is False and effects:
        warnings.append("gatekeeper did not reject; effect estimates are descriptive")
    derivation = {
        "n_included": len(data),
        "n_excluded": data.n_excluded_by_population,
        "exclusion_reasons": dict(data.exclusion_reasons),
        "status_counts": data.status_counts(),
        "n_events_by_arm": {
            "control": int(np.sum(data.event & (data.treatment == 0))),
            "experimental": int(np.sum(data.event & (data.treatment == 1))),
        },
    }
    return AnalysisReport(spec, derivation, gate, passed, tuple(effects), tuple(warnings), _curve_dict(data),
                          _competing(data), dict(inputs or {}), seed, cutoff)


def run_analysis(spec: EstimandSpec, cohort: Cohort, cutoff: float | None = None, seed: int | None = None,
                 threads: int = 1, inputs: dict | None = None) -> AnalysisReport:
    """Derive the analysis dataset from ``cohort`` and analyse it."""
    data = derive_dataset(spec, cohort, cutoff, threads)
    used = cohort.cutoff_calendar_time if cutoff is None else cutoff
    return analyze_dataset(spec, data, seed, threads, inputs, used)


def effect_summary(report: AnalysisReport) -> list[EffectEstimate]:
    """Effect estimates of a report as plain :class:`EffectEstimate` objects."""
    keys = ("value", "ci_low", "ci_high", "scale", "method", "level", "se")
    return [EffectEstimate(*(e[k] for k in keys)) for e in report.effects]

