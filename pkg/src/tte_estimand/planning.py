"""Required number of events for a two-arm logrank comparison."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from . import errors
from .hypothesis_tests import logrank


def plan_events(alpha: float = 0.05, power: float = 0.8, hazard_ratio: float = 0.7,
                allocation_ratio: float = 1.0) -> int:
    """Events needed by the Schoenfeld approximation.

    ``d = ceil((z_{1-alpha/2} + z_power)^2 / (p (1 - p) log(HR)^2))`` where
    ``alpha`` is two-sided and ``p`` is the fraction allocated to the
    experimental arm (``allocation_ratio`` = experimental : control).
    """
    for name, v in (("alpha", alpha), ("power", power)):
        if not 0 < v < 1:
            raise errors.InvalidProbability(f"{name} must lie in (0, 1), got {v}")
    if not (math.isfinite(hazard_ratio) and hazard_ratio > 0):
        raise errors.InvalidArgument(f"hazard_ratio must be > 0, got {hazard_ratio}")
    if hazard_ratio == 1:
        raise errors.HREqualsOne("a hazard ratio of 1 gives no effect to power against")
    if not (math.isfinite(allocation_ratio) and allocation_ratio > 0):
        raise errors.InvalidArgument(f"allocation_ratio must be > 0, got {allocation_ratio}")
    p = allocation_ratio / (1.0 + allocation_ratio)
    z = stats.norm.ppf(1 - alpha / 2) + stats.norm.ppf(power)
    d = z**2 / (p * (1 - p) * math.log(hazard_ratio) ** 2)
    # guard against a float landing a hair above an integer
    return int(math.ceil(d - 1e-9))


def simulated_power(n_events: int, hazard_ratio: float, alpha: float = 0.05, allocation_ratio: float = 1.0,
                    replicates: int = 2000, seed: int = 0, n_subjects: int | None = None) -> float:
    """Logrank rejection rate when the analysis happens at the ``n_events``-th event.

    All subjects start together with exponential event times (control rate
    1); follow-up stops at the calendar time of the ``n_events``-th event.
    """
    if n_events < 2:
        raise errors.InvalidArgument("n_events must be >= 2")
    p = allocation_ratio / (1.0 + allocation_ratio)
    n = n_subjects or 2 * n_events
    if n < n_events:
        raise errors.InvalidArgument("n_subjects must be at least n_events")
    n1 = int(round(n * p))
    z = np.r_[np.zeros(n - n1), np.ones(n1)]
    rate = np.where(z == 1, hazard_ratio, 1.0)
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(replicates):
        t = rng.standard_exponential(n) / rate
        stop = np.partition(t, n_events - 1)[n_events - 1]
        e = t <= stop
        hits += logrank(np.minimum(t, stop), e, z).p_value < alpha
    return hits / replicates
