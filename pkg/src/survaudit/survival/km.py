from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KMCurve:
    """Right-continuous product-limit step function.

    ``times`` holds every distinct observed time (event or censoring);
    ``survival[i]`` is S just after ``times[i]``.
    """

    times: np.ndarray
    survival: np.ndarray
    n_at_risk: np.ndarray
    n_events: np.ndarray

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def event_times(self) -> np.ndarray:
        return self.times[self.n_events > 0]

    def __call__(self, t) -> np.ndarray:
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return np.where(idx < 0, 1.0, self.survival[np.maximum(idx, 0)])

    def left_limit(self, t) -> np.ndarray:
        """S(t-), the value just before ``t``."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="left") - 1
        return np.where(idx < 0, 1.0, self.survival[np.maximum(idx, 0)])

    def area(self, upper: float) -> float:
        """Exact integral of S over [0, upper]."""
        knots = np.concatenate([[0.0], self.times[self.times < upper], [upper]])
        levels = np.concatenate([[1.0], self.survival[self.times < upper]])
        return float(np.sum(levels * np.diff(knots)))


def _grouped(times, events):
    t = np.asarray(times, dtype=float)
    e = np.asarray(events).astype(np.int64)
    if t.size == 0:
        raise ValueError("kaplan_meier needs at least one subject")
    if t.shape != e.shape:
        raise ValueError("times and events differ in length")
    uniq, inv = np.unique(t, return_inverse=True)
    deaths = np.bincount(inv, weights=e, minlength=uniq.size).astype(np.int64)
    total = np.bincount(inv, minlength=uniq.size)
    at_risk = t.size - np.concatenate([[0], np.cumsum(total)[:-1]])
    return uniq, deaths, total, at_risk


def kaplan_meier(times, events) -> KMCurve:
    """Product-limit estimate; subjects censored at an event time count as at risk there.

    Within a stretch without censoring the product telescopes, so the estimate
    is computed as (anchor survival) x (survivors / anchor risk-set size).  With
    no censoring at all this reproduces the empirical survival function exactly.
    """
    uniq, deaths, total, at_risk = _grouped(times, events)
    surv = np.empty(uniq.size)
    s_anchor, n_anchor = 1.0, float(at_risk[0])
    for i in range(uniq.size):
        left = at_risk[i] - deaths[i]
        s = s_anchor * (left / n_anchor) if n_anchor > 0 else s_anchor
        surv[i] = s
        censored = total[i] - deaths[i]
        if censored:
            s_anchor, n_anchor = s, float(left - censored)
    return KMCurve(uniq, surv, at_risk, deaths)


def nelson_aalen(times, events) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative hazard at the distinct event times: (event_times, H)."""
    uniq, deaths, _, at_risk = _grouped(times, events)
    keep = deaths > 0
    return uniq[keep], np.cumsum(deaths[keep] / at_risk[keep])


def step_lookup(knots: np.ndarray, values: np.ndarray, t, before: float = 0.0) -> np.ndarray:
    """Right-continuous step function through (knots, values), ``before`` left of the first knot."""
    idx = np.searchsorted(knots, np.asarray(t, dtype=float), side="right") - 1
    if knots.size == 0:
        return np.full(np.shape(t), before, dtype=float)
    return np.where(idx < 0, before, values[np.maximum(idx, 0)])
