"""Discrimination and calibration scores for survival predictions."""

from __future__ import annotations

import logging

import numpy as np

from .km import KMCurve

log = logging.getLogger(__name__)

G_MIN = 1e-4
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def c_index(times, events, risks, chunk: int = 1024) -> float:
    """Harrell's concordance.

    A pair (i, j) is comparable when t_i < t_j and subject i died; it is
    concordant when risk_i > risk_j and counts one half when the risks tie.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(events).astype(bool)
    r = np.asarray(risks, dtype=float)
    if not (t.shape == e.shape == r.shape):
        raise ValueError("times, events and risks differ in length")
    comparable = concordant = tied = 0
    dead = np.flatnonzero(e)
    for s in range(0, dead.size, chunk):
        i = dead[s:s + chunk]
        later = t[None, :] > t[i, None]
        comparable += int(later.sum())
        concordant += int((later & (r[i, None] > r[None, :])).sum())
        tied += int((later & (r[i, None] == r[None, :])).sum())
    if comparable == 0:
        raise ValueError("no comparable pairs")
    return (concordant + 0.5 * tied) / comparable


def ibs_grid(times, events, lower_pct: float = 10.0, upper_pct: float = 90.0) -> np.ndarray:
    """Distinct event times strictly inside [P_lower, P_upper] of follow-up, plus both endpoints."""
    t = np.asarray(times, dtype=float)
    e = np.asarray(events).astype(bool)
    lo, hi = np.percentile(t, [lower_pct, upper_pct])
    ev = np.unique(t[e])
    inside = ev[(ev > lo) & (ev < hi)]
    return np.unique(np.concatenate([[lo], inside, [hi]]))


def brier_curve(surv: np.ndarray, grid, times, events, censor_km: KMCurve) -> tuple[np.ndarray, bool]:
    """Inverse-probability-of-censoring weighted Brier score at each grid time.

    ``surv`` is (subjects x grid) predicted survival.  Returns the curve and
    whether any censoring weight had to be capped at 1 / G_MIN.
    """
    grid = np.asarray(grid, dtype=float)
    t = np.asarray(times, dtype=float)
    e = np.asarray(events).astype(bool)
    surv = np.asarray(surv, dtype=float)
    if surv.shape != (t.size, grid.size):
        raise ValueError(f"prediction matrix shape {surv.shape} != ({t.size}, {grid.size})")
    g_subject = censor_km.left_limit(t)
    g_grid = censor_km(grid)
    died_before = (t[:, None] <= grid[None, :]) & e[:, None]
    alive_after = t[:, None] > grid[None, :]
    capped = bool(np.any(died_before & (g_subject[:, None] < G_MIN)) or
                  np.any(alive_after & (g_grid[None, :] < G_MIN)))
    if capped:
        log.warning("censoring survival below %g; weights capped", G_MIN)
    g_subject = np.maximum(g_subject, G_MIN)
    g_grid = np.maximum(g_grid, G_MIN)
    term = np.where(died_before, surv ** 2 / g_subject[:, None], 0.0)
    term += np.where(alive_after, (1.0 - surv) ** 2 / g_grid[None, :], 0.0)
    return term.mean(axis=0), capped


def integrate_curve(values: np.ndarray, grid) -> float:
    grid = np.asarray(grid, dtype=float)
    span = grid[-1] - grid[0]
    if grid.size < 2 or span <= 0:
        return float(values[0])
    return float(_trapezoid(values, grid) / span)


def integrated_brier(surv: np.ndarray, grid, times, events, censor_km: KMCurve) -> float:
    """Trapezoidal time-average of the IPCW Brier score over ``grid``."""
    bs, _ = brier_curve(surv, grid, times, events, censor_km)
    return integrate_curve(bs, grid)
