"""Elastic-net penalized Cox proportional hazards with Efron tie handling.

The fitted objective is the per-subject negative log partial likelihood plus
``penalty * (l1_ratio * |b|_1 + (1 - l1_ratio) * |b|_2^2 / 2)``, minimized by
cyclic coordinate descent: each coordinate takes a proximal Newton step on
its exact one-dimensional quadratic approximation (soft-thresholding handles
the L1 part), backed off by step halving whenever the objective would rise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .data import SurvivalData
from .km import step_lookup

log = logging.getLogger(__name__)

MAX_CYCLES = 1000
COEF_TOL = 1e-7


class CoxFitError(RuntimeError):
    pass


class PartialLikelihood:
    """Efron partial likelihood with cached sort order and tie structure."""

    def __init__(self, times, events, X):
        t = np.asarray(times, dtype=float)
        e = np.asarray(events).astype(bool)
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        order = np.argsort(t, kind="stable")
        self.order = order
        self.t = t[order]
        self.e = e[order]
        self.X = X[order]
        self.n = t.size
        ev_times, d = np.unique(self.t[self.e], return_counts=True)
        self.event_times = ev_times
        self.d = d
        # first sorted index in the risk set of each event time
        self.start = np.searchsorted(self.t, ev_times, side="left")
        death_pos = np.flatnonzero(self.e)
        self.death_pos = death_pos
        self.death_group = np.searchsorted(ev_times, self.t[death_pos])
        # Efron: l-th death of a tie group of size d uses fraction l/d
        rank_in_group = np.arange(death_pos.size) - np.searchsorted(self.death_group, self.death_group)
        self.frac = rank_in_group / d[self.death_group]
        self.xd_sum = self.X[death_pos].sum(axis=0)

    @property
    def n_events(self) -> int:
        return int(self.death_pos.size)

    def _risk(self, eta):
        c = float(np.max(eta)) if eta.size else 0.0
        return np.exp(eta - c), c

    @staticmethod
    def _revcum(a):
        return np.cumsum(a[::-1], axis=0)[::-1]

    def _sums(self, w):
        """Risk-set and tied-death sums of the per-row weights ``w`` for every event time."""
        rs = self._revcum(w)[self.start]
        ds = np.zeros((self.event_times.size,) + w.shape[1:])
        np.add.at(ds, self.death_group, w[self.death_pos])
        return rs, ds

    def loglik(self, beta: np.ndarray) -> float:
        eta = self.X @ beta
        r, c = self._risk(eta)
        s0, s0d = self._sums(r)
        phi = s0[self.death_group] - self.frac * s0d[self.death_group]
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(eta[self.death_pos].sum() - np.sum(np.log(phi) + c))

    def gradient(self, beta: np.ndarray) -> np.ndarray:
        eta = self.X @ beta
        r, _ = self._risk(eta)
        s0, s0d = self._sums(r)
        s1, s1d = self._sums(r[:, None] * self.X)
        g = self.death_group
        phi = s0[g] - self.frac * s0d[g]
        a1 = s1[g] - self.frac[:, None] * s1d[g]
        return self.xd_sum - np.sum(a1 / phi[:, None], axis=0)

    def hessian(self, beta: np.ndarray) -> np.ndarray:
        eta = self.X @ beta
        r, _ = self._risk(eta)
        g = self.death_group
        s0, s0d = self._sums(r)
        s1, s1d = self._sums(r[:, None] * self.X)
        s2, s2d = self._sums(r[:, None, None] * self.X[:, :, None] * self.X[:, None, :])
        phi = s0[g] - self.frac * s0d[g]
        a1 = (s1[g] - self.frac[:, None] * s1d[g]) / phi[:, None]
        a2 = (s2[g] - self.frac[:, None, None] * s2d[g]) / phi[:, None, None]
        return -np.sum(a2 - a1[:, :, None] * a1[:, None, :], axis=0)

    def coordinate(self, eta: np.ndarray, j: int) -> tuple[float, float]:
        """First and second derivative of the log-likelihood along coordinate ``j``."""
        r, _ = self._risk(eta)
        x = self.X[:, j]
        g = self.death_group
        f = self.frac
        rs0 = self._revcum(r)[self.start]
        rs1 = self._revcum(r * x)[self.start]
        rs2 = self._revcum(r * x * x)[self.start]
        n_ev = self.event_times.size
        rp = r[self.death_pos]
        xp = x[self.death_pos]
        d0 = np.bincount(g, weights=rp, minlength=n_ev)
        d1 = np.bincount(g, weights=rp * xp, minlength=n_ev)
        d2 = np.bincount(g, weights=rp * xp * xp, minlength=n_ev)
        phi = rs0[g] - f * d0[g]
        a1 = (rs1[g] - f * d1[g]) / phi
        a2 = (rs2[g] - f * d2[g]) / phi
        return float(self.xd_sum[j] - a1.sum()), float(-(a2 - a1 * a1).sum())

    def loglik_eta(self, eta: np.ndarray) -> float:
        r, c = self._risk(eta)
        s0 = self._revcum(r)[self.start]
        n_ev = self.event_times.size
        s0d = np.bincount(self.death_group, weights=r[self.death_pos], minlength=n_ev)
        g = self.death_group
        phi = s0[g] - self.frac * s0d[g]
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(eta[self.death_pos].sum() - np.sum(np.log(phi) + c))

    def breslow(self, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        eta = self.X @ beta
        r, c = self._risk(eta)
        s0 = self._revcum(r)[self.start]
        with np.errstate(over="ignore"):
            return self.event_times, np.cumsum(self.d / s0 * np.exp(-c))


def penalty_value(beta, penalty, l1_ratio) -> float:
    return penalty * (l1_ratio * np.abs(beta).sum() + 0.5 * (1.0 - l1_ratio) * np.dot(beta, beta))


@dataclass
class CoxModel:
    coefficients: np.ndarray
    penalty: float
    l1_ratio: float
    baseline_times: np.ndarray
    baseline_cumhaz: np.ndarray
    n_cycles: int = 0
    converged: bool = False
    objective_history: list[float] = field(default_factory=list)
    feature_names: list[str] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.coefficients.shape[0]

    def baseline(self, t) -> np.ndarray:
        return step_lookup(self.baseline_times, self.baseline_cumhaz, t)


def fit_cox(data: SurvivalData, penalty: float = 0.0, l1_ratio: float = 0.0, seed: int = 0,
            max_cycles: int = MAX_CYCLES, tol: float = COEF_TOL) -> CoxModel:
    """Fit a penalized Cox model; features are expected to be standardized by the caller.

    ``seed`` is accepted for interface symmetry with the forest; the fit is deterministic.
    """
    if data.n_events == 0:
        raise CoxFitError("cannot fit a Cox model without events")
    if not 0.0 <= l1_ratio <= 1.0 or penalty < 0:
        raise ValueError("need penalty >= 0 and 0 <= l1_ratio <= 1")
    pl = PartialLikelihood(data.times, data.events, data.X)
    n, p = pl.X.shape
    beta = np.zeros(p)
    eta = np.zeros(n)
    lam1 = penalty * l1_ratio
    lam2 = penalty * (1.0 - l1_ratio)

    def objective(eta_, beta_):
        return -pl.loglik_eta(eta_) / n + penalty_value(beta_, penalty, l1_ratio)

    obj = objective(eta, beta)
    history = [obj]
    converged = False
    cycle = 0
    for cycle in range(1, max_cycles + 1):
        max_delta = 0.0
        for j in range(p):
            grad, hess = pl.coordinate(eta, j)
            g = -grad / n + lam2 * beta[j]
            h = -hess / n + lam2
            if not h > 0:
                continue
            z = h * beta[j] - g
            new = np.sign(z) * max(abs(z) - lam1, 0.0) / h
            delta = new - beta[j]
            if abs(delta) < 1e-13:
                continue
            xj = pl.X[:, j]
            step = 1.0
            for _ in range(30):
                trial_beta = beta.copy()
                trial_beta[j] = beta[j] + step * delta
                trial_eta = eta + (step * delta) * xj
                trial = objective(trial_eta, trial_beta)
                if np.isfinite(trial) and trial <= obj:
                    break
                step *= 0.5
            else:
                if not np.isfinite(objective(eta, beta)):
                    raise CoxFitError("partial likelihood is not finite")
                continue
            if not np.isfinite(trial):
                raise CoxFitError("partial likelihood is not finite")
            max_delta = max(max_delta, abs(trial_beta[j] - beta[j]))
            beta, eta, obj = trial_beta, trial_eta, trial
        history.append(obj)
        if max_delta < tol:
            converged = True
            break
    if not converged:
        log.warning("Cox coordinate descent hit %d cycles without converging", max_cycles)
    bt, bh = pl.breslow(beta)
    return CoxModel(beta, penalty, l1_ratio, bt, bh, cycle, converged, history, list(data.feature_names))


def predict_risk(model: CoxModel, X: np.ndarray) -> np.ndarray:
    """Linear predictor b'x; ranks identically to the hazard ratio exp(b'x)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    return X @ model.coefficients


def predict_survival(model: CoxModel, X: np.ndarray, grid) -> np.ndarray:
    """Matrix of S(t | x) = exp(-H0(t) exp(b'x)); rows are subjects, columns grid times."""
    lp = predict_risk(model, X)
    h0 = model.baseline(np.asarray(grid, dtype=float))
    with np.errstate(over="ignore"):
        return np.exp(-np.outer(np.exp(lp), h0))


@dataclass(frozen=True)
class UnivariateCox:
    feature: str
    beta: float
    se: float
    p_value: float
    estimable: bool = True

    @property
    def sign(self) -> int:
        return int(np.sign(self.beta)) if self.estimable else 0

    def significant(self, alpha: float = 0.05) -> bool:
        return self.estimable and self.p_value < alpha


def cox_univariate(data: SurvivalData, j: int) -> UnivariateCox:
    """Unpenalized single-covariate fit with a Wald test.

    The covariate is standardized for the fit and the estimate mapped back, so
    ``beta`` and ``se`` are on the original scale.
    """
    name = data.feature_names[j]
    x = data.X[:, j]
    sd = float(np.std(x))
    if not sd > 0 or data.n_events == 0:
        return UnivariateCox(name, float("nan"), float("nan"), float("nan"), estimable=False)
    z = (x - x.mean()) / sd
    sub = SurvivalData(data.times, data.events, z[:, None], [name])
    model = fit_cox(sub, penalty=0.0)
    pl = PartialLikelihood(data.times, data.events, z[:, None])
    info = -pl.hessian(model.coefficients)[0, 0]
    if not (info > 0 and np.isfinite(model.coefficients[0])):
        return UnivariateCox(name, float("nan"), float("nan"), float("nan"), estimable=False)
    b = float(model.coefficients[0])
    se = float(1.0 / np.sqrt(info))
    p = float(2.0 * norm.sf(abs(b / se)))
    return UnivariateCox(name, b / sd, se / sd, p)
