"""Distributional and structural similarity between a real and a synthetic table."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import BINARY, CATEGORICAL, CONTINUOUS, DataTable
from .survival import KMCurve, SurvivalData, UnivariateCox, cox_univariate

log = logging.getLogger(__name__)

ALPHA = 0.05


class DegenerateColumn(ValueError):
    """A score is undefined for the given column(s), e.g. empty or constant."""


# -- dimension-wise ---------------------------------------------------------

def category_frequencies(codes: np.ndarray, n_categories: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    if codes.size == 0:
        raise DegenerateColumn("empty column")
    return np.bincount(codes, minlength=n_categories)[:n_categories] / codes.size


def dimwise_categorical(real_codes, synth_codes, n_categories: int | None = None) -> float:
    """1 - mean over categories of |freq_real - freq_synth|."""
    real_codes = np.asarray(real_codes, dtype=np.int64)
    synth_codes = np.asarray(synth_codes, dtype=np.int64)
    if n_categories is None:
        n_categories = int(max(real_codes.max(initial=-1), synth_codes.max(initial=-1))) + 1
    fr = category_frequencies(real_codes, n_categories)
    fs = category_frequencies(synth_codes, n_categories)
    return float(1.0 - np.mean(np.abs(fr - fs)))


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov D = sup |F_a - F_b| over the pooled sample."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise DegenerateColumn("empty column")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def dimwise_continuous(real_col, synth_col) -> float:
    """1 - KS statistic."""
    return 1.0 - ks_statistic(real_col, synth_col)


# -- column-wise correlation ------------------------------------------------

def correlation_similarity(real_r: float, synth_r: float) -> float:
    return 1.0 - abs(synth_r - real_r) / 2.0


def _pair_observed(table: DataTable, a: str, b: str):
    ok = ~table.mask(a) & ~table.mask(b)
    return table.values(a)[ok], table.values(b)[ok]


def _pearson(x, y) -> float:
    if x.size < 2:
        raise DegenerateColumn("fewer than two complete observations")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(np.dot(xc, xc)), np.sqrt(np.dot(yc, yc))
    if sx == 0 or sy == 0:
        raise DegenerateColumn("zero variance")
    return float(np.clip(np.dot(xc, yc) / (sx * sy), -1.0, 1.0))


def corr_score_continuous(real: DataTable, synth: DataTable, a: str, b: str) -> float:
    r = _pearson(*_pair_observed(real, a, b))
    s = _pearson(*_pair_observed(synth, a, b))
    return correlation_similarity(r, s)


def joint_frequencies(x, y, kx: int, ky: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if x.size == 0:
        raise DegenerateColumn("no complete observations for the pair")
    counts = np.bincount(x * ky + y, minlength=kx * ky)[: kx * ky]
    return counts.reshape(kx, ky) / x.size


def contingency_similarity(real_joint: np.ndarray, synth_joint: np.ndarray) -> float:
    """1 - total variation distance between two normalized contingency tables."""
    return float(1.0 - 0.5 * np.abs(synth_joint - real_joint).sum())


def corr_score_categorical(real: DataTable, synth: DataTable, a: str, b: str) -> float:
    ka = len(real.schema[a].categories)
    kb = len(real.schema[b].categories)
    rj = joint_frequencies(*_pair_observed(real, a, b), ka, kb)
    sj = joint_frequencies(*_pair_observed(synth, a, b), ka, kb)
    return contingency_similarity(rj, sj)


# -- significance battery ---------------------------------------------------

@dataclass(frozen=True)
class SignificanceResult:
    column: str
    test: str
    statistic: float | None
    p_value: float | None
    testable: bool = True
    note: str = ""

    @property
    def differs(self) -> bool:
        return self.testable and self.p_value is not None and self.p_value < ALPHA


def _untestable(column, test, note):
    return SignificanceResult(column, test, None, None, testable=False, note=note)


def welch_test(column: str, a, b) -> SignificanceResult:
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.size < 2 or b.size < 2:
        return _untestable(column, "welch_t", "fewer than two observations")
    if np.var(a) == 0 and np.var(b) == 0:
        if a[0] == b[0]:
            return SignificanceResult(column, "welch_t", 0.0, 1.0)
        return _untestable(column, "welch_t", "both samples constant")
    res = stats.ttest_ind(a, b, equal_var=False)
    return SignificanceResult(column, "welch_t", float(res.statistic), float(res.pvalue))


def mann_whitney_test(column: str, a, b) -> SignificanceResult:
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.size < 1 or b.size < 1:
        return _untestable(column, "mann_whitney_u", "empty sample")
    if np.all(np.concatenate([a, b]) == a[0]):
        return SignificanceResult(column, "mann_whitney_u", a.size * b.size / 2.0, 1.0)
    res = stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
    return SignificanceResult(column, "mann_whitney_u", float(res.statistic), float(res.pvalue))


def fisher_test(column: str, table_2x2) -> SignificanceResult:
    t = np.asarray(table_2x2, dtype=np.int64)
    if t.sum() == 0:
        return _untestable(column, "fisher_exact", "empty table")
    res = stats.fisher_exact(t, alternative="two-sided")
    return SignificanceResult(column, "fisher_exact", float(res.statistic), float(res.pvalue))


def chi_square_test(column: str, counts) -> SignificanceResult:
    c = np.asarray(counts, dtype=float)
    c = c[:, c.sum(axis=0) > 0]
    if c.shape[1] < 2 or np.any(c.sum(axis=1) == 0):
        return _untestable(column, "chi_square", "fewer than two observed categories")
    chi2, p, _, _ = stats.chi2_contingency(c, correction=False)
    return SignificanceResult(column, "chi_square", float(chi2), float(p))


def significance_battery(real: DataTable, synth: DataTable) -> list[SignificanceResult]:
    """Per-column tests on observed (non-imputed) cells.

    Continuous columns get both Welch's t and Mann-Whitney U; binary columns
    Fisher's exact test; multi-category columns Pearson's chi-square.
    """
    out = []
    for spec in real.schema.columns:
        if spec.name not in synth.schema:
            continue
        a, b = real.observed(spec.name), synth.observed(spec.name)
        if spec.kind == CONTINUOUS:
            out.append(welch_test(spec.name, a, b))
            out.append(mann_whitney_test(spec.name, a, b))
        elif spec.kind == BINARY:
            out.append(fisher_test(spec.name, [[np.sum(a == 1), np.sum(a == 0)],
                                               [np.sum(b == 1), np.sum(b == 0)]]))
        else:
            k = len(spec.categories)
            out.append(chi_square_test(spec.name, [np.bincount(a, minlength=k)[:k],
                                                   np.bincount(b, minlength=k)[:k]]))
    return out


# -- Kaplan-Meier similarity ------------------------------------------------

@dataclass(frozen=True)
class KMMetrics:
    optimism: float
    km_divergence: float
    short_sightedness: float
    horizon: float


def km_metrics(real_curve: KMCurve, synth_curve: KMCurve) -> KMMetrics:
    """Signed area gap, mean absolute gap and horizon shortfall of two KM curves.

    Both integrals run over [0, T*] with T* the earlier of the two end times
    and are exact for step functions.  Optimism is positive when the synthetic
    curve lies above the real one.
    """
    t_star = min(real_curve.t_end, synth_curve.t_end)
    if not t_star > 0:
        raise ValueError("common horizon T* must be > 0")
    knots = np.unique(np.concatenate([
        [0.0], real_curve.times[real_curve.times < t_star],
        synth_curve.times[synth_curve.times < t_star], [t_star]]))
    width = np.diff(knots)
    sr = real_curve(knots[:-1])
    ss = synth_curve(knots[:-1])
    optimism = float(np.sum((ss - sr) * width) / t_star)
    divergence = float(np.sum(np.abs(ss - sr) * width) / t_star)
    short = max(0.0, (real_curve.t_end - synth_curve.t_end) / real_curve.t_end)
    return KMMetrics(optimism, divergence, float(short), float(t_star))


# -- prognostic feature preservation ----------------------------------------

@dataclass
class PreservationResult:
    recall: float | None
    precision: float | None
    real: dict[str, UnivariateCox]
    synth: dict[str, UnivariateCox]
    preserved: list[str]

    @property
    def positives_real(self) -> list[str]:
        return [f for f, r in self.real.items() if r.significant()]

    @property
    def positives_synth(self) -> list[str]:
        return [f for f, r in self.synth.items() if r.significant()]


def univariate_table(data: SurvivalData) -> dict[str, UnivariateCox]:
    return {name: cox_univariate(data, j) for j, name in enumerate(data.feature_names)}


def feature_preservation(real: SurvivalData, synth: SurvivalData) -> PreservationResult:
    """Recall/precision of univariate-Cox significant features with matching sign."""
    if list(real.feature_names) != list(synth.feature_names):
        raise ValueError("real and synthetic feature sets differ")
    ur, us = univariate_table(real), univariate_table(synth)
    pos_r = {f for f, r in ur.items() if r.significant()}
    pos_s = {f for f, r in us.items() if r.significant()}
    tp = [f for f in real.feature_names if f in pos_r and f in pos_s and ur[f].sign == us[f].sign]
    recall = len(tp) / len(pos_r) if pos_r else None
    precision = len(tp) / len(pos_s) if pos_s else None
    return PreservationResult(recall, precision, ur, us, tp)


# -- aggregate --------------------------------------------------------------

@dataclass
class FidelityScores:
    dimwise: dict[str, float] = field(default_factory=dict)
    correlation: dict[str, float] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)
    histograms: dict[str, dict] = field(default_factory=dict)

    @property
    def dimwise_mean(self) -> float | None:
        return float(np.mean(list(self.dimwise.values()))) if self.dimwise else None

    @property
    def correlation_mean(self) -> float | None:
        return float(np.mean(list(self.correlation.values()))) if self.correlation else None


def histogram_data(real: DataTable, synth: DataTable, name: str, bins: int = 20) -> dict:
    a, b = real.observed(name), synth.observed(name)
    pooled = np.concatenate([a, b])
    if pooled.size == 0:
        return {}
    edges = np.histogram_bin_edges(pooled, bins=bins)
    return {"edges": edges.tolist(),
            "real": np.histogram(a, edges)[0].tolist(),
            "synthetic": np.histogram(b, edges)[0].tolist()}


def fidelity_scores(real: DataTable, synth: DataTable, histograms: bool = True) -> FidelityScores:
    """Dimension-wise scores for every column and correlation scores for every
    same-type column pair; mixed continuous/categorical pairs are not scored."""
    out = FidelityScores()
    cols = [c for c in real.schema.columns if c.name in synth.schema]
    for spec in cols:
        try:
            if spec.kind == CONTINUOUS:
                out.dimwise[spec.name] = dimwise_continuous(real.observed(spec.name), synth.observed(spec.name))
                if histograms:
                    out.histograms[spec.name] = histogram_data(real, synth, spec.name)
            else:
                out.dimwise[spec.name] = dimwise_categorical(
                    real.observed(spec.name), synth.observed(spec.name), len(spec.categories))
        except DegenerateColumn as exc:
            out.skipped[spec.name] = str(exc)
    cont = [c.name for c in cols if c.kind == CONTINUOUS]
    cat = [c.name for c in cols if c.kind in (BINARY, CATEGORICAL)]
    for group, fn in ((cont, corr_score_continuous), (cat, corr_score_categorical)):
        for a, b in itertools.combinations(group, 2):
            key = f"{a}|{b}"
            try:
                out.correlation[key] = fn(real, synth, a, b)
            except DegenerateColumn as exc:
                out.skipped[key] = str(exc)
    return out
