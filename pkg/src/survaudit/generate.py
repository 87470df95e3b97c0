"""Gaussian-copula baseline generator and quantile-map equalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import rankdata

from .core import DataTable, DatasetSchema

EIG_FLOOR = 1e-8


@dataclass
class CopulaModel:
    schema: DatasetSchema
    marginals: dict[str, np.ndarray]  # sorted observed values, or category frequencies
    correlation: np.ndarray
    missing_rates: dict[str, float]
    seed: int = 0


def normal_scores(x: np.ndarray) -> np.ndarray:
    """Phi^-1((rank - 0.5) / n) with average ranks for ties."""
    return ndtri((rankdata(x) - 0.5) / x.size)


def repair_correlation(c: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """Nearest-ish PSD correlation: clip eigenvalues, then rescale to unit diagonal."""
    c = 0.5 * (c + c.T)
    w, v = np.linalg.eigh(c)
    fixed = (v * np.maximum(w, floor)) @ v.T
    d = np.sqrt(np.diag(fixed))
    fixed = fixed / np.outer(d, d)
    return 0.5 * (fixed + fixed.T)


def fit_copula(table: DataTable, seed: int = 0) -> CopulaModel:
    """Empirical marginals plus the Pearson correlation of rank normal scores.

    Correlations use the rows where both columns are observed; a pair with
    fewer than three such rows, or a constant column, gets correlation 0.
    """
    schema = table.schema
    names = schema.names
    p = len(names)
    marginals, rates = {}, {}
    scores = np.full((table.n_rows, p), np.nan)
    for j, spec in enumerate(schema.columns):
        obs = table.observed(spec.name)
        if obs.size == 0:
            raise ValueError(f"column {spec.name!r} has no observed values")
        m = table.mask(spec.name)
        rates[spec.name] = float(m.mean())
        if spec.is_continuous:
            marginals[spec.name] = np.sort(obs)
        else:
            k = len(spec.categories)
            marginals[spec.name] = np.bincount(obs, minlength=k) / obs.size
        scores[~m, j] = normal_scores(obs)
    corr = np.eye(p)
    ok = ~np.isnan(scores)
    for a in range(p):
        for b in range(a + 1, p):
            both = ok[:, a] & ok[:, b]
            if both.sum() < 3:
                continue
            sa, sb = scores[both, a], scores[both, b]
            sa, sb = sa - sa.mean(), sb - sb.mean()
            den = np.sqrt(np.dot(sa, sa) * np.dot(sb, sb))
            if den > 0:
                corr[a, b] = corr[b, a] = np.dot(sa, sb) / den
    return CopulaModel(schema, marginals, repair_correlation(corr), rates, seed)


def empirical_quantile(sorted_ref: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Linear interpolation of the quantile function through plotting positions (i - 0.5) / n."""
    n = sorted_ref.size
    pos = (np.arange(n) + 0.5) / n
    return np.interp(u, pos, sorted_ref)


def sample_copula(model: CopulaModel, n: int, with_missingness: bool = False,
                  seed: int | None = None) -> DataTable:
    """Draw ``n`` rows; the result is a function of (model, n, flag, seed) only."""
    schema = model.schema
    rng = np.random.default_rng(model.seed if seed is None else seed)
    p = len(schema.names)
    L = np.linalg.cholesky(model.correlation + 1e-12 * np.eye(p))
    z = rng.standard_normal((n, p)) @ L.T
    u = ndtr(z)
    values, missing = {}, {}
    for j, spec in enumerate(schema.columns):
        marg = model.marginals[spec.name]
        if spec.is_continuous:
            values[spec.name] = empirical_quantile(marg, u[:, j])
        else:
            cum = np.cumsum(marg)
            cum[-1] = 1.0
            values[spec.name] = np.minimum(np.searchsorted(cum, u[:, j], side="right"), marg.size - 1)
        missing[spec.name] = np.zeros(n, dtype=bool)
    if with_missingness:
        draws = rng.random((n, p))
        for j, spec in enumerate(schema.columns):
            missing[spec.name] = draws[:, j] < model.missing_rates[spec.name]
    return DataTable(schema, values, missing)


# -- equalization -----------------------------------------------------------

@dataclass(frozen=True)
class QuantileMap:
    reference: np.ndarray  # sorted reference sample

    def quantile(self, u) -> np.ndarray:
        return empirical_quantile(self.reference, np.asarray(u, dtype=float))


def fit_equalizer(reference) -> QuantileMap:
    ref = np.sort(np.asarray(reference, dtype=float))
    ref = ref[~np.isnan(ref)]
    if np.unique(ref).size < 2:
        raise ValueError("reference needs at least two distinct values")
    return QuantileMap(ref)


def apply_equalizer(qmap: QuantileMap, col) -> np.ndarray:
    """v -> Q_ref(F(v)) with F the mid-rank empirical CDF of ``col``.

    A constant column sits at F = 0.5 and maps to the reference median.
    """
    col = np.asarray(col, dtype=float)
    if col.size == 0:
        raise ValueError("nothing to equalize")
    u = (rankdata(col) - 0.5) / col.size
    return qmap.quantile(u)


def equalize_table(table: DataTable, column: str, reference) -> DataTable:
    """Equalize one continuous column on its observed cells; every other column is left as is."""
    spec = table.schema[column]
    if not spec.is_continuous:
        raise ValueError(f"column {column!r} is not continuous")
    qmap = reference if isinstance(reference, QuantileMap) else fit_equalizer(reference)
    m = table.mask(column)
    out = table.values(column).copy()
    out[~m] = apply_equalizer(qmap, out[~m])
    return table.replace(values={column: out})


__all__ = [
    "CopulaModel", "fit_copula", "sample_copula", "normal_scores", "repair_correlation",
    "empirical_quantile", "QuantileMap", "fit_equalizer", "apply_equalizer", "equalize_table",
]
