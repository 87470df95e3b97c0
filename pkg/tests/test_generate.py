import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_table, small_schema
from survaudit.core import DataTable, validate
from survaudit.fidelity import dimwise_continuous, fidelity_scores, ks_statistic
from survaudit.generate import (apply_equalizer, equalize_table, fit_copula, fit_equalizer, normal_scores,
                                repair_correlation, sample_copula)


def _pair_table(x, y):
    schema = small_schema()
    n = x.size
    rng = np.random.default_rng(0)
    vals = {"age": x, "sex": rng.integers(0, 2, n), "lab": y, "drug": rng.integers(0, 2, n),
            "grade": rng.integers(0, 3, n), "time": rng.uniform(1, 100, n), "event": rng.integers(0, 2, n)}
    return DataTable(schema, vals)


def _idx(table, a, b):
    names = table.schema.names
    return names.index(a), names.index(b)


def test_independent_columns_near_zero_correlation():
    rng = np.random.default_rng(1)
    t = _pair_table(rng.uniform(20, 80, 2000), rng.uniform(0, 100, 2000))
    m = fit_copula(t)
    i, j = _idx(t, "age", "lab")
    assert abs(m.correlation[i, j]) < 0.06


def test_monotone_pair_correlation_one():
    rng = np.random.default_rng(2)
    x = rng.uniform(20, 80, 1000)
    t = _pair_table(x, np.exp(x / 20))
    m = fit_copula(t)
    i, j = _idx(t, "age", "lab")
    assert m.correlation[i, j] > 0.999
    s = sample_copula(m, 500, seed=3)
    rho = np.corrcoef(np.argsort(np.argsort(s.values("age"))), np.argsort(np.argsort(s.values("lab"))))[0, 1]
    assert rho > 0.99


def test_empty_sample_and_determinism(table):
    m = fit_copula(table, seed=4)
    empty = sample_copula(m, 0)
    assert empty.n_rows == 0 and empty.schema is table.schema
    a, b = sample_copula(m, 50), sample_copula(m, 50)
    assert a.equals(b)
    assert not a.equals(sample_copula(m, 50, seed=5))


def test_samples_stay_in_observed_support(table):
    m = fit_copula(table)
    s = sample_copula(m, 300)
    for name in ("age", "lab", "time"):
        obs = table.observed(name)
        assert s.values(name).min() >= obs.min() and s.values(name).max() <= obs.max()
    assert set(np.unique(s.values("grade"))) <= {0, 1, 2}
    assert not s.has_missing()
    assert not validate(s).of_kind("code")


def test_marginal_fidelity_at_large_n():
    t = random_table(800, seed=6, missing=0.0)
    s = sample_copula(fit_copula(t), 10_000, seed=7)
    scores = fidelity_scores(t, s, histograms=False)
    assert scores.dimwise_mean >= 0.97
    assert dimwise_continuous(t.observed("lab"), s.values("lab")) >= 0.97


def test_missing_rate_reproduced():
    t = random_table(2000, seed=8, missing=0.0)
    rng = np.random.default_rng(0)
    t = t.replace(missing={"lab": rng.random(2000) < 0.3})
    m = fit_copula(t)
    assert m.missing_rates["lab"] == pytest.approx(t.mask("lab").mean())
    s = sample_copula(m, 10_000, with_missingness=True, seed=1)
    assert abs(s.mask("lab").mean() - 0.30) <= 0.02
    assert s.mask("age").sum() == 0


def test_refit_recovers_correlation():
    rng = np.random.default_rng(9)
    x = rng.normal(size=3000)
    t = _pair_table(50 + 10 * x, np.exp(0.6 * x + 0.8 * rng.normal(size=3000)))
    m = fit_copula(t)
    m2 = fit_copula(sample_copula(m, 20_000, seed=2))
    np.testing.assert_allclose(m2.correlation, m.correlation, atol=0.05)


def test_all_missing_column_raises(table):
    bad = table.replace(missing={"lab": np.ones(table.n_rows, bool)})
    with pytest.raises(ValueError, match="lab"):
        fit_copula(bad)


def test_repair_correlation_is_psd_with_unit_diagonal():
    c = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])  # indefinite
    r = repair_correlation(c)
    assert np.linalg.eigvalsh(r).min() > 0
    np.testing.assert_allclose(np.diag(r), 1.0)
    np.linalg.cholesky(r)


def test_normal_scores_symmetric():
    z = normal_scores(np.array([3.0, 1.0, 2.0]))
    assert z[2] == 0.0 and z[0] == -z[1]


# -- equalization ---------------------------------------------------------------

def test_equalizer_fixed_point():
    ref = np.random.default_rng(0).exponential(100, 400)
    out = apply_equalizer(fit_equalizer(ref), ref)
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-9)


def test_constant_column_maps_to_median():
    ref = np.arange(1.0, 102.0)
    out = apply_equalizer(fit_equalizer(ref), np.full(7, 3.0))
    np.testing.assert_allclose(out, np.median(ref))


def test_equalizer_errors():
    with pytest.raises(ValueError):
        fit_equalizer([1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        apply_equalizer(fit_equalizer([1.0, 2.0]), [])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 300), st.integers(5, 300))
def test_equalizer_properties(seed, n_ref, n_col):
    rng = np.random.default_rng(seed)
    ref = np.round(rng.gamma(2.0, 50.0, n_ref))
    if np.unique(ref).size < 2:
        ref[0] += 1
    col = rng.normal(size=n_col) * 10
    out = apply_equalizer(fit_equalizer(ref), col)
    # ranks never reverse
    order = np.argsort(col, kind="stable")
    assert np.all(np.diff(out[order]) >= 0)
    assert out.min() >= ref.min() and out.max() <= ref.max()
    # distinct inputs give quantiles at spacing 1/n; KS to the reference is at most about 1/n + 1/m
    if np.unique(col).size == col.size:
        assert ks_statistic(out, ref) <= 1.0 / n_col + 1.0 / n_ref + 1e-12


def test_equalize_table_touches_only_observed_target(table):
    ref = np.random.default_rng(1).uniform(1, 365, 300)
    out = equalize_table(table, "lab", ref)
    for n in table.names:
        np.testing.assert_array_equal(out.mask(n), table.mask(n))
        if n != "lab":
            np.testing.assert_array_equal(out.values(n), table.values(n))
    obs = out.observed("lab")
    assert obs.min() >= ref.min() and obs.max() <= ref.max()
    with pytest.raises(ValueError):
        equalize_table(table, "grade", ref)
