import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import random_table
from survaudit.survival import (CoxFitError, ForestParams, PartialLikelihood, SurvivalData, brier_curve, c_index,
                                cox_univariate, fit_cox, fit_rsf, forest_risk, forest_survival, ibs_grid,
                                integrated_brier, kaplan_meier, nelson_aalen, predict_risk, predict_survival)
from survaudit.survival.cox import penalty_value
from survaudit.survival.forest import _node_terms, fast_logrank_split, logrank_split
from survaudit.survival.metrics import G_MIN


def _instance(rng, n, p, ties=True):
    X = rng.normal(size=(n, p))
    t = rng.exponential(np.exp(-X @ rng.normal(0, 0.5, p)))
    if ties:
        t = np.ceil(t * 4) / 4 + 0.25
    e = (rng.random(n) < 0.7).astype(int)
    return t, e, X


# -- Kaplan-Meier -------------------------------------------------------------

def test_km_hand_case():
    km = kaplan_meier([1, 2, 3], [1, 0, 1])
    assert km(1) == pytest.approx(2 / 3, abs=1e-15)
    assert km(3) == 0.0
    assert km(0.5) == 1.0


def test_km_all_censored_and_single():
    km = kaplan_meier([4, 2, 9], [0, 0, 0])
    assert np.all(km.survival == 1.0)
    assert kaplan_meier([5], [1])(5) == 0.0


def test_km_censored_at_event_time_counts_at_risk():
    km = kaplan_meier([2, 2, 3], [1, 0, 1])
    assert km(2) == pytest.approx(2 / 3)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 30), min_size=1, max_size=60))
def test_km_uncensored_is_empirical_survival(times):
    km = kaplan_meier(times, np.ones(len(times), int))
    t = np.array(times, float)
    for u in np.unique(t):
        # exact equality: the anchor form divides survivors by n once
        assert km(u) == np.sum(t > u) / t.size


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 15), st.integers(0, 1)), min_size=1, max_size=40))
def test_km_matches_product_limit_loop(pairs):
    t = [p[0] for p in pairs]
    e = [p[1] for p in pairs]
    km = kaplan_meier(t, e)
    S, S_minus = oracles.product_limit(t, e)
    for u in sorted(set(t)) + [0.5, 16.0]:
        assert km(u) == pytest.approx(S(u), abs=1e-12)
        assert km.left_limit(u) == pytest.approx(S_minus(u), abs=1e-12)
    s = km.survival
    assert np.all(np.diff(s) <= 0) and np.all((s >= 0) & (s <= 1))


def test_km_area_is_exact_step_integral():
    km = kaplan_meier([1, 2, 4], [1, 1, 1])
    # S = 1 on [0,1), 2/3 on [1,2), 1/3 on [2,4), 0 after
    assert km.area(5) == pytest.approx(1 + 2 / 3 + 2 / 3)


def test_nelson_aalen():
    t, h = nelson_aalen([1, 2, 2, 3], [1, 1, 0, 1])
    np.testing.assert_allclose(t, [1, 2, 3])
    np.testing.assert_allclose(h, [1 / 4, 1 / 4 + 1 / 3, 1 / 4 + 1 / 3 + 1])


def test_km_empty_raises():
    with pytest.raises(ValueError):
        kaplan_meier([], [])


# -- Cox ----------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_efron_loglik_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    t, e, X = _instance(rng, 30, 3)
    beta = rng.normal(0, 0.5, 3)
    pl = PartialLikelihood(t, e, X)
    assert pl.loglik(beta) == pytest.approx(oracles.efron_loglik(list(t), list(e), X, beta), rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_hessian_matches_gradient_differences(seed):
    rng = np.random.default_rng(seed)
    t, e, X = _instance(rng, 40, 3)
    pl = PartialLikelihood(t, e, X)
    b = rng.normal(0, 0.3, 3)
    h = 1e-5
    num = np.column_stack([(pl.gradient(b + h * np.eye(3)[j]) - pl.gradient(b - h * np.eye(3)[j])) / (2 * h)
                           for j in range(3)])
    np.testing.assert_allclose(pl.hessian(b), num, rtol=1e-5, atol=1e-7)
    eta = X[pl.order] @ b
    for j in range(3):
        g, hj = pl.coordinate(eta, j)
        assert g == pytest.approx(pl.gradient(b)[j], rel=1e-10)
        assert hj == pytest.approx(pl.hessian(b)[j, j], rel=1e-10)


def test_symmetric_binary_covariate_gives_zero():
    t = np.array([1, 2, 3, 4, 5, 1, 2, 3, 4, 5], float)
    e = np.array([1, 1, 0, 1, 1, 1, 1, 0, 1, 1])
    x = np.array([0] * 5 + [1] * 5, float)
    m = fit_cox(SurvivalData(t, e, x[:, None]))
    assert abs(m.coefficients[0]) < 1e-6


def test_full_shrinkage_with_large_lasso():
    rng = np.random.default_rng(0)
    t, e, X = _instance(rng, 100, 4)
    m = fit_cox(SurvivalData(t, e, X), penalty=50.0, l1_ratio=1.0)
    assert np.all(m.coefficients == 0.0)


def test_no_events_raises():
    with pytest.raises(CoxFitError):
        fit_cox(SurvivalData([1.0, 2.0], [0, 0], np.zeros((2, 1))))


def test_objective_history_monotone_under_penalties():
    rng = np.random.default_rng(3)
    t, e, X = _instance(rng, 200, 6)
    X[:, 5] = X[:, 4] * 0.99 + 0.01 * rng.normal(size=200)  # near-collinear pair
    for lam, a in [(0.0, 0.0), (0.1, 0.5), (1.0, 1.0), (0.1, 0.0)]:
        m = fit_cox(SurvivalData(t, e, X), penalty=lam, l1_ratio=a)
        assert np.all(np.diff(m.objective_history) <= 0)
        if lam > 0:  # the unpenalized collinear fit is ill-conditioned and may hit the cycle cap
            assert m.converged


def test_penalized_fit_is_stationary():
    """KKT conditions of the elastic-net objective at the returned coefficients."""
    rng = np.random.default_rng(4)
    t, e, X = _instance(rng, 150, 5)
    lam, a = 0.1, 0.5
    m = fit_cox(SurvivalData(t, e, X), penalty=lam, l1_ratio=a)
    pl = PartialLikelihood(t, e, X)
    g = -pl.gradient(m.coefficients) / len(t) + lam * (1 - a) * m.coefficients
    b = m.coefficients
    nz = b != 0
    np.testing.assert_allclose(g[nz] + lam * a * np.sign(b[nz]), 0.0, atol=1e-5)
    assert np.all(np.abs(g[~nz]) <= lam * a + 1e-6)
    assert penalty_value(b, lam, a) >= 0


def test_cox_row_permutation_invariance():
    rng = np.random.default_rng(5)
    t, e, X = _instance(rng, 120, 3)
    a = fit_cox(SurvivalData(t, e, X), penalty=0.1, l1_ratio=0.5)
    p = rng.permutation(120)
    b = fit_cox(SurvivalData(t[p], e[p], X[p]), penalty=0.1, l1_ratio=0.5)
    np.testing.assert_allclose(a.coefficients, b.coefficients, atol=1e-9)


def test_predictions():
    rng = np.random.default_rng(6)
    t, e, X = _instance(rng, 100, 2)
    m = fit_cox(SurvivalData(t, e, X))
    zero = type(m)(np.zeros(2), 0, 0, m.baseline_times, m.baseline_cumhaz)
    r = predict_risk(zero, X)
    assert np.all(r == 0)
    grid = np.array([0.0, 0.5, 1.0, 2.0])
    S = predict_survival(zero, X, grid)
    np.testing.assert_allclose(S, np.tile(np.exp(-zero.baseline(grid)), (100, 1)))
    assert np.all(predict_survival(m, X, [0.0]) == 1.0)
    j = int(np.argmax(m.coefficients))
    x = X[:1].copy()
    x2 = x.copy()
    x2[0, j] = 2 * x[0, j] + 1 if x[0, j] >= 0 else 1.0
    assert predict_risk(m, x2)[0] > predict_risk(m, x)[0]
    assert np.all(np.diff(m.baseline_cumhaz) >= 0)
    with pytest.raises(ValueError, match="features"):
        predict_risk(m, X[:, :1])


def test_univariate_protective_sign_and_constant():
    rng = np.random.default_rng(7)
    n = 2000
    x = rng.normal(size=n)
    t = rng.exponential(np.exp(0.5 * x))  # hazard exp(-0.5 x)
    d = SurvivalData(t, np.ones(n, int), np.column_stack([x, np.ones(n)]), ["x", "const"])
    u = cox_univariate(d, 0)
    assert u.sign == -1 and u.p_value < 0.05
    assert abs(u.beta + 0.5) < 0.1
    c = cox_univariate(d, 1)
    assert not c.estimable and c.sign == 0 and not c.significant()


def test_univariate_scale_equivariance():
    rng = np.random.default_rng(8)
    t, e, X = _instance(rng, 300, 1)
    a = cox_univariate(SurvivalData(t, e, X), 0)
    b = cox_univariate(SurvivalData(t, e, 10 * X), 0)
    assert b.beta == pytest.approx(a.beta / 10, rel=1e-6)
    assert b.p_value == pytest.approx(a.p_value, rel=1e-6)


def test_univariate_noise_calibration():
    # 1000 null replicates: the Wald test should flag about 5% of them
    rng = np.random.default_rng(2024)
    hits = 0
    for _ in range(1000):
        n = 80
        x = rng.normal(size=n)
        t = rng.exponential(size=n)
        e = (rng.random(n) < 0.8).astype(int)
        hits += cox_univariate(SurvivalData(t, e, x[:, None]), 0).significant()
    assert 0.03 <= hits / 1000 <= 0.07


# -- forest -------------------------------------------------------------------

def _forest_data(seed=0, n=150):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 4))
    t = np.ceil(rng.exponential(np.exp(-X[:, 0])) * 50)
    e = (rng.random(n) < 0.75).astype(int)
    return SurvivalData(t, e, X)


@pytest.mark.parametrize("seed", range(6))
def test_logrank_numba_matches_numpy_and_loop(seed):
    rng = np.random.default_rng(seed)
    n = 40
    x = np.round(rng.normal(size=n), 1)
    t = np.ceil(rng.exponential(size=n) * 10)
    e = (rng.random(n) < 0.7).astype(int)
    ev = np.unique(t[e == 1])
    at_risk = (t[:, None] >= ev[None, :]).astype(float)
    dead = ((t[:, None] == ev[None, :]) & (e[:, None] == 1)).astype(float)
    for min_leaf in (1, 3):
        s_ref, thr_ref = logrank_split(x, at_risk, dead, min_leaf)
        q, wp, ap, b = _node_terms(t, e)
        s_fast, thr_fast = fast_logrank_split(x, q, e.astype(float), min_leaf, wp, ap, b)
        assert s_fast == pytest.approx(s_ref, rel=1e-9)
        assert thr_fast == thr_ref
        assert s_ref == pytest.approx(oracles.logrank_stat(list(x), list(t), list(e), thr_ref), rel=1e-9)


def test_depth_zero_forest_is_marginal_nelson_aalen():
    d = _forest_data()
    m = fit_rsf(d, ForestParams(n_estimators=3, max_depth=0, bootstrap=False), seed=1)
    assert all(tree.n_leaves == 1 for tree in m.trees)
    et, h = nelson_aalen(d.times, d.events)
    grid = et[:5]
    np.testing.assert_allclose(forest_survival(m, d.X[:2], grid), np.exp(-np.tile(h[:5], (2, 1))))


def test_separable_feature_chosen_first():
    rng = np.random.default_rng(11)
    n = 200
    X = rng.normal(size=(n, 4))
    t = np.where(X[:, 2] > 0, rng.uniform(1, 10, n), rng.uniform(100, 110, n))
    e = np.ones(n, int)
    m = fit_rsf(SurvivalData(t, e, X), ForestParams(n_estimators=50, max_depth=2, max_features=4), seed=3)
    first = np.array([tree.feature[0] for tree in m.trees])
    assert np.mean(first == 2) >= 0.9


def test_forest_determinism_and_leaf_sizes():
    d = _forest_data(2)
    p = ForestParams(n_estimators=5, max_depth=6, min_samples_leaf=4, min_samples_split=5)
    a, b = fit_rsf(d, p, seed=9), fit_rsf(d, p, seed=9)
    grid = np.array([10.0, 30.0, 60.0])
    np.testing.assert_array_equal(forest_survival(a, d.X, grid), forest_survival(b, d.X, grid))
    threaded = fit_rsf(d, p, seed=9, threads=3)
    np.testing.assert_array_equal(forest_survival(a, d.X, grid), forest_survival(threaded, d.X, grid))
    for tree in a.trees:
        leaves = tree.feature < 0
        assert np.all(tree.leaf_size[leaves] >= 4)
        assert tree.depth <= 6
    c = fit_rsf(d, p, seed=10)
    assert not np.array_equal(forest_risk(a, d.X), forest_risk(c, d.X))


def test_forest_errors():
    d = _forest_data(n=3)
    with pytest.raises(ValueError):
        fit_rsf(d, ForestParams(min_samples_split=2))
    with pytest.raises(ValueError):
        ForestParams(min_samples_leaf=0)
    m = fit_rsf(_forest_data(), ForestParams(n_estimators=2))
    with pytest.raises(ValueError, match="features"):
        forest_risk(m, np.zeros((2, 3)))


def test_forest_discriminates():
    d = _forest_data(4, n=300)
    m = fit_rsf(d, ForestParams(n_estimators=20, max_depth=4), seed=0)
    assert c_index(d.times, d.events, forest_risk(m, d.X)) > 0.65


# -- C-index ------------------------------------------------------------------

def test_c_index_examples():
    assert c_index([2, 4, 6], [1, 1, 0], [0.9, 0.3, 0.5]) == pytest.approx(2 / 3)
    assert c_index([1, 2, 3, 4], [1, 1, 1, 1], [4, 3, 2, 1]) == 1.0
    assert c_index([1, 2, 3, 4], [1, 1, 1, 0], [1, 1, 1, 1]) == 0.5
    with pytest.raises(ValueError):
        c_index([1, 2], [0, 0], [1, 2])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 60))
def test_c_index_rank_invariance_and_oracle(seed, n):
    rng = np.random.default_rng(seed)
    t = rng.integers(1, 10, n).astype(float)
    e = rng.integers(0, 2, n)
    e[0] = 1
    t[0] = 0.5
    r = np.round(rng.normal(size=n), 1)
    c = c_index(t, e, r, chunk=7)
    assert c == pytest.approx(oracles.c_index_pairs(t, e, r), abs=1e-12)
    assert c_index(t, e, np.exp(3 * r) + 2) == pytest.approx(c, abs=1e-12)


# -- integrated Brier score ---------------------------------------------------

def test_ibs_grid_endpoints_and_inside():
    t = np.arange(1, 101, dtype=float)
    e = (np.arange(100) % 2).astype(int)
    g = ibs_grid(t, e)
    lo, hi = np.percentile(t, [10, 90])
    assert g[0] == lo and g[-1] == hi
    assert np.all(np.diff(g) > 0)
    inner = g[1:-1]
    assert np.all(np.isin(inner, t[e == 1]))


def test_ibs_constant_half_no_censoring():
    rng = np.random.default_rng(0)
    t = rng.uniform(1, 100, 50)
    e = np.ones(50, int)
    grid = ibs_grid(t, e)
    S = np.full((50, grid.size), 0.5)
    km = kaplan_meier(t, 1 - e)
    assert abs(integrated_brier(S, grid, t, e, km) - 0.25) <= 1e-12


def test_ibs_oracle_predictions_zero():
    rng = np.random.default_rng(1)
    t = rng.uniform(1, 100, 40)
    e = np.ones(40, int)
    grid = ibs_grid(t, e)
    S = (t[:, None] > grid[None, :]).astype(float)
    assert integrated_brier(S, grid, t, e, kaplan_meier(t, 1 - e)) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_ibs_matches_literal_graf(seed):
    rng = np.random.default_rng(seed)
    n_tr, n_te = 25, 15
    tr_t = np.ceil(rng.exponential(20, n_tr))
    tr_e = (rng.random(n_tr) < 0.6).astype(int)
    te_t = np.ceil(rng.exponential(20, n_te))
    te_e = (rng.random(n_te) < 0.6).astype(int)
    te_e[0] = 1
    grid = ibs_grid(te_t, te_e)
    S = rng.uniform(0, 1, (n_te, grid.size))
    curve, ibs = oracles.graf_brier(S.tolist(), list(grid), list(te_t), list(te_e), list(tr_t), list(tr_e))
    bs, _ = brier_curve(S, grid, te_t, te_e, kaplan_meier(tr_t, 1 - tr_e))
    np.testing.assert_allclose(bs, curve, rtol=0, atol=1e-12)
    assert abs(integrated_brier(S, grid, te_t, te_e, kaplan_meier(tr_t, 1 - tr_e)) - ibs) <= 1e-12


def test_ibs_weight_cap_flag():
    tr_t = np.array([1.0, 2.0, 3.0])
    tr_e = np.array([0, 0, 0])  # censoring survival drops to 0
    t = np.array([1.5, 4.0, 5.0])
    e = np.array([1, 0, 1])
    grid = np.array([3.5, 4.5])
    _, capped = brier_curve(np.full((3, 2), 0.5), grid, t, e, kaplan_meier(tr_t, 1 - tr_e))
    assert capped
    assert G_MIN == 1e-4


def test_from_table_expands_and_checks(table):
    from survaudit.impute import impute_median
    d = SurvivalData.from_table(impute_median(table))
    assert d.feature_names == ["age", "sex", "lab", "drug", "grade=mid", "grade=high"]
    with pytest.raises(ValueError):
        SurvivalData.from_table(table)  # features still missing
    with pytest.raises(ValueError):
        SurvivalData([0.0, 1.0], [1, 1], np.zeros((2, 1)))


def test_random_table_smoke():
    t = random_table(30)
    assert t.n_rows == 30
