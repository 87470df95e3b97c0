"""Random survival forest with log-rank splitting and Nelson-Aalen leaves."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .data import SurvivalData
from .km import nelson_aalen, step_lookup


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 50
    max_depth: int = 5
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    bootstrap: bool = True
    max_features: int | None = None  # default: floor(sqrt(p)), at least 1

    def __post_init__(self):
        if self.n_estimators < 1 or self.max_depth < 0:
            raise ValueError("n_estimators must be >= 1 and max_depth >= 0")
        if self.min_samples_split < 2 or self.min_samples_leaf < 1:
            raise ValueError("min_samples_split >= 2 and min_samples_leaf >= 1 required")


@dataclass
class SurvivalTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_size: np.ndarray
    leaf_times: dict[int, np.ndarray]
    leaf_cumhaz: dict[int, np.ndarray]

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_times)

    @property
    def depth(self) -> int:
        depth = {0: 0}
        for node in range(self.feature.size):
            if self.feature[node] >= 0:
                depth[int(self.left[node])] = depth[node] + 1
                depth[int(self.right[node])] = depth[node] + 1
        return max(depth.values())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf node id reached by each row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def cumulative_hazard(self, X: np.ndarray, grid: np.ndarray) -> np.ndarray:
        leaves = self.apply(X)
        out = np.empty((X.shape[0], grid.size))
        for leaf in np.unique(leaves):
            out[leaves == leaf] = step_lookup(self.leaf_times[int(leaf)], self.leaf_cumhaz[int(leaf)], grid)
        return out


def logrank_split(x: np.ndarray, at_risk: np.ndarray, dead: np.ndarray,
                  min_leaf: int) -> tuple[float, float]:
    """Best threshold on one feature by the two-sample log-rank statistic.

    ``at_risk``/``dead`` are (rows x distinct event times) indicator matrices.
    Returns (statistic, threshold); statistic is -1 when no admissible split exists.
    """
    m = x.size
    order = np.argsort(x, kind="stable")
    xs = x[order]
    k = np.arange(m - 1)
    ok = (xs[:-1] < xs[1:]) & (k + 1 >= min_leaf) & (m - k - 1 >= min_leaf)
    if not ok.any():
        return -1.0, float("nan")
    Y = at_risk.sum(axis=0).astype(float)
    D = dead.sum(axis=0).astype(float)
    yl = np.cumsum(at_risk[order], axis=0)[:-1][ok].astype(float)
    dl = np.cumsum(dead[order], axis=0)[:-1][ok].astype(float)
    frac = yl / Y
    num = (dl - frac * D).sum(axis=1)
    var = (frac * (1.0 - frac) * (Y - D) / np.maximum(Y - 1.0, 1.0) * D).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(var > 0, num * num / var, 0.0)
    best = int(np.argmax(stat))
    pos = k[ok][best]
    return float(stat[best]), float(0.5 * (xs[pos] + xs[pos + 1]))


@numba.njit(cache=True)
def _scan(order, xs, q, died, min_leaf, wp, ap, b):
    """Incremental log-rank scan over thresholds of one feature.

    Subject ``i`` is at risk at event index ``e`` iff ``e < q[i]``.  The
    numerator and the linear part of the variance are sums of per-subject
    prefix terms; only the quadratic variance term needs the running
    left-group risk-set sizes.
    """
    m = order.size
    n_ev = b.size
    yl = np.zeros(n_ev)
    num = 0.0
    lin = 0.0
    quad = 0.0
    best_stat = -1.0
    best_pos = -1
    for k in range(m - 1):
        i = order[k]
        qi = q[i]
        num += died[i] - wp[qi]
        lin += ap[qi]
        for e in range(qi):
            quad += b[e] * (2.0 * yl[e] + 1.0)
            yl[e] += 1.0
        if xs[k] < xs[k + 1] and k + 1 >= min_leaf and m - k - 1 >= min_leaf:
            var = lin - quad
            stat = num * num / var if var > 1e-12 * max(lin, 1.0) else 0.0
            if stat > best_stat:
                best_stat = stat
                best_pos = k
    return best_stat, best_pos


def _node_terms(te, ee):
    """Per-subject event indices and per-event prefix weights for a node."""
    ev, D = np.unique(te[ee == 1], return_counts=True)
    q = np.searchsorted(ev, te, side="right")
    Y = (te.size - np.searchsorted(np.sort(te), ev, side="left")).astype(float)
    D = D.astype(float)
    v = D * (Y - D) / np.maximum(Y - 1.0, 1.0)
    wp = np.concatenate([[0.0], np.cumsum(D / Y)])
    ap = np.concatenate([[0.0], np.cumsum(v / Y)])
    return q, wp, ap, v / (Y * Y)


def fast_logrank_split(x, q, died, min_leaf, wp, ap, b) -> tuple[float, float]:
    """Same contract as :func:`logrank_split`, computed in O(rows x events) without matrices."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    stat, pos = _scan(order, xs, q, died, min_leaf, wp, ap, b)
    if pos < 0:
        return -1.0, float("nan")
    return float(stat), float(0.5 * (xs[pos] + xs[pos + 1]))


def _grow(X, t, e, params: ForestParams, rng: np.random.Generator) -> SurvivalTree:
    n, p = X.shape
    mtry = params.max_features or max(1, int(math.isqrt(p)))
    mtry = min(mtry, p)
    feature, threshold, left, right, size = [], [], [], [], []
    leaf_times, leaf_cumhaz = {}, {}

    def new_node(idx):
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        size.append(idx.size)
        return len(feature) - 1

    def make_leaf(node, idx):
        leaf_times[node], leaf_cumhaz[node] = nelson_aalen(t[idx], e[idx])

    root = new_node(np.arange(n))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        m = idx.size
        te, ee = t[idx], e[idx]
        if (depth >= params.max_depth or m < params.min_samples_split
                or m < 2 * params.min_samples_leaf or not ee.any()):
            make_leaf(node, idx)
            continue
        q, wp, ap, b = _node_terms(te, ee)
        died = ee.astype(float)
        cands = rng.choice(p, size=mtry, replace=False)
        best_stat, best_f, best_thr = 0.0, -1, np.nan
        for f in cands:
            stat, thr = fast_logrank_split(X[idx, f], q, died, params.min_samples_leaf, wp, ap, b)
            if stat > best_stat:
                best_stat, best_f, best_thr = stat, int(f), thr
        if best_f < 0:
            make_leaf(node, idx)
            continue
        go_left = X[idx, best_f] <= best_thr
        li, ri = idx[go_left], idx[~go_left]
        ln, rn = new_node(li), new_node(ri)
        feature[node], threshold[node], left[node], right[node] = best_f, best_thr, ln, rn
        stack.append((rn, ri, depth + 1))
        stack.append((ln, li, depth + 1))
    return SurvivalTree(np.array(feature), np.array(threshold), np.array(left), np.array(right),
                        np.array(size), leaf_times, leaf_cumhaz)


@dataclass
class ForestModel:
    params: ForestParams
    trees: list[SurvivalTree]
    n_features: int
    max_time: float
    seed: int = 0
    feature_names: list[str] = field(default_factory=list)
    event_times: np.ndarray = field(default_factory=lambda: np.empty(0))  # distinct training event times


def fit_rsf(data: SurvivalData, params: ForestParams | None = None, seed: int = 0,
            threads: int = 1) -> ForestModel:
    """Grow ``n_estimators`` trees; tree ``i`` is fully determined by ``(seed, i)``."""
    params = params or ForestParams()
    n = len(data)
    if n < 2 * params.min_samples_split:
        raise ValueError(f"need at least {2 * params.min_samples_split} rows, got {n}")
    children = np.random.SeedSequence(seed).spawn(params.n_estimators)

    def one(ss):
        rng = np.random.default_rng(ss)
        rows = rng.integers(0, n, n) if params.bootstrap else np.arange(n)
        return _grow(data.X[rows], data.times[rows], data.events[rows], params, rng)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            trees = list(pool.map(one, children))
    else:
        trees = [one(ss) for ss in children]
    max_time = float(data.times[data.events == 1].max()) if data.n_events else float(data.times.max())
    return ForestModel(params, trees, data.X.shape[1], max_time, seed, list(data.feature_names),
                       np.unique(data.times[data.events == 1]))


def _check(model: ForestModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    return X


def forest_cumulative_hazard(model: ForestModel, X, grid) -> np.ndarray:
    X = _check(model, X)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    total = np.zeros((X.shape[0], grid.size))
    for tree in model.trees:
        total += tree.cumulative_hazard(X, grid)
    return total / len(model.trees)


def forest_survival(model: ForestModel, X, grid) -> np.ndarray:
    return np.exp(-forest_cumulative_hazard(model, X, grid))


def forest_risk(model: ForestModel, X, horizon: float | None = None) -> np.ndarray:
    """Risk score for ranking.

    By default this is the ensemble mortality: the ensemble cumulative hazard
    summed over the distinct training event times.  With ``horizon`` it is the
    cumulative hazard at that single time instead, which saturates in small
    leaves and ranks poorly for deep trees.
    """
    if horizon is not None:
        return forest_cumulative_hazard(model, X, [horizon])[:, 0]
    grid = model.event_times if model.event_times.size else np.array([model.max_time])
    return forest_cumulative_hazard(model, X, grid).sum(axis=1)
