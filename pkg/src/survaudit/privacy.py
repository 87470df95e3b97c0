"""Privacy assessments: exact match, membership inference, attribute inference, NNAA."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._linear import fit_logistic_ovr, predict_ovr, solve_normal
from .core import BINARY, CONTINUOUS, MIN_MAX, DataTable, fit_normalization

RELATIVE_TOL = 0.05
# absorbs representation error so that a difference of exactly 5% counts as within 5%
_ROUNDING_SLACK = 1e-9


def _require_complete(*tables: DataTable):
    for t in tables:
        if t.has_missing():
            raise ValueError("privacy metrics need complete (imputed) tables")


def within_relative(pred, true, tol: float = RELATIVE_TOL) -> np.ndarray:
    """|pred - true| <= tol * |true|; a zero reference only accepts an exact zero."""
    pred = np.asarray(pred, dtype=float)
    true = np.asarray(true, dtype=float)
    return np.abs(pred - true) <= tol * np.abs(true) * (1.0 + _ROUNDING_SLACK)


def encode(table: DataTable, params, columns=None) -> np.ndarray:
    """Numeric matrix for distance computations.

    Continuous columns are scaled with ``params``; binary stay 0/1; a
    categorical column becomes a full one-hot block scaled by 1/sqrt(2) so two
    different categories sit at distance 1, as two binary values do.
    """
    columns = table.names if columns is None else columns
    blocks = []
    for name in columns:
        spec = table.schema[name]
        v = table.values(name)
        if spec.kind == CONTINUOUS:
            blocks.append(params.transform(name, v)[:, None])
        elif spec.kind == BINARY:
            blocks.append(v.astype(float)[:, None])
        else:
            k = len(spec.categories)
            blocks.append((v[:, None] == np.arange(k)[None, :]) / np.sqrt(2.0))
    return np.hstack(blocks) if blocks else np.empty((table.n_rows, 0))


# -- exact match ------------------------------------------------------------

@dataclass
class ExactMatchResult:
    rate: float
    n_matched: int
    pairs: list[tuple[int, int]] = field(default_factory=list)  # (synthetic row, first real match)


def exact_match(real: DataTable, synth: DataTable, max_pairs: int = 100) -> ExactMatchResult:
    """Share of synthetic rows that replicate some real row.

    Categorical/binary cells must be equal and numeric cells within 5% of the
    real value; a missing cell only matches a missing cell.
    """
    cat = [c.name for c in real.schema.columns if c.kind != CONTINUOUS]
    num = [c.name for c in real.schema.columns if c.kind == CONTINUOUS]

    def cat_keys(t: DataTable):
        if not cat:
            return np.zeros((t.n_rows, 0), dtype=np.int64)
        return np.column_stack([np.where(t.mask(n), -1, t.values(n)) for n in cat])

    def num_block(t: DataTable):
        if not num:
            return np.zeros((t.n_rows, 0)), np.zeros((t.n_rows, 0), dtype=bool)
        return (np.column_stack([t.values(n) for n in num]),
                np.column_stack([t.mask(n) for n in num]))

    rk, sk = cat_keys(real), cat_keys(synth)
    rv, rm = num_block(real)
    sv, sm = num_block(synth)
    groups: dict[bytes, list[int]] = {}
    for i in range(real.n_rows):
        groups.setdefault(rk[i].tobytes(), []).append(i)
    group_idx = {k: np.asarray(v) for k, v in groups.items()}

    matched, pairs = 0, []
    for j in range(synth.n_rows):
        cand = group_idx.get(sk[j].tobytes())
        if cand is None:
            continue
        r_vals, r_mask = rv[cand], rm[cand]
        same_mask = (r_mask == sm[j]).all(axis=1)
        with np.errstate(invalid="ignore"):
            close = within_relative(sv[j][None, :], r_vals) | r_mask
        ok = same_mask & close.all(axis=1)
        if ok.any():
            matched += 1
            if len(pairs) < max_pairs:
                pairs.append((j, int(cand[np.argmax(ok)])))
    rate = matched / synth.n_rows if synth.n_rows else 0.0
    return ExactMatchResult(rate, matched, pairs)


# -- membership inference ---------------------------------------------------

@dataclass
class MIAResult:
    accuracy: float
    fold_accuracies: list[float]
    thresholds: list[float]


def mia_accuracy(train: DataTable, test: DataTable, synth: DataTable, folds: int = 4,
                 seed: int = 0) -> MIAResult:
    """Distance-to-closest-synthetic-record membership attack.

    The training rows are shuffled into ``folds`` disjoint parts; each part is
    balanced against the non-members (test rows) by subsampling the larger
    side.  A record is called a member when its nearest-synthetic distance is
    strictly below the median of the pooled distances.
    """
    _require_complete(train, test, synth)
    if test.n_rows > train.n_rows:
        raise ValueError("non-member set is larger than the member set")
    params = fit_normalization([train, synth], MIN_MAX)
    tree = cKDTree(encode(synth, params))
    d_train = tree.query(encode(train, params), k=1)[0]
    d_test = tree.query(encode(test, params), k=1)[0]
    rng = np.random.default_rng(seed)
    parts = np.array_split(rng.permutation(train.n_rows), folds)
    accs, thetas = [], []
    for f, part in enumerate(parts):
        frng = np.random.default_rng([seed, f])
        n_bal = min(part.size, test.n_rows)
        members = d_train[np.sort(frng.choice(part, n_bal, replace=False))]
        nonmembers = d_test[np.sort(frng.choice(test.n_rows, n_bal, replace=False))]
        pooled = np.concatenate([members, nonmembers])
        theta = float(np.median(pooled))
        pred = pooled < theta
        truth = np.concatenate([np.ones(n_bal, bool), np.zeros(n_bal, bool)])
        accs.append(float(np.mean(pred == truth)))
        thetas.append(theta)
    return MIAResult(float(np.mean(accs)), accs, thetas)


# -- attribute inference ----------------------------------------------------

@dataclass
class AIATarget:
    linear: float
    knn: float
    baseline_linear: float
    baseline_knn: float
    degenerate: bool = False


@dataclass
class AIAResult:
    linear_score: float
    knn_score: float
    baseline_linear: float
    baseline_knn: float
    targets: dict[str, AIATarget]


def _knn_predict(tree: cKDTree, y: np.ndarray, Xq: np.ndarray, k: int, categorical: bool,
                 n_classes: int = 0) -> np.ndarray:
    k = min(k, y.size)
    d, idx = tree.query(Xq, k=k)
    if k == 1:
        d, idx = d[:, None], idx[:, None]
    exact = d == 0
    w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), 1.0 / np.where(exact, 1.0, d))
    yk = y[idx]
    if not categorical:
        return (w * yk).sum(axis=1) / w.sum(axis=1)
    votes = np.zeros((Xq.shape[0], n_classes))
    for c in range(n_classes):
        votes[:, c] = (w * (yk == c)).sum(axis=1)
    return np.argmax(votes, axis=1)


def _attack_accuracy(true, pred, categorical: bool) -> float:
    if true.size == 0:
        return float("nan")
    if categorical:
        return float(np.mean(pred == true))
    return float(np.mean(within_relative(pred, true)))


def aia_scores(train: DataTable, test: DataTable, synth: DataTable, folds: int = 5, seed: int = 0,
               k: int = 5) -> AIAResult:
    """Attribute inference with synthetic data as the attacker's training set.

    Every non-quasi-identifier feature is a target, predicted from all other
    features.  Attackers are fit on the synthetic training part of each fold
    and scored on the matching fold of the real training data, and on the real
    test data as a baseline.  The nonlinear attacker is a distance-weighted
    k-nearest-neighbour model.
    """
    _require_complete(train, test, synth)
    schema = synth.schema
    features = schema.features
    targets = [n for n in schema.sensitive]
    rng = np.random.default_rng(seed)
    s_folds = np.array_split(rng.permutation(synth.n_rows), folds)
    r_folds = np.array_split(rng.permutation(train.n_rows), folds)
    detail = {}
    for target in targets:
        spec = schema[target]
        categorical = spec.kind != CONTINUOUS
        n_classes = len(spec.categories) if categorical else 0
        predictors = [f for f in features if f != target]
        scores = {"linear": [], "knn": [], "baseline_linear": [], "baseline_knn": []}
        degenerate = False
        for f in range(folds):
            fit_rows = np.sort(np.concatenate([s_folds[g] for g in range(folds) if g != f]))
            fit_tab = synth.take(fit_rows)
            params = fit_normalization([fit_tab], MIN_MAX)
            Xs = encode(fit_tab, params, predictors)
            ys = fit_tab.values(target)
            eval_sets = {"": train.take(np.sort(r_folds[f])), "baseline_": test}
            constant = bool(np.all(ys == ys[0]))
            degenerate |= constant
            X1 = np.hstack([np.ones((Xs.shape[0], 1)), Xs])
            if constant:
                W = coef = None
            elif categorical:
                W = fit_logistic_ovr(X1, ys.astype(np.int64), n_classes)
            else:
                coef = solve_normal(X1, ys.astype(float), ridge=1.0)
            tree = cKDTree(Xs)
            for prefix, tab in eval_sets.items():
                Xe = encode(tab, params, predictors)
                ye = tab.values(target)
                Xe1 = np.hstack([np.ones((Xe.shape[0], 1)), Xe])
                if constant:
                    lin = nn = np.full(ye.size, ys[0])
                else:
                    lin = predict_ovr(Xe1, W) if categorical else Xe1 @ coef
                    nn = _knn_predict(tree, ys, Xe, k, categorical, n_classes)
                scores[prefix + "linear"].append(_attack_accuracy(ye, lin, categorical))
                scores[prefix + "knn"].append(_attack_accuracy(ye, nn, categorical))
        detail[target] = AIATarget(*(float(np.nanmean(scores[key])) for key in
                                     ("linear", "knn", "baseline_linear", "baseline_knn")),
                                   degenerate=degenerate)

    def mean(attr):
        return float(np.mean([getattr(t, attr) for t in detail.values()])) if detail else float("nan")

    return AIAResult(mean("linear"), mean("knn"), mean("baseline_linear"), mean("baseline_knn"), detail)


# -- nearest-neighbour adversarial accuracy ---------------------------------

def nnaa_pair(p: np.ndarray, q: np.ndarray) -> float:
    """0.5 * (share of p closer to p than to q + share of q closer to q than to p).

    Within-set neighbours exclude the query point itself; distance ties count 0.
    """
    if p.shape[0] < 2 or q.shape[0] < 2:
        raise ValueError("NNAA needs at least two rows per set")
    tp, tq = cKDTree(p), cKDTree(q)
    d_pp = tp.query(p, k=2)[0][:, 1]
    d_qq = tq.query(q, k=2)[0][:, 1]
    d_pq = tq.query(p, k=1)[0]
    d_qp = tp.query(q, k=1)[0]
    return 0.5 * (float(np.mean(d_pq > d_pp)) + float(np.mean(d_qp > d_qq)))


def nnaa_balanced(p: np.ndarray, q: np.ndarray, iters: int, rng: np.random.Generator) -> float:
    """NNAA averaged over ``iters`` draws that subsample the larger set to the smaller size."""
    if p.shape[0] == q.shape[0]:
        return nnaa_pair(p, q)
    n = min(p.shape[0], q.shape[0])
    vals = []
    for _ in range(iters):
        ps = p if p.shape[0] == n else p[np.sort(rng.choice(p.shape[0], n, replace=False))]
        qs = q if q.shape[0] == n else q[np.sort(rng.choice(q.shape[0], n, replace=False))]
        vals.append(nnaa_pair(ps, qs))
    return float(np.mean(vals))


@dataclass
class NNAAResult:
    nnaa_ts: float
    nnaa_es: float
    privacy_loss: float


def nnaa(train: DataTable, test: DataTable, synth: DataTable, iters: int = 30, seed: int = 0) -> NNAAResult:
    """NNAA(train, synth), NNAA(test, synth) and privacy loss = NNAA(E,S) - NNAA(T,S)."""
    _require_complete(train, test, synth)
    params = fit_normalization([train, test, synth], MIN_MAX)
    T, E, S = (encode(t, params) for t in (train, test, synth))
    ts = nnaa_balanced(T, S, iters, np.random.default_rng([seed, 0]))
    es = nnaa_balanced(E, S, iters, np.random.default_rng([seed, 1]))
    return NNAAResult(ts, es, es - ts)


@dataclass
class PrivacyReport:
    exact_match: ExactMatchResult | None = None
    mia: MIAResult | None = None
    aia: AIAResult | None = None
    nnaa: NNAAResult | None = None
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def exact_match_rate(self):
        return None if self.exact_match is None else self.exact_match.rate

    @property
    def mia_accuracy(self):
        return None if self.mia is None else self.mia.accuracy

    @property
    def privacy_loss(self):
        return None if self.nnaa is None else self.nnaa.privacy_loss


def privacy_report(real_train: DataTable, real_test: DataTable, synth: DataTable, seed: int = 0,
                   mia_folds: int = 4, aia_folds: int = 5, nnaa_iters: int = 30,
                   real_all: DataTable | None = None) -> PrivacyReport:
    """Run all four assessments; a failing one is recorded and the rest still run.

    Exact matches are searched in ``real_all`` when given, else in ``real_train``.
    """
    report = PrivacyReport()
    jobs = {
        "exact_match": lambda: exact_match(real_train if real_all is None else real_all, synth),
        "mia": lambda: mia_accuracy(real_train, real_test, synth, mia_folds, seed=seed),
        "aia": lambda: aia_scores(real_train, real_test, synth, aia_folds, seed=seed),
        "nnaa": lambda: nnaa(real_train, real_test, synth, nnaa_iters, seed=seed),
    }
    for name, job in jobs.items():
        try:
            setattr(report, name, job())
        except (ValueError, np.linalg.LinAlgError) as exc:
            report.failures[name] = f"{type(exc).__name__}: {exc}"
    return report


__all__ = [
    "exact_match", "mia_accuracy", "aia_scores", "nnaa", "nnaa_pair", "nnaa_balanced", "encode",
    "within_relative", "ExactMatchResult", "MIAResult", "AIAResult", "AIATarget", "NNAAResult",
    "PrivacyReport", "privacy_report",
]
