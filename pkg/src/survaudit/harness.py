"""Splits, hyperparameter grids, train/test paradigms and the full audit."""

from __future__ import annotations

import itertools
import logging
import os
import zlib
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .core import DataTable
from .fidelity import (feature_preservation, fidelity_scores, km_metrics, significance_battery)
from .generate import equalize_table, fit_equalizer
from .impute import CHAINED, ImputeConfig, fit_imputer
from .ingest import clip_to_ranges, compare_profiles, filter_implausible
from .privacy import privacy_report
from .report import MetricReport
from .survival import (ForestParams, SurvivalData, c_index, fit_cox, fit_rsf, forest_risk,
                       forest_survival, ibs_grid, integrated_brier, kaplan_meier, predict_risk,
                       predict_survival)

log = logging.getLogger(__name__)

DEFAULT_SEED = 20240501
THREADS_ENV = "SURVAUDIT_THREADS"
FRACTIONS = (0.7, 0.1, 0.2)
MIN_ROWS = 10

COX, RSF = "cox", "rsf"
FAMILIES = (COX, RSF)


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def substream(seed: int, name: str) -> int:
    """Independent named seed derived from the root seed (stable across runs and platforms)."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, zlib.crc32(name.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


# -- splitting --------------------------------------------------------------

@dataclass(frozen=True)
class SplitPlan:
    seed: int
    fractions: tuple[float, float, float]
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray

    @property
    def development(self) -> np.ndarray:
        """Train and validation rows together (the generator's training data)."""
        return np.concatenate([self.train, self.valid])


def _allocate(sizes: np.ndarray, fraction: float) -> np.ndarray:
    """Integer per-stratum counts summing to round(fraction * total), largest remainder first."""
    exact = sizes * fraction
    counts = np.floor(exact).astype(int)
    short = int(round(fraction * sizes.sum())) - counts.sum()
    if short > 0:
        order = np.argsort(-(exact - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def stratified_split(table: DataTable, seed: int = DEFAULT_SEED,
                     fractions: Sequence[float] = FRACTIONS) -> SplitPlan:
    """Shuffle within each event stratum, then allocate proportionally to train/valid/test."""
    if table.n_rows < MIN_ROWS:
        raise ValueError(f"need at least {MIN_ROWS} rows to split, got {table.n_rows}")
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-9:
        raise ValueError("fractions must be three non-negative numbers summing to 1")
    ev = table.values(table.schema.event)
    rng = np.random.default_rng(seed)
    strata = [np.flatnonzero(ev == k) for k in (0, 1)]
    sizes = np.array([s.size for s in strata])
    n_test = _allocate(sizes, fr[2])
    n_valid = _allocate(sizes - n_test, fr[1] / (fr[0] + fr[1]) if fr[0] + fr[1] > 0 else 0.0)
    parts = {"train": [], "valid": [], "test": []}
    for s, rows in enumerate(strata):
        rows = rng.permutation(rows)
        parts["test"].append(rows[: n_test[s]])
        parts["valid"].append(rows[n_test[s]: n_test[s] + n_valid[s]])
        parts["train"].append(rows[n_test[s] + n_valid[s]:])
    get = lambda k: np.sort(np.concatenate(parts[k]))  # noqa: E731
    return SplitPlan(seed, fr, get("train"), get("valid"), get("test"))


# -- paradigms and grids ----------------------------------------------------

@dataclass(frozen=True)
class ParadigmSpec:
    name: str
    train_source: str
    test_source: str


PARADIGMS = {
    "TRTR": ParadigmSpec("TRTR", "real", "real"),
    "TSTR": ParadigmSpec("TSTR", "synthetic", "real"),
    "TRTS": ParadigmSpec("TRTS", "real", "synthetic"),
    "TSTS": ParadigmSpec("TSTS", "synthetic", "synthetic"),
}


def cox_grid() -> list[dict]:
    return [{"l1_ratio": a, "penalty": lam} for a in (0.0, 0.5, 1.0) for lam in (0.1, 1.0)]


def rsf_grid() -> list[dict]:
    return [{"n_estimators": n, "max_depth": d, "min_samples_split": s, "min_samples_leaf": l}
            for n, d, s, l in itertools.product((5, 20, 50), (2, 5, 10), (2, 5, 10), (1, 2, 4))]


def default_grid(family: str) -> list[dict]:
    if family == COX:
        return cox_grid()
    if family == RSF:
        return rsf_grid()
    raise ValueError(f"unknown model family {family!r}")


def fit_family(family: str, data: SurvivalData, params: dict, seed: int = 0, threads: int = 1):
    if family == COX:
        return fit_cox(data, seed=seed, **params)
    if family == RSF:
        return fit_rsf(data, ForestParams(**params), seed=seed, threads=threads)
    raise ValueError(f"unknown model family {family!r}")


def predict_family(family: str, model, X: np.ndarray, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(risk scores, survival matrix on ``grid``); forest risk is the ensemble hazard at the grid end."""
    if family == COX:
        return predict_risk(model, X), predict_survival(model, X, grid)
    return forest_risk(model, X, horizon=float(grid[-1])), forest_survival(model, X, grid)


@dataclass
class GridResult:
    params: dict
    score: float
    model: object
    scores: list[float | None]
    errors: dict[int, str] = field(default_factory=dict)


def grid_search(train: SurvivalData, valid: SurvivalData, family: str, grid: Sequence[dict] | None = None,
                seed: int = 0, threads: int = 1) -> GridResult:
    """Fit every configuration on ``train`` and keep the best validation C-index.

    Ties go to the configuration listed first.
    """
    grid = list(default_grid(family) if grid is None else grid)
    if not grid:
        raise ValueError("empty hyperparameter grid")
    horizon_grid = ibs_grid(valid.times, valid.events)
    scores, errors = [], {}
    best = None
    for i, params in enumerate(grid):
        try:
            model = fit_family(family, train, params, seed=seed, threads=threads)
            risk, _ = predict_family(family, model, valid.X, horizon_grid[-1:])
            score = c_index(valid.times, valid.events, risk)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
            errors[i] = f"{type(exc).__name__}: {exc}"
            scores.append(None)
            continue
        scores.append(score)
        if best is None or score > best[1]:
            best = (i, score, model)
    if best is None:
        raise RuntimeError(f"all {len(grid)} {family} fits failed: {next(iter(errors.values()))}")
    return GridResult(dict(grid[best[0]]), best[1], best[2], scores, errors)


# -- per-source preparation ---------------------------------------------------

@dataclass
class PreparedSource:
    """A dataset split, imputed with its own development-set imputer, and encoded."""
    plan: SplitPlan
    train: DataTable
    valid: DataTable
    test: DataTable
    development: DataTable
    n_imputer_iterations: int
    imputer_converged: bool


def prepare_source(table: DataTable, seed: int, impute_method: str = CHAINED,
                   impute_iterations: int = 100) -> PreparedSource:
    plan = stratified_split(table, seed)
    dev_raw = table.take(plan.development)
    model = fit_imputer(dev_raw, ImputeConfig(method=impute_method, max_iterations=impute_iterations))
    dev = model.imputed_train
    test = model.apply(table.take(plan.test))
    n_tr = plan.train.size
    return PreparedSource(plan, dev.take(np.arange(n_tr)), dev.take(np.arange(n_tr, dev.n_rows)),
                          test, dev, model.n_iterations, model.converged)


def _zscore(train_X: np.ndarray):
    mu = train_X.mean(axis=0)
    sd = train_X.std(axis=0)
    sd[sd == 0] = 1.0
    return lambda X: (X - mu) / sd


@dataclass
class FittedSource:
    family: str
    search: GridResult
    scale: object
    train_times: np.ndarray
    train_events: np.ndarray


def fit_source(prep: PreparedSource, family: str, grid=None, seed: int = 0, threads: int = 1) -> FittedSource:
    tr = SurvivalData.from_table(prep.train)
    va = SurvivalData.from_table(prep.valid)
    scale = _zscore(tr.X)
    res = grid_search(tr.with_features(scale(tr.X)), va.with_features(scale(va.X)), family, grid,
                      seed=seed, threads=threads)
    return FittedSource(family, res, scale, tr.times, tr.events)


def evaluate(fitted: FittedSource, prep_test: PreparedSource) -> dict:
    """C-index and IBS of a fitted training source on another source's test split."""
    te = SurvivalData.from_table(prep_test.test)
    X = fitted.scale(te.X)
    grid = ibs_grid(te.times, te.events)
    risk, surv = predict_family(fitted.family, fitted.search.model, X, grid)
    censor_km = kaplan_meier(fitted.train_times, 1 - fitted.train_events)
    return {
        "c_index": c_index(te.times, te.events, risk),
        "ibs": integrated_brier(surv, grid, te.times, te.events, censor_km),
        "params": fitted.search.params,
        "validation_c_index": fitted.search.score,
    }


def run_paradigm(real: DataTable, synth: DataTable, paradigm: str, model_family: str,
                 impute_method: str = CHAINED, seed: int = DEFAULT_SEED, grid=None,
                 threads: int = 1) -> tuple[float, float]:
    """Train on one source, test on the other's test split; returns (C-index, IBS).

    Each source gets its own split and imputer; the training source's
    statistics drive z-scoring and the censoring distribution.
    """
    spec = PARADIGMS[paradigm]
    sources = {"real": real, "synthetic": synth}
    split_seed = substream(seed, "split")
    prep = {k: prepare_source(sources[k], split_seed, impute_method)
            for k in {spec.train_source, spec.test_source}}
    try:
        fitted = fit_source(prep[spec.train_source], model_family, grid,
                            seed=substream(seed, model_family), threads=threads)
        out = evaluate(fitted, prep[spec.test_source])
    except Exception as exc:  # add paradigm context, keep the original type visible
        raise RuntimeError(f"{paradigm}/{model_family}: {type(exc).__name__}: {exc}") from exc
    return out["c_index"], out["ibs"]


# -- full audit -------------------------------------------------------------

@dataclass
class AuditConfig:
    seed: int = DEFAULT_SEED
    impute_method: str = CHAINED
    impute_iterations: int = 100
    families: tuple[str, ...] = FAMILIES
    paradigms: tuple[str, ...] = ("TRTR", "TSTR", "TRTS", "TSTS")
    cox_grid: list[dict] | None = None
    rsf_grid: list[dict] | None = None
    equalize: bool | tuple[str, ...] = False   # True, or the names of the synthetic sets to equalize
    equalize_column: str = "Days"
    mia_folds: int = 4
    aia_folds: int = 5
    nnaa_iterations: int = 30
    histograms: bool = True
    threads: int = 1

    def grid(self, family: str):
        return self.cox_grid if family == COX else self.rsf_grid

    def equalizes(self, name: str) -> bool:
        return self.equalize is True or (not isinstance(self.equalize, bool) and name in self.equalize)

    def echo(self) -> dict:
        d = asdict(self)
        d["cox_grid"] = self.cox_grid or cox_grid()
        d["rsf_grid"] = self.rsf_grid or rsf_grid()
        d.pop("threads")  # does not change any number in the report
        return d


class _Sections:
    """Runs report sections, recording failures instead of aborting."""

    def __init__(self):
        self.failures: list[dict] = []

    def run(self, dataset: str, section: str, fn):
        try:
            return fn()
        except Exception as exc:  # the audit must go on; the note says what broke
            log.warning("section %s/%s failed: %s", dataset, section, exc)
            self.failures.append({"dataset": dataset, "section": section,
                                  "error": f"{type(exc).__name__}: {exc}"})
            return None


def _univariate_summary(pres) -> dict:
    return {f: {"beta": r.beta, "p_value": r.p_value, "estimable": r.estimable}
            for f, r in pres.items()}


def full_audit(real: DataTable, synths: Mapping[str, DataTable], config: AuditConfig | None = None,
               sources: Mapping[str, str] | None = None) -> MetricReport:
    """Every fidelity, utility and privacy metric for each named synthetic table.

    ``sources`` optionally maps dataset names to provenance strings (file
    paths) echoed into the report.
    """
    config = config or AuditConfig()
    sections = _Sections()
    sources = dict(sources or {})
    seed = config.seed
    impute_cfg = ImputeConfig(method=config.impute_method, max_iterations=config.impute_iterations)

    real_clipped, clip_counts = clip_to_ranges(real)
    real_imputed = sections.run("real", "imputation",
                                lambda: fit_imputer(real_clipped, impute_cfg).imputed_train)
    split_seed = substream(seed, "split")
    real_prep = sections.run("real", "split", lambda: prepare_source(
        real_clipped, split_seed, config.impute_method, config.impute_iterations))
    real_fits = {}
    real_util = {}
    for fam in config.families:
        if real_prep is None:
            break
        real_fits[fam] = sections.run("real", f"fit/{fam}", lambda fam=fam: fit_source(
            real_prep, fam, config.grid(fam), seed=substream(seed, fam), threads=config.threads))
    if "TRTR" in config.paradigms:
        real_util["TRTR"] = {}
        for fam, fitted in real_fits.items():
            if fitted is not None:
                res = sections.run("real", f"utility/TRTR/{fam}", lambda f=fitted: evaluate(f, real_prep))
                if res is not None:
                    real_util["TRTR"][fam] = res

    data = {
        "tool": {"name": "survaudit", "version": __version__},
        "config": config.echo(),
        "seeds": {k: substream(seed, k) for k in ("split", "cox", "rsf", "mia", "aia", "nnaa")},
        "real": {
            "source": sources.get("real", ""),
            "digest": real.digest(),
            "n_rows": real.n_rows,
            "clipped_cells": clip_counts,
            "imputation": config.impute_method,
            "utility": real_util,
        },
        "datasets": {},
    }
    if real_prep is not None:
        data["real"]["split"] = {"train": int(real_prep.plan.train.size),
                                 "valid": int(real_prep.plan.valid.size),
                                 "test": int(real_prep.plan.test.size)}
        data["real"]["imputer"] = {"iterations": real_prep.n_imputer_iterations,
                                   "converged": real_prep.imputer_converged}

    def audit_one(name: str, synth: DataTable) -> dict:
        out = {"source": sources.get(name, ""), "digest": synth.digest(), "n_rows_input": synth.n_rows}
        filtered, dropped = filter_implausible(synth)
        out["n_rows"] = filtered.n_rows
        out["dropped_implausible"] = int(dropped.size)
        synth_imputed = sections.run(name, "imputation",
                                     lambda: fit_imputer(filtered, impute_cfg).imputed_train)
        out["missingness"] = [{"column": c, "real": r, "synthetic": s}
                              for c, r, s in compare_profiles(real_clipped, filtered)]
        out["significance"] = sections.run(name, "significance",
                                           lambda: significance_battery(real_clipped, filtered))
        if real_imputed is not None and synth_imputed is not None:
            out["fidelity"] = sections.run(name, "fidelity", lambda: _fidelity_section(
                real_imputed, synth_imputed, config.histograms))
            out["preservation"] = sections.run(name, "preservation", lambda: _preservation_section(
                real_imputed, synth_imputed))
        out["km"] = sections.run(name, "km", lambda: asdict(km_metrics(
            kaplan_meier(real_clipped.values(real.schema.time), real_clipped.values(real.schema.event)),
            kaplan_meier(filtered.values(real.schema.time), filtered.values(real.schema.event)))))
        out["utility"] = _utility_section(name, filtered)
        if real_prep is not None and synth_imputed is not None:
            rep = privacy_report(real_prep.development, real_prep.test, synth_imputed,
                                 seed=substream(seed, "privacy"), mia_folds=config.mia_folds,
                                 aia_folds=config.aia_folds, nnaa_iters=config.nnaa_iterations,
                                 real_all=real_imputed)
            for sec, msg in rep.failures.items():
                sections.failures.append({"dataset": name, "section": f"privacy/{sec}", "error": msg})
            out["privacy"] = _privacy_section(rep)
        return out

    def _utility_section(name: str, synth: DataTable) -> dict:
        util = {}
        wanted = [p for p in config.paradigms if p != "TRTR"]
        if not wanted:
            return util
        sprep = sections.run(name, "split", lambda: prepare_source(
            synth, split_seed, config.impute_method, config.impute_iterations))
        if sprep is None:
            return util
        synth_fits = {}
        for fam in config.families:
            if any(PARADIGMS[p].train_source == "synthetic" for p in wanted):
                synth_fits[fam] = sections.run(name, f"fit/{fam}", lambda fam=fam: fit_source(
                    sprep, fam, config.grid(fam), seed=substream(seed, fam), threads=config.threads))
        preps = {"real": real_prep, "synthetic": sprep}
        for p in wanted:
            spec = PARADIGMS[p]
            util[p] = {}
            for fam in config.families:
                fitted = (real_fits if spec.train_source == "real" else synth_fits).get(fam)
                test_prep = preps[spec.test_source]
                if fitted is None or test_prep is None:
                    sections.failures.append({"dataset": name, "section": f"utility/{p}/{fam}",
                                              "error": "training source could not be fitted"})
                    continue
                res = sections.run(name, f"utility/{p}/{fam}", lambda f=fitted, t=test_prep: evaluate(f, t))
                if res is not None:
                    util[p][fam] = res
        return util

    for name, synth in synths.items():
        data["datasets"][name] = audit_one(name, synth)

    eq_names = [n for n in synths if config.equalizes(n)]
    if eq_names:
        data["equalized"] = {}
        ref = real_clipped.take(real_prep.plan.development) if real_prep is not None else real_clipped
        qmap = fit_equalizer(ref.observed(config.equalize_column))
        for name in eq_names:
            eq = sections.run(name, "equalization", lambda n=name: equalize_table(
                synths[n], config.equalize_column, qmap))
            if eq is not None:
                data["equalized"][name] = audit_one(name, eq)

    data["failures"] = sections.failures
    return MetricReport(data)


def _fidelity_section(real: DataTable, synth: DataTable, histograms: bool) -> dict:
    fs = fidelity_scores(real, synth, histograms=histograms)
    return {"dimwise_mean": fs.dimwise_mean, "correlation_mean": fs.correlation_mean,
            "dimwise": fs.dimwise, "correlation": fs.correlation, "skipped": fs.skipped,
            "histograms": fs.histograms}


def _preservation_section(real: DataTable, synth: DataTable) -> dict:
    res = feature_preservation(SurvivalData.from_table(real), SurvivalData.from_table(synth))
    return {"recall": res.recall, "precision": res.precision, "preserved": res.preserved,
            "coefficients": {"real": _univariate_summary(res.real),
                             "synthetic": _univariate_summary(res.synth)}}


def _privacy_section(rep) -> dict:
    out = {}
    if rep.exact_match is not None:
        out["exact_match_rate"] = rep.exact_match.rate
        out["exact_match_rows"] = rep.exact_match.n_matched
        out["leakage_flag"] = rep.exact_match.n_matched > 0
    if rep.mia is not None:
        out["mia_accuracy"] = rep.mia.accuracy
        out["mia_folds"] = rep.mia.fold_accuracies
    if rep.aia is not None:
        out["aia_linear_score"] = rep.aia.linear_score
        out["aia_knn_score"] = rep.aia.knn_score
        out["aia_baseline_linear"] = rep.aia.baseline_linear
        out["aia_baseline_knn"] = rep.aia.baseline_knn
        out["aia_targets"] = {k: asdict(v) for k, v in rep.aia.targets.items()}
    if rep.nnaa is not None:
        out["nnaa_TS"] = rep.nnaa.nnaa_ts
        out["nnaa_ES"] = rep.nnaa.nnaa_es
        out["privacy_loss"] = rep.nnaa.privacy_loss
    return out


__all__ = [
    "DEFAULT_SEED", "THREADS_ENV", "SplitPlan", "stratified_split", "ParadigmSpec", "PARADIGMS",
    "cox_grid", "rsf_grid", "grid_search", "GridResult", "run_paradigm", "prepare_source",
    "fit_source", "evaluate", "AuditConfig", "full_audit", "substream", "default_threads",
]
