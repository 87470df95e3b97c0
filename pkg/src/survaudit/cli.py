"""Command-line front end: audit, generate, equalize, impute, split."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .core import SchemaError, validate
from .generate import equalize_table, fit_copula, sample_copula
from .harness import (DEFAULT_SEED, THREADS_ENV, AuditConfig, default_threads, full_audit,
                      stratified_split, substream)
from .impute import CHAINED, MEDIAN, ImputeConfig, fit_imputer
from .ingest import (SchemaConfigError, TableFormatError, indicator_columns, load_schema, load_table,
                     reapply_missingness, reference_schema, write_table)

EXIT_OK, EXIT_INPUT, EXIT_PARTIAL = 0, 1, 2

# a small forest grid for quick runs; the full grid is the default
REDUCED_RSF_GRID = [
    {"n_estimators": 20, "max_depth": d, "min_samples_split": 5, "min_samples_leaf": leaf}
    for d in (5, 10) for leaf in (2, 4)
]

log = logging.getLogger("survaudit")


class InputError(Exception):
    """Bad paths or unreadable inputs; maps to exit code 1."""


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {path}")
    return p


def _schema(args):
    if getattr(args, "schema", None):
        return load_schema(_existing(args.schema))
    return reference_schema()


def _load(path: str, schema):
    """Read a table; indicator columns from an external generator are turned back into gaps."""
    table = load_table(_existing(path), schema)
    if indicator_columns(table):
        table = reapply_missingness(table)
    return table


def _named(spec: str) -> tuple[str, str]:
    if "=" in spec:
        name, path = spec.split("=", 1)
        return name, path
    return Path(spec).stem, spec


# -- subcommands --------------------------------------------------------------

def cmd_audit(args) -> int:
    schema = _schema(args)
    real = _load(args.real, schema)
    bad = validate(real).of_kind("missing_outcome")
    if bad:
        raise InputError(f"{args.real}: {len(bad)} rows lack time or event values, first: {bad[0]}")
    synths, sources = {}, {"real": args.real}
    for spec in args.synth:
        name, path = _named(spec)
        if name in synths or name == "real":
            raise InputError(f"duplicate synthetic dataset name {name!r}")
        synths[name] = _load(path, schema)
        sources[name] = path
    config = AuditConfig(
        seed=args.seed, impute_method=args.impute, impute_iterations=args.impute_iterations,
        families=tuple(args.families), equalize=args.equalize, equalize_column=args.equalize_column,
        rsf_grid=REDUCED_RSF_GRID if args.rsf_grid == "reduced" else None,
        mia_folds=args.mia_folds, aia_folds=args.aia_folds, nnaa_iterations=args.nnaa_iterations,
        histograms=not args.no_histograms, threads=args.threads)
    report = full_audit(real, synths, config, sources=sources)
    report.write(args.out)
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    for f in report.failures:
        print(f"warning: {f['dataset']}/{f['section']}: {f['error']}", file=sys.stderr)
    return EXIT_PARTIAL if report.failures else EXIT_OK


def cmd_generate(args) -> int:
    schema = _schema(args)
    table = _load(args.fit, schema)
    model = fit_copula(table, seed=substream(args.seed, "copula"))
    out = sample_copula(model, args.n, with_missingness=args.with_missingness)
    write_table(out, args.out)
    return EXIT_OK


def cmd_equalize(args) -> int:
    schema = _schema(args)
    if args.col not in schema:
        raise InputError(f"unknown column {args.col!r}")
    ref = _load(args.reference, schema)
    table = _load(args.input, schema)
    write_table(equalize_table(table, args.col, ref.observed(args.col)), args.out)
    return EXIT_OK


def cmd_impute(args) -> int:
    schema = _schema(args)
    table = _load(args.input, schema)
    cfg = ImputeConfig(method=args.method, max_iterations=args.max_iterations,
                       convergence_tol=args.tol, seed=args.seed)
    model = fit_imputer(table, cfg)
    if not model.converged:
        log.warning("imputation stopped after %d iterations without converging", model.n_iterations)
    write_table(model.imputed_train, args.out)
    return EXIT_OK


def cmd_split(args) -> int:
    schema = _schema(args)
    table = _load(args.input, schema)
    plan = stratified_split(table, substream(args.seed, "split"))
    for part in ("train", "valid", "test"):
        write_table(table.take(getattr(plan, part)), f"{args.out_prefix}{part}.csv")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="survaudit",
                                description="Audit synthetic survival tables against a real reference.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--schema", help="schema config file (default: bundled heart-failure schema)")
        if seed:
            sp.add_argument("--seed", type=int, default=DEFAULT_SEED,
                            help=f"root random seed (default {DEFAULT_SEED})")

    a = sub.add_parser("audit", help="run the full fidelity, utility and privacy audit")
    a.add_argument("--real", required=True, help="real reference table")
    a.add_argument("--synth", required=True, action="append", metavar="[NAME=]PATH",
                   help="synthetic table; repeat for several")
    a.add_argument("--out", required=True, help="report file (JSON)")
    a.add_argument("--csv", help="also write the utility table as CSV here")
    common(a)
    a.add_argument("--impute", choices=[CHAINED, MEDIAN], default=CHAINED, help="imputation method")
    a.add_argument("--impute-iterations", type=int, default=100, help="chained-imputation iteration cap")
    a.add_argument("--families", nargs="+", choices=["cox", "rsf"], default=["cox", "rsf"],
                   help="survival model families")
    a.add_argument("--rsf-grid", choices=["full", "reduced"], default="full",
                   help="forest hyperparameter grid (reduced = 4 configurations)")
    a.add_argument("--equalize", action="store_true", help="add an equalized-time report section")
    a.add_argument("--equalize-column", default="Days", help="column to equalize")
    a.add_argument("--mia-folds", type=int, default=4, help="membership-inference folds")
    a.add_argument("--aia-folds", type=int, default=5, help="attribute-inference folds")
    a.add_argument("--nnaa-iterations", type=int, default=30, help="NNAA subsampling iterations")
    a.add_argument("--no-histograms", action="store_true", help="omit per-column histogram data")
    a.add_argument("--threads", type=int, default=default_threads(),
                   help=f"worker threads for forests (default from ${THREADS_ENV}, else 1)")
    a.set_defaults(func=cmd_audit)

    g = sub.add_parser("generate", help="fit the copula baseline generator and sample")
    g.add_argument("--fit", required=True, help="table to fit on")
    g.add_argument("--n", type=int, required=True, help="rows to sample")
    g.add_argument("--out", required=True, help="output table")
    g.add_argument("--with-missingness", action="store_true", help="mask cells at the fitted missing rates")
    common(g)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("equalize", help="quantile-map one column onto a reference distribution")
    e.add_argument("--col", default="Days", help="column to equalize")
    e.add_argument("--reference", required=True, help="table holding the reference column")
    e.add_argument("--in", dest="input", required=True, help="table to transform")
    e.add_argument("--out", required=True, help="output table")
    common(e, seed=False)
    e.set_defaults(func=cmd_equalize)

    i = sub.add_parser("impute", help="fill missing feature cells")
    i.add_argument("--in", dest="input", required=True, help="table with gaps")
    i.add_argument("--out", required=True, help="output table")
    i.add_argument("--method", choices=[CHAINED, MEDIAN], default=CHAINED, help="imputation method")
    i.add_argument("--max-iterations", type=int, default=100, help="chained-imputation iteration cap")
    i.add_argument("--tol", type=float, default=1e-3, help="convergence tolerance (sd units)")
    common(i)
    i.set_defaults(func=cmd_impute)

    s = sub.add_parser("split", help="stratified 70/10/20 train/valid/test split")
    s.add_argument("--in", dest="input", required=True, help="table to split")
    s.add_argument("--out-prefix", required=True, help="prefix for <prefix>train.csv etc.")
    common(s)
    s.set_defaults(func=cmd_split)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (InputError, TableFormatError, SchemaConfigError, SchemaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
