"""File I/O, schema configuration, clinical constraints and missingness bookkeeping."""

from __future__ import annotations

import configparser
import csv
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import (
    BINARY, CONTINUOUS, DEFAULT_QUASI_IDENTIFIERS, EVENT, FEATURE,
    QUASI_IDENTIFIER, TIME, ColumnSpec, DataTable, DatasetSchema, SchemaError,
)

INDICATOR_SUFFIX = "__miss"
DEFAULT_SENTINELS = ("", "NA", "NaN", "nan", "null", "NULL")


class SchemaConfigError(ValueError):
    """Schema config could not be turned into a DatasetSchema; message carries the position."""


class TableFormatError(ValueError):
    """A table file does not match its schema; message carries line and column."""


# -- schema config ----------------------------------------------------------

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    where: dict[tuple[str, str | None], int] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            where[(section, None)] = lineno
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), lineno)
    return where


def parse_schema(text: str, source: str = "<schema>") -> DatasetSchema:
    """Parse an INI-style schema document.

    Layout::

        [dataset]
        time = Days
        event = dead
        quasi_identifiers = HIGH, BW, Age, Gender

        [column:HGB]
        kind = continuous
        unit = g/dL
        min = 3
        max = 20

    Column sections appear in schema order.  ``categories`` is a comma list for
    categorical columns; binary columns are implicitly ``0, 1``.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # type: ignore[assignment]
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise SchemaConfigError(f"{source}: {exc}") from exc
    lines = _line_index(text)

    def where(section, key=None):
        ln = lines.get((section, key.lower() if key else None)) or lines.get((section, None))
        return f"{source}:{ln}" if ln else source

    if "dataset" not in parser:
        raise SchemaConfigError(f"{source}: missing [dataset] section")
    ds = parser["dataset"]
    time_col = ds.get("time", "").strip()
    event_col = ds.get("event", "").strip()
    if not time_col or not event_col:
        raise SchemaConfigError(f"{where('dataset')}: [dataset] must name 'time' and 'event' columns")
    if "quasi_identifiers" in ds:
        qi = tuple(q.strip() for q in ds["quasi_identifiers"].split(",") if q.strip())
    else:
        qi = DEFAULT_QUASI_IDENTIFIERS

    specs = []
    for section in parser.sections():
        if section == "dataset":
            continue
        if not section.startswith("column:"):
            raise SchemaConfigError(f"{where(section)}: unknown section [{section}]")
        name = section[len("column:"):].strip()
        sec = parser[section]
        allowed = {"kind", "role", "unit", "min", "max", "categories", "missingness_allowed", "description"}
        extra = set(sec.keys()) - allowed
        if extra:
            key = sorted(extra)[0]
            raise SchemaConfigError(f"{where(section, key)}: unknown key {key!r} in [{section}]")
        kind = sec.get("kind", "").strip().lower()
        if name == time_col:
            role = TIME
        elif name == event_col:
            role = EVENT
        elif name in qi:
            role = QUASI_IDENTIFIER
        else:
            role = sec.get("role", FEATURE).strip()

        def number(key):
            if key not in sec:
                return None
            try:
                return float(sec[key])
            except ValueError:
                raise SchemaConfigError(
                    f"{where(section, key)}: {key!r} of column {name!r} is not a number: {sec[key]!r}"
                ) from None

        cats = tuple(c.strip() for c in sec.get("categories", "").split(",") if c.strip())
        try:
            allow = sec.getboolean("missingness_allowed", fallback=True)
        except ValueError:
            raise SchemaConfigError(f"{where(section, 'missingness_allowed')}: not a boolean") from None
        try:
            specs.append(ColumnSpec(
                name=name, kind=kind, role=role, unit=sec.get("unit", "").strip(),
                plausible_min=number("min"), plausible_max=number("max"),
                categories=cats, missingness_allowed=allow,
            ))
        except SchemaError as exc:
            raise SchemaConfigError(f"{where(section)}: {exc}") from None
    try:
        return DatasetSchema(tuple(specs), qi)
    except SchemaError as exc:
        raise SchemaConfigError(f"{where('dataset')}: {exc}") from None


def load_schema(path) -> DatasetSchema:
    path = Path(path)
    return parse_schema(path.read_text(encoding="utf-8"), source=str(path))


def reference_schema() -> DatasetSchema:
    """The bundled heart-failure schema (35 variables with clinical plausible ranges)."""
    text = resources.files("survaudit.data").joinpath("hf.schema.ini").read_text(encoding="utf-8")
    return parse_schema(text, source="hf.schema.ini")


def reference_schema_path() -> Path:
    return Path(str(resources.files("survaudit.data").joinpath("hf.schema.ini")))


# -- tables -----------------------------------------------------------------

def _indicator_spec(name: str) -> ColumnSpec:
    return ColumnSpec(name + INDICATOR_SUFFIX, BINARY, FEATURE, missingness_allowed=False)


def _detect_delimiter(path: Path, delimiter: str | None) -> str:
    if delimiter:
        return delimiter
    return "\t" if path.suffix.lower() in (".tsv", ".tab") else ","


def load_table(path, schema: DatasetSchema, delimiter: str | None = None,
               sentinels: Sequence[str] = DEFAULT_SENTINELS) -> DataTable:
    """Read a delimited text table.

    Columns may come in any order.  A header column ``<name>__miss`` for a known
    ``<name>`` is accepted as a missingness indicator and appended to the schema.
    """
    path = Path(path)
    delim = _detect_delimiter(path, delimiter)
    sentinel_set = set(sentinels)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delim)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TableFormatError(f"{path}: empty file, no header row") from None
        rows = list(reader)

    extra = []
    for col, h in enumerate(header, start=1):
        if h in schema:
            continue
        if h.endswith(INDICATOR_SUFFIX) and h[: -len(INDICATOR_SUFFIX)] in schema:
            extra.append(_indicator_spec(h[: -len(INDICATOR_SUFFIX)]))
            continue
        raise TableFormatError(f"{path}:1: unknown column {h!r} (header field {col})")
    if len(set(header)) != len(header):
        raise TableFormatError(f"{path}:1: duplicate header names")
    absent = [n for n in schema.names if n not in header]
    if absent:
        raise TableFormatError(f"{path}:1: missing columns {absent}")
    full = schema.with_columns(extra) if extra else schema
    # keep schema order for the indicator columns as they appear in the file
    pos = {h: i for i, h in enumerate(header)}

    n = len(rows)
    values, missing = {}, {}
    for spec in full.columns:
        j = pos[spec.name]
        is_cont = spec.kind == CONTINUOUS
        vals = np.full(n, np.nan) if is_cont else np.full(n, -1, dtype=np.int64)
        mask = np.zeros(n, dtype=bool)
        label_code = {c: k for k, c in enumerate(spec.categories)}
        for i, row in enumerate(rows):
            lineno = i + 2
            if len(row) != len(header):
                raise TableFormatError(
                    f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
            cell = row[j].strip()
            if cell in sentinel_set:
                mask[i] = True
                continue
            if is_cont:
                try:
                    vals[i] = float(cell)
                except ValueError:
                    raise TableFormatError(
                        f"{path}:{lineno}: column {spec.name!r} (field {j + 1}): "
                        f"unparseable number {cell!r}") from None
            elif cell in label_code:
                vals[i] = label_code[cell]
            else:
                code = _binary_numeric(cell) if spec.kind == BINARY else None
                if code is None:
                    raise TableFormatError(
                        f"{path}:{lineno}: column {spec.name!r} (field {j + 1}): "
                        f"unknown category label {cell!r}")
                vals[i] = code
        values[spec.name] = vals
        missing[spec.name] = mask
    return DataTable(full, values, missing)


def _binary_numeric(cell: str):
    try:
        x = float(cell)
    except ValueError:
        return None
    return int(x) if x in (0.0, 1.0) else None


def format_value(spec: ColumnSpec, v) -> str:
    if spec.kind == CONTINUOUS:
        x = float(v)
        return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)
    return spec.categories[int(v)]


def write_table(table: DataTable, path, delimiter: str | None = None) -> None:
    path = Path(path)
    delim = _detect_delimiter(path, delimiter)
    specs = table.schema.columns
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delim, lineterminator="\n")
        w.writerow([s.name for s in specs])
        cols = [(s, table.values(s.name), table.mask(s.name)) for s in specs]
        for i in range(table.n_rows):
            w.writerow(["" if m[i] else format_value(s, v[i]) for s, v, m in cols])


# -- constraints ------------------------------------------------------------

def clip_to_ranges(table: DataTable) -> tuple[DataTable, dict[str, int]]:
    """Replace observed out-of-range values by the nearest plausible bound.

    Returns the clipped table and the number of clipped cells per column.
    """
    new, counts = {}, {}
    for spec in table.schema.columns:
        if spec.kind != CONTINUOUS or (spec.plausible_min is None and spec.plausible_max is None):
            continue
        v, m = table.values(spec.name), table.mask(spec.name)
        lo = -np.inf if spec.plausible_min is None else spec.plausible_min
        hi = np.inf if spec.plausible_max is None else spec.plausible_max
        out = v.copy()
        obs = ~m
        out[obs] = np.clip(v[obs], lo, hi)
        changed = int(np.count_nonzero(out[obs] != v[obs]))
        counts[spec.name] = changed
        if changed:
            new[spec.name] = out
    return table.replace(values=new), counts


def implausible_rows(table: DataTable, pressure: tuple[str, str] | None = ("SBP", "DBP")) -> np.ndarray:
    """Boolean mask of rows breaking a plausible range or the SBP > DBP rule."""
    bad = np.zeros(table.n_rows, dtype=bool)
    for spec in table.schema.columns:
        if spec.kind != CONTINUOUS:
            continue
        v, obs = table.values(spec.name), ~table.mask(spec.name)
        if spec.plausible_min is not None:
            bad |= obs & (v < spec.plausible_min)
        if spec.plausible_max is not None:
            bad |= obs & (v > spec.plausible_max)
    if pressure and all(p in table for p in pressure):
        sbp, dbp = pressure
        both = ~table.mask(sbp) & ~table.mask(dbp)
        bad |= both & (table.values(sbp) <= table.values(dbp))
    return bad


def filter_implausible(table: DataTable, pressure: tuple[str, str] | None = ("SBP", "DBP")
                       ) -> tuple[DataTable, np.ndarray]:
    """Drop rows violating a plausible range or systolic <= diastolic pressure.

    Rows where either pressure is missing are not judged by the pressure rule.
    """
    bad = implausible_rows(table, pressure)
    return table.take(np.flatnonzero(~bad)), np.flatnonzero(bad)


# -- missingness ------------------------------------------------------------

def add_missingness_indicators(table: DataTable) -> DataTable:
    """Append ``<name>__miss`` (1 = missing, 0 = present) for every column with a gap."""
    extra, values = [], {}
    for spec in table.schema.columns:
        if spec.name.endswith(INDICATOR_SUFFIX) or not table.has_missing(spec.name):
            continue
        ind = _indicator_spec(spec.name)
        extra.append(ind)
        values[ind.name] = table.mask(spec.name).astype(np.int64)
    if not extra:
        return table
    return table.replace(values=values, schema=table.schema.with_columns(extra))


def indicator_columns(table: DataTable) -> list[str]:
    return [n for n in table.names if n.endswith(INDICATOR_SUFFIX)]


def reapply_missingness(complete: DataTable, indicators: DataTable | Mapping[str, np.ndarray] | None = None
                        ) -> DataTable:
    """Mask every cell whose indicator is 1, then drop the indicator columns.

    ``indicators`` defaults to the ``__miss`` columns carried by ``complete``
    itself; a separate table or a name -> array mapping is also accepted.
    """
    if indicators is None:
        indicators = complete
    if isinstance(indicators, DataTable):
        if indicators.n_rows != complete.n_rows:
            raise ValueError(f"indicator table has {indicators.n_rows} rows, table has {complete.n_rows}")
        ind = {n: indicators.values(n) for n in indicator_columns(indicators)}
    else:
        ind = {k: np.asarray(v) for k, v in indicators.items()}
        for k, v in ind.items():
            if len(v) != complete.n_rows:
                raise ValueError(f"indicator {k!r} has {len(v)} rows, table has {complete.n_rows}")
    new_mask = {}
    for name, flag in ind.items():
        base = name[: -len(INDICATOR_SUFFIX)] if name.endswith(INDICATOR_SUFFIX) else name
        if base not in complete.schema:
            raise ValueError(f"indicator {name!r} does not match any column")
        new_mask[base] = complete.mask(base) | (np.asarray(flag) == 1)
    out = complete.replace(missing=new_mask)
    return out.drop_columns(indicator_columns(out))


@dataclass(frozen=True)
class MissingnessProfile:
    fractions: dict[str, float]

    def __getitem__(self, name: str) -> float:
        return self.fractions[name]


def missingness_profile(table: DataTable) -> MissingnessProfile:
    n = table.n_rows
    return MissingnessProfile({
        name: (float(np.count_nonzero(table.mask(name))) / n if n else 0.0)
        for name in table.names
    })


def compare_profiles(real: DataTable, synth: DataTable) -> list[tuple[str, float, float]]:
    """(column, real fraction, synthetic fraction) for continuous columns, for a parity plot."""
    pr, ps = missingness_profile(real), missingness_profile(synth)
    return [(s.name, pr[s.name], ps[s.name]) for s in real.schema.columns
            if s.kind == CONTINUOUS and s.name in ps.fractions]


__all__ = [
    "SchemaConfigError", "TableFormatError", "parse_schema", "load_schema", "reference_schema",
    "reference_schema_path", "load_table", "write_table", "clip_to_ranges", "filter_implausible",
    "implausible_rows", "add_missingness_indicators", "reapply_missingness", "indicator_columns",
    "MissingnessProfile", "missingness_profile", "compare_profiles", "INDICATOR_SUFFIX",
]
