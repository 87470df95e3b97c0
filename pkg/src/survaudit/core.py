"""Schema and table model shared by the rest of the package.

A :class:`DataTable` is column-major: continuous columns hold float64 arrays,
binary/categorical columns hold int64 codes into the schema's category list.
Missingness is carried by an explicit boolean mask per column; the value stored
under a masked cell is never read by any metric.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

CONTINUOUS = "continuous"
BINARY = "binary"
CATEGORICAL = "categorical"
KINDS = (CONTINUOUS, BINARY, CATEGORICAL)

FEATURE = "feature"
TIME = "time"
EVENT = "event"
QUASI_IDENTIFIER = "quasi_identifier_feature"
ROLES = (FEATURE, TIME, EVENT, QUASI_IDENTIFIER)

DEFAULT_QUASI_IDENTIFIERS = ("HIGH", "BW", "Age", "Gender")


class SchemaError(ValueError):
    """Raised when a schema or a table violates the structural contract."""


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    role: str = FEATURE
    unit: str = ""
    plausible_min: float | None = None
    plausible_max: float | None = None
    categories: tuple[str, ...] = ()
    missingness_allowed: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise SchemaError(f"column {self.name!r}: unknown role {self.role!r}")
        if self.kind == BINARY:
            cats = tuple(self.categories) or ("0", "1")
            if cats != ("0", "1"):
                raise SchemaError(f"binary column {self.name!r} must have categories (0, 1)")
            object.__setattr__(self, "categories", cats)
        elif self.kind == CATEGORICAL:
            cats = tuple(self.categories)
            if len(cats) < 2 or len(set(cats)) != len(cats):
                raise SchemaError(f"categorical column {self.name!r} needs >= 2 distinct categories")
            object.__setattr__(self, "categories", cats)
        elif self.categories:
            raise SchemaError(f"continuous column {self.name!r} cannot declare categories")
        if self.kind != CONTINUOUS and (self.plausible_min is not None or self.plausible_max is not None):
            raise SchemaError(f"column {self.name!r}: plausible range only applies to continuous columns")
        lo, hi = self.plausible_min, self.plausible_max
        if lo is not None and hi is not None and not lo < hi:
            raise SchemaError(f"column {self.name!r}: plausible_min must be < plausible_max")

    @property
    def is_continuous(self) -> bool:
        return self.kind == CONTINUOUS

    @property
    def is_feature(self) -> bool:
        return self.role in (FEATURE, QUASI_IDENTIFIER)


@dataclass(frozen=True)
class DatasetSchema:
    columns: tuple[ColumnSpec, ...]
    quasi_identifiers: tuple[str, ...] = DEFAULT_QUASI_IDENTIFIERS

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate column names: {dupes}")
        qi = tuple(q for q in self.quasi_identifiers)
        missing = [q for q in qi if q not in names]
        if missing:
            raise SchemaError(f"quasi-identifiers not in schema: {missing}")
        object.__setattr__(self, "quasi_identifiers", qi)
        for role in (TIME, EVENT):
            n = sum(c.role == role for c in self.columns)
            if n != 1:
                raise SchemaError(f"schema needs exactly one {role} column, found {n}")
        if self[self.time].kind != CONTINUOUS:
            raise SchemaError("time column must be continuous")
        if self[self.event].kind != BINARY:
            raise SchemaError("event column must be binary")

    def __getitem__(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def time(self) -> str:
        return next(c.name for c in self.columns if c.role == TIME)

    @property
    def event(self) -> str:
        return next(c.name for c in self.columns if c.role == EVENT)

    @property
    def features(self) -> list[str]:
        return [c.name for c in self.columns if c.is_feature]

    @property
    def sensitive(self) -> list[str]:
        return [n for n in self.features if n not in self.quasi_identifiers]

    def with_columns(self, extra: Sequence[ColumnSpec]) -> "DatasetSchema":
        return DatasetSchema(self.columns + tuple(extra), self.quasi_identifiers)

    def without(self, names: Iterable[str]) -> "DatasetSchema":
        drop = set(names)
        return DatasetSchema(
            tuple(c for c in self.columns if c.name not in drop),
            tuple(q for q in self.quasi_identifiers if q not in drop),
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class DataTable:
    """Immutable column-major table bound to a :class:`DatasetSchema`."""

    def __init__(self, schema: DatasetSchema, values: Mapping[str, np.ndarray],
                 missing: Mapping[str, np.ndarray] | None = None):
        missing = missing or {}
        unknown = set(values) - set(schema.names)
        if unknown:
            raise SchemaError(f"values for unknown columns: {sorted(unknown)}")
        absent = [n for n in schema.names if n not in values]
        if absent:
            raise SchemaError(f"no values for columns: {absent}")
        lengths = {len(values[n]) for n in schema.names}
        if len(lengths) > 1:
            raise SchemaError(f"column lengths differ: {sorted(lengths)}")
        self.schema = schema
        self.n_rows = lengths.pop() if lengths else 0
        self._values: dict[str, np.ndarray] = {}
        self._mask: dict[str, np.ndarray] = {}
        for spec in schema.columns:
            raw = np.asarray(values[spec.name])
            m = missing.get(spec.name)
            m = np.zeros(self.n_rows, dtype=bool) if m is None else np.asarray(m, dtype=bool)
            if m.shape != (self.n_rows,):
                raise SchemaError(f"mask for {spec.name!r} has wrong shape {m.shape}")
            if spec.is_continuous:
                v = raw.astype(float)
            else:
                if raw.dtype.kind == "f":
                    obs = raw[~m]
                    if np.any(obs != np.round(obs)):
                        raise SchemaError(f"non-integer code in column {spec.name!r}")
                    raw = np.where(m, -1, np.nan_to_num(raw, nan=-1.0))
                v = raw.astype(np.int64)
            self._values[spec.name] = _frozen(v)
            self._mask[spec.name] = _frozen(m)

    # -- access -------------------------------------------------------------
    def __len__(self) -> int:
        return self.n_rows

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __repr__(self) -> str:
        return f"DataTable({self.n_rows} rows x {len(self._values)} columns)"

    @property
    def names(self) -> list[str]:
        return self.schema.names

    def values(self, name: str) -> np.ndarray:
        return self._values[name]

    def mask(self, name: str) -> np.ndarray:
        return self._mask[name]

    def observed(self, name: str) -> np.ndarray:
        """Values of the non-missing cells of ``name``."""
        return self._values[name][~self._mask[name]]

    def has_missing(self, name: str | None = None) -> bool:
        if name is not None:
            return bool(self._mask[name].any())
        return any(m.any() for m in self._mask.values())

    # -- derived tables -----------------------------------------------------
    def replace(self, values: Mapping[str, np.ndarray] | None = None,
                missing: Mapping[str, np.ndarray] | None = None,
                schema: DatasetSchema | None = None) -> "DataTable":
        schema = schema or self.schema
        vals = {n: self._values[n] for n in schema.names if n in self._values}
        msk = {n: self._mask[n] for n in schema.names if n in self._mask}
        vals.update(values or {})
        msk.update(missing or {})
        return DataTable(schema, vals, msk)

    def take(self, rows) -> "DataTable":
        rows = np.asarray(rows)
        return DataTable(
            self.schema,
            {n: v[rows] for n, v in self._values.items()},
            {n: m[rows] for n, m in self._mask.items()},
        )

    def drop_columns(self, names: Iterable[str]) -> "DataTable":
        schema = self.schema.without(names)
        return DataTable(
            schema,
            {n: self._values[n] for n in schema.names},
            {n: self._mask[n] for n in schema.names},
        )

    def equals(self, other: "DataTable") -> bool:
        """Cell-wise equality on observed cells plus identical masks."""
        if self.schema != other.schema or self.n_rows != other.n_rows:
            return False
        for n in self.names:
            m = self._mask[n]
            if not np.array_equal(m, other.mask(n)):
                return False
            if not np.array_equal(self._values[n][~m], other.values(n)[~m]):
                return False
        return True

    def digest(self) -> str:
        """Content hash over names, masks and observed values."""
        h = hashlib.sha256()
        for n in self.names:
            m = self._mask[n]
            h.update(n.encode())
            h.update(np.ascontiguousarray(m).tobytes())
            v = np.where(m, 0, self._values[n])
            h.update(np.ascontiguousarray(v).tobytes())
        return h.hexdigest()

    @classmethod
    def from_rows(cls, schema: DatasetSchema, rows: Sequence[Mapping[str, object]]) -> "DataTable":
        """Build a table from dicts of already-decoded values; ``None`` marks a missing cell."""
        values, missing = {}, {}
        for spec in schema.columns:
            col = [r.get(spec.name) for r in rows]
            m = np.array([v is None for v in col], dtype=bool)
            fill = np.nan if spec.is_continuous else -1
            values[spec.name] = np.array([fill if v is None else v for v in col],
                                         dtype=float if spec.is_continuous else np.int64)
            missing[spec.name] = m
        return cls(schema, values, missing)


# -- validation -------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    row: int
    column: str
    kind: str  # "range" | "code" | "missing_outcome"
    value: float | None = None

    def __str__(self):
        return f"row {self.row}, column {self.column}: {self.kind} ({self.value})"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def by_column(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for v in self.violations:
            out[v.column] = out.get(v.column, 0) + 1
        return out

    def of_kind(self, kind: str) -> list[Violation]:
        return [v for v in self.violations if v.kind == kind]


def validate(table: DataTable) -> ValidationReport:
    """List out-of-range values, invalid codes and missing outcome cells."""
    report = ValidationReport()
    schema = table.schema
    for spec in schema.columns:
        v, m = table.values(spec.name), table.mask(spec.name)
        if spec.role in (TIME, EVENT):
            for i in np.flatnonzero(m):
                report.violations.append(Violation(int(i), spec.name, "missing_outcome"))
        if spec.is_continuous:
            bad = ~m & ~np.isfinite(v)
            if spec.plausible_min is not None:
                bad |= ~m & (v < spec.plausible_min)
            if spec.plausible_max is not None:
                bad |= ~m & (v > spec.plausible_max)
            for i in np.flatnonzero(bad):
                report.violations.append(Violation(int(i), spec.name, "range", float(v[i])))
        else:
            bad = ~m & ((v < 0) | (v >= len(spec.categories)))
            for i in np.flatnonzero(bad):
                report.violations.append(Violation(int(i), spec.name, "code", float(v[i])))
    return report


# -- normalization ----------------------------------------------------------

MIN_MAX = "min_max"
Z_SCORE = "z_score"


@dataclass(frozen=True)
class NormalizationParams:
    mode: str
    stats: dict[str, tuple[float, float]]  # min_max: (min, max); z_score: (mean, sd)
    fitted_on: str = ""

    def transform(self, name: str, x: np.ndarray) -> np.ndarray:
        a, b = self.stats[name]
        x = np.asarray(x, dtype=float)
        if self.mode == MIN_MAX:
            span = b - a
            return np.zeros_like(x) if span == 0 else (x - a) / span
        return np.zeros_like(x) if b == 0 else (x - a) / b

    def inverse(self, name: str, z: np.ndarray) -> np.ndarray:
        a, b = self.stats[name]
        z = np.asarray(z, dtype=float)
        if self.mode == MIN_MAX:
            return a + z * (b - a)
        return a + z * b


def fit_normalization(tables: Sequence[DataTable], mode: str = MIN_MAX,
                      fitted_on: str = "") -> NormalizationParams:
    """Pool the observed cells of every continuous column across ``tables``."""
    if mode not in (MIN_MAX, Z_SCORE):
        raise ValueError(f"unknown normalization mode {mode!r}")
    if not tables:
        raise ValueError("need at least one table")
    schema = tables[0].schema
    for t in tables[1:]:
        if t.schema.names != schema.names:
            raise SchemaError("tables do not share a schema")
    stats = {}
    for spec in schema.columns:
        if not spec.is_continuous:
            continue
        pooled = np.concatenate([t.observed(spec.name) for t in tables])
        if pooled.size == 0:
            raise ValueError(f"column {spec.name!r} has no observed values to normalize")
        if mode == MIN_MAX:
            stats[spec.name] = (float(pooled.min()), float(pooled.max()))
        else:
            # sort first so the result does not depend on row order
            pooled = np.sort(pooled)
            stats[spec.name] = (float(pooled.mean()), float(pooled.std()))
    return NormalizationParams(mode, stats, fitted_on)


def apply_normalization(table: DataTable, params: NormalizationParams) -> DataTable:
    missing_cols = [n for n, s in ((c.name, c) for c in table.schema.columns)
                    if s.is_continuous and n not in params.stats]
    if missing_cols:
        raise SchemaError(f"normalization params lack columns {missing_cols}")
    new = {}
    for spec in table.schema.columns:
        if not spec.is_continuous:
            continue
        v, m = table.values(spec.name), table.mask(spec.name)
        out = v.copy()
        out[~m] = params.transform(spec.name, v[~m])
        new[spec.name] = out
    return table.replace(values=new)


# -- model-facing encodings -------------------------------------------------

def expanded_names(schema: DatasetSchema, columns: Sequence[str]) -> list[str]:
    """Design-matrix column names: categoricals one-hot, reference level dropped."""
    out = []
    for n in columns:
        spec = schema[n]
        if spec.kind == CATEGORICAL:
            out.extend(f"{n}={c}" for c in spec.categories[1:])
        else:
            out.append(n)
    return out


def design_matrix(table: DataTable, columns: Sequence[str] | None = None) -> np.ndarray:
    """Numeric matrix of ``columns`` (default: all features) with one-hot categoricals.

    Missing cells come out as NaN; callers that need complete data impute first.
    """
    schema = table.schema
    columns = schema.features if columns is None else list(columns)
    blocks = []
    for n in columns:
        spec = schema[n]
        v, m = table.values(n), table.mask(n)
        if spec.kind == CATEGORICAL:
            k = len(spec.categories)
            block = (v[:, None] == np.arange(1, k)[None, :]).astype(float)
            block[m] = np.nan
        else:
            block = v.astype(float)[:, None].copy()
            block[m] = np.nan
        blocks.append(block)
    if not blocks:
        return np.empty((table.n_rows, 0))
    return np.hstack(blocks)
