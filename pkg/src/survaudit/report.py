"""MetricReport: nested, ordered record of an audit with lossless JSON round-trip."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from typing import Any

import numpy as np

# non-finite floats are written as {"nonfinite": "nan" | "inf" | "-inf"} so the
# document stays strict JSON and the flag is explicit
_NONFINITE_KEY = "nonfinite"


def to_plain(obj: Any) -> Any:
    """Convert dataclasses, numpy scalars/arrays and tuples into JSON-ready Python objects."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return {_NONFINITE_KEY: "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")}
    return obj


def is_flag(obj: Any) -> bool:
    return isinstance(obj, dict) and len(obj) == 1 and _NONFINITE_KEY in obj


def flag_value(obj: Any) -> Any:
    """The float behind a non-finite marker, or the object unchanged."""
    return float(obj[_NONFINITE_KEY]) if is_flag(obj) else obj


def nonfinite_paths(obj: Any, prefix: str = "") -> list[str]:
    """Dotted paths of every non-finite marker; these are the flagged fields of a report."""
    if is_flag(obj):
        return [prefix]
    out = []
    if isinstance(obj, dict):
        for k, v in obj.items():
            out += nonfinite_paths(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            out += nonfinite_paths(v, f"{prefix}[{i}]")
    return out


class MetricReport:
    """Thin wrapper over an ordered nested dict; field order is insertion order."""

    def __init__(self, data: dict | None = None):
        self.data = to_plain(data or {})

    def __getitem__(self, key):
        return self.data[key]

    def __eq__(self, other):
        return isinstance(other, MetricReport) and self.dumps() == other.dumps()

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, ensure_ascii=False, allow_nan=False) + "\n"

    dumps = to_json

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        rep = cls()
        rep.data = json.loads(text)
        return rep

    def flagged(self) -> list[str]:
        return nonfinite_paths(self.data)

    @property
    def failures(self) -> list[dict]:
        return self.data.get("failures", [])

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json())

    @classmethod
    def read(cls, path) -> "MetricReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    # -- flat export --------------------------------------------------------
    def utility_rows(self) -> list[list[str]]:
        """Rows of (dataset, paradigm, "C (IBS)" per model family), like a results table."""
        families = self.data.get("config", {}).get("families", ["cox", "rsf"])
        header = ["dataset", "paradigm"] + list(families)
        rows = [header]

        def cell(entry):
            if not entry or "c_index" not in entry:
                return "failed"
            c, b = entry["c_index"], entry["ibs"]
            fmt = lambda v: "nan" if is_flag(v) else f"{v:.3f}"  # noqa: E731
            return f"{fmt(c)} ({fmt(b)})"

        real = self.data.get("real", {}).get("utility", {})
        for paradigm, res in real.items():
            rows.append(["real", paradigm] + [cell(res.get(f)) for f in families])
        for section in ("datasets", "equalized"):
            for name, ds in self.data.get(section, {}).items():
                label = name if section == "datasets" else f"{name} (equalized)"
                for paradigm, res in ds.get("utility", {}).items():
                    rows.append([label, paradigm] + [cell(res.get(f)) for f in families])
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.utility_rows())
        return buf.getvalue()


__all__ = ["MetricReport", "to_plain", "nonfinite_paths", "is_flag", "flag_value"]
