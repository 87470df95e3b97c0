from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import DataTable, design_matrix, expanded_names


@dataclass(frozen=True)
class SurvivalData:
    times: np.ndarray
    events: np.ndarray
    X: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        e = np.asarray(self.events).astype(np.int64)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if not (t.shape[0] == e.shape[0] == X.shape[0]):
            raise ValueError("times, events and features differ in length")
        if np.any(~np.isfinite(t)) or np.any(t <= 0):
            raise ValueError("survival times must be finite and > 0")
        if np.any((e != 0) & (e != 1)):
            raise ValueError("events must be 0/1")
        if np.any(~np.isfinite(X)):
            raise ValueError("feature matrix has missing or non-finite cells")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "events", e)
        object.__setattr__(self, "X", X)
        if not self.feature_names:
            object.__setattr__(self, "feature_names", [f"x{j}" for j in range(X.shape[1])])

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def n_events(self) -> int:
        return int(self.events.sum())

    def take(self, rows) -> "SurvivalData":
        return SurvivalData(self.times[rows], self.events[rows], self.X[rows], self.feature_names)

    def with_features(self, X: np.ndarray) -> "SurvivalData":
        return SurvivalData(self.times, self.events, X, self.feature_names)

    @classmethod
    def from_table(cls, table: DataTable, columns: Sequence[str] | None = None) -> "SurvivalData":
        """Outcome arrays plus the one-hot design matrix of ``columns`` (default: all features)."""
        schema = table.schema
        columns = schema.features if columns is None else list(columns)
        X = design_matrix(table, columns)
        if table.has_missing(schema.time) or table.has_missing(schema.event):
            raise ValueError("time/event columns have missing cells")
        return cls(table.values(schema.time), table.values(schema.event), X,
                   expanded_names(schema, columns))
