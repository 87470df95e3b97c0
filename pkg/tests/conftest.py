import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from survaudit.core import (BINARY, CATEGORICAL, CONTINUOUS, EVENT, QUASI_IDENTIFIER, TIME,  # noqa: E402
                            ColumnSpec, DatasetSchema, DataTable)

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def small_schema() -> DatasetSchema:
    return DatasetSchema((
        ColumnSpec("age", CONTINUOUS, role=QUASI_IDENTIFIER, plausible_min=0, plausible_max=120),
        ColumnSpec("sex", BINARY, role=QUASI_IDENTIFIER, categories=("0", "1")),
        ColumnSpec("lab", CONTINUOUS, plausible_min=0, plausible_max=100),
        ColumnSpec("drug", BINARY, categories=("0", "1")),
        ColumnSpec("grade", CATEGORICAL, categories=("low", "mid", "high")),
        ColumnSpec("time", CONTINUOUS, role=TIME, missingness_allowed=False),
        ColumnSpec("event", BINARY, role=EVENT, categories=("0", "1"), missingness_allowed=False),
    ), quasi_identifiers=("age", "sex"))


def random_table(n: int, seed: int = 0, missing: float = 0.0, schema: DatasetSchema | None = None) -> DataTable:
    schema = schema or small_schema()
    rng = np.random.default_rng(seed)
    age = np.round(rng.uniform(30, 90, n), 1)
    lab = np.round(np.clip(40 + 0.3 * age + rng.normal(0, 8, n), 0, 100), 2)
    drug = (rng.random(n) < 0.4).astype(int)
    grade = rng.integers(0, 3, n)
    sex = rng.integers(0, 2, n)
    risk = 0.03 * (age - 60) + 0.4 * grade - 0.5 * drug
    t = np.ceil(rng.exponential(500 * np.exp(-risk)))
    c = rng.uniform(0, 1500, n)
    values = {"age": age, "sex": sex, "lab": lab, "drug": drug, "grade": grade,
              "time": np.maximum(np.minimum(t, np.ceil(c)), 1), "event": (t <= c).astype(int)}
    masks = {}
    if missing:
        for name in ("lab", "drug", "grade", "age"):
            masks[name] = rng.random(n) < missing
    return DataTable(schema, values, masks)


@pytest.fixture
def schema():
    return small_schema()


@pytest.fixture
def table():
    return random_table(200, seed=1, missing=0.15)
