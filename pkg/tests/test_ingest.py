import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_table
from survaudit.core import DataTable, validate
from survaudit.impute import impute_median
from survaudit.ingest import (INDICATOR_SUFFIX, SchemaConfigError, TableFormatError, add_missingness_indicators,
                              clip_to_ranges, compare_profiles, filter_implausible, load_table,
                              missingness_profile, parse_schema, reapply_missingness, reference_schema,
                              write_table)

SCHEMA_TEXT = """
[dataset]
time = Days
event = dead
quasi_identifiers = Age

[column:Age]
kind = continuous

[column:HGB]
kind = continuous
min = 3
max = 20

[column:type]
kind = categorical
categories = HFpEF, HFmrEF, HFrEF

[column:Days]
kind = continuous
missingness_allowed = false

[column:dead]
kind = binary
"""


def test_reference_schema_inventory():
    s = reference_schema()
    assert len(s.names) == 35
    assert s.time == "Days" and s.event == "dead"
    assert s.quasi_identifiers == ("HIGH", "BW", "Age", "Gender")
    assert s["Creatinine"].plausible_min == 0.1 and s["Creatinine"].plausible_max == 30
    assert s["type"].categories == ("HFpEF", "HFmrEF", "HFrEF")
    assert not s["Days"].missingness_allowed


def test_parse_schema_positional_errors():
    bad = SCHEMA_TEXT.replace("kind = categorical", "kind = ordinal")
    with pytest.raises(SchemaConfigError, match=r"cfg:\d+"):
        parse_schema(bad, "cfg")
    with pytest.raises(SchemaConfigError, match="max"):
        parse_schema(SCHEMA_TEXT.replace("max = 20", "max = lots"), "cfg")


def test_load_table_basic(tmp_path):
    s = parse_schema(SCHEMA_TEXT)
    p = tmp_path / "t.csv"
    p.write_text("Days,dead,type,HGB,Age\n1578,1,HFmrEF,,67\n20,0,HFrEF,12.5,NA\n")
    t = load_table(p, s)
    assert t.n_rows == 2
    assert t.values("type").tolist() == [1, 2]
    assert t.mask("HGB").tolist() == [True, False]
    assert t.mask("Age").tolist() == [False, True]


def test_load_table_minimal_header(tmp_path):
    s = parse_schema(SCHEMA_TEXT).without(["HGB", "type"])
    p = tmp_path / "t.csv"
    p.write_text("Age,Days,dead\n67,1578,1\n")
    t = load_table(p, s)
    assert t.n_rows == 1 and not t.has_missing()


@pytest.mark.parametrize("body,needle", [
    ("Days,dead,type,HGB,Age,Zed\n1,1,HFpEF,3,4,5\n", "unknown column"),
    ("Days,dead,type,HGB,Age\n1,1,HFpEF,abc,4\n", ":2: column 'HGB'"),
    ("Days,dead,type,HGB,Age\n1,1,HFxEF,3,4\n", "unknown category"),
    ("Days,dead,type,HGB,Age\n1,1,HFpEF,3\n", "expected 5 fields"),
    ("Days,dead,type,HGB\n1,1,HFpEF,3\n", "missing columns"),
])
def test_load_table_errors_carry_coordinates(tmp_path, body, needle):
    p = tmp_path / "t.csv"
    p.write_text(body)
    with pytest.raises(TableFormatError, match=needle):
        load_table(p, parse_schema(SCHEMA_TEXT))


def test_write_load_roundtrip(tmp_path, table, schema):
    p = tmp_path / "rt.csv"
    write_table(table, p)
    back = load_table(p, schema)
    assert back.equals(table)


def test_clip_to_ranges():
    s = reference_schema()
    from survaudit.simulate import simulate_cohort
    t = simulate_cohort(5, 0).table
    v = t.values("Creatinine").copy()
    v[0] = 45.0
    spo2 = t.values("SPO2").copy()
    spo2[1] = 99.0
    m = t.mask("HGB").copy()
    m[2] = True
    t = t.replace(values={"Creatinine": v, "SPO2": spo2}, missing={"HGB": m})
    out, counts = clip_to_ranges(t)
    assert out.values("Creatinine")[0] == 30.0 and counts["Creatinine"] == 1
    assert out.values("SPO2")[1] == 99.0
    assert out.mask("HGB")[2]
    assert not validate(out).of_kind("range")
    assert s.names == out.names


def _pressure_table(pairs):
    from survaudit.simulate import simulate_cohort
    t = simulate_cohort(len(pairs), 0, missing=False).table
    sbp = np.array([p[0] if p[0] is not None else np.nan for p in pairs], float)
    dbp = np.array([p[1] if p[1] is not None else np.nan for p in pairs], float)
    return t.replace(values={"SBP": sbp, "DBP": dbp},
                     missing={"SBP": np.isnan(sbp), "DBP": np.isnan(dbp)})


def test_filter_implausible_pressure_rule():
    t = _pressure_table([(120, 130), (120, 120), (148, 82), (None, 90), (120, None)])
    out, dropped = filter_implausible(t)
    assert dropped.tolist() == [0, 1]
    assert out.n_rows == 3


def test_filter_implausible_identity_on_clean_table():
    from survaudit.simulate import simulate_cohort
    t = simulate_cohort(200, 4).table
    assert validate(t).ok and np.all(t.values("SBP") > t.values("DBP"))
    out, dropped = filter_implausible(t)
    assert dropped.size == 0 and out.equals(t)


def test_missingness_indicators(table):
    ind = add_missingness_indicators(table)
    assert f"lab{INDICATOR_SUFFIX}" in ind.names
    assert "time" + INDICATOR_SUFFIX not in ind.names  # no gaps there
    np.testing.assert_array_equal(ind.values("lab__miss"), table.mask("lab").astype(int))
    assert ind.values("lab__miss").mean() == table.mask("lab").mean()


def test_reapply_identity_and_single_cell(schema):
    t = random_table(6, seed=2)
    same = reapply_missingness(t, {"lab__miss": np.zeros(6, int)})
    assert same.equals(t)
    flag = np.zeros(6, int)
    flag[3] = 1
    one = reapply_missingness(t, {"lab__miss": flag})
    assert one.mask("lab").tolist() == [False, False, False, True, False, False]
    with pytest.raises(ValueError, match="rows"):
        reapply_missingness(t, {"lab__miss": np.zeros(5, int)})


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.5))
def test_indicator_impute_reapply_restores_mask(seed, rate):
    t = random_table(40, seed=seed, missing=rate)
    ind = add_missingness_indicators(t)
    base = ind.drop_columns([n for n in ind.names if n.endswith(INDICATOR_SUFFIX)])
    filled = impute_median(base)
    assert not filled.has_missing()
    indicators = ind.take(np.arange(ind.n_rows))
    back = reapply_missingness(filled, indicators)
    for n in t.names:
        np.testing.assert_array_equal(back.mask(n), t.mask(n))


def test_missingness_profile(schema):
    t = random_table(4)
    assert all(v == 0.0 for v in missingness_profile(t).fractions.values())
    m = np.array([False, True, False, False])
    t = t.replace(missing={"lab": m})
    prof = missingness_profile(t)
    assert prof["lab"] == 0.25
    assert ("lab", 0.25, 0.25) in compare_profiles(t, t)


def test_table_from_csv_has_expected_type(tmp_path):
    s = parse_schema(SCHEMA_TEXT)
    p = tmp_path / "semi.tsv"
    p.write_text("Days\tdead\ttype\tHGB\tAge\n3\t0\tHFpEF\t10\t50\n")
    t = load_table(p, s)
    assert isinstance(t, DataTable) and t.values("Days")[0] == 3.0
