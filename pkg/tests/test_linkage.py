import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agriprivacy.linkage import (
    LinkageError,
    TimeSeries,
    align,
    format_week,
    link,
    load_monthly_csv,
    load_timeseries_csv,
    parse_week,
    pearson,
    weeks_of_month,
)
from oracles import pearson_by_hand


def series(values, start=1):
    return TimeSeries(tuple((format_week(2018, start + i), v) for i, v in enumerate(values)))


def test_three_row_fixture_sorted(data_dir):
    s = load_timeseries_csv(data_dir / "prices_a.csv", "week", "price_per_unit", {"product": "potatoes"})
    assert s.points == (("2018-W01", 0.8), ("2018-W02", 0.85), ("2018-W03", 0.9))
    assert not s.resampled


def test_duplicate_week_names_bucket(data_dir):
    with pytest.raises(LinkageError, match="2018-W01"):
        load_timeseries_csv(data_dir / "prices_dup.csv", "week", "price_per_unit", {"product": "potatoes"})


def test_bad_bucket_and_value(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("week,value\n2018-13,1\n")
    with pytest.raises(LinkageError, match="row 2"):
        load_timeseries_csv(p, "week", "value")
    p.write_text("week,value\n2018-W13,abc\n")
    with pytest.raises(LinkageError, match="non-numeric"):
        load_timeseries_csv(p, "week", "value")
    with pytest.raises(LinkageError, match="missing column"):
        load_timeseries_csv(p, "week", "price")


def test_week_helpers():
    assert parse_week("2020-W53") == (2020, 53)
    with pytest.raises(ValueError):
        parse_week("2018-W53")
    assert weeks_of_month("2018-01") == ["2018-W01", "2018-W02", "2018-W03", "2018-W04"]
    assert weeks_of_month("2018-02") == ["2018-W05", "2018-W06", "2018-W07", "2018-W08"]
    # 2021-01-01 is a Friday, so its week belongs to 2020
    assert weeks_of_month("2021-01")[0] == "2021-W01"


def test_monthly_upsampling(data_dir):
    s = load_monthly_csv(data_dir / "insecurity.csv", "month", "population_pct", {"level": "low"})
    assert s.resampled
    assert len(s) == 8
    assert s.values == [11.5] * 4 + [11.9] * 4


def test_timeseries_rejects_disorder_and_duplicates():
    with pytest.raises(LinkageError):
        TimeSeries((("2018-W02", 1.0), ("2018-W01", 2.0)))
    with pytest.raises(LinkageError, match="duplicate"):
        TimeSeries.from_unsorted([("2018-W02", 1.0), ("2018-W02", 2.0)])
    with pytest.raises(LinkageError):
        TimeSeries((("2018-W02", float("nan")),))


def test_align_examples(data_dir):
    a = load_timeseries_csv(data_dir / "weekly_a.csv", "week", "value")
    b = load_timeseries_csv(data_dir / "weekly_b.csv", "week", "value")
    assert align(a, b) == [
        ("2018-W03", 11.0, 0.7),
        ("2018-W04", 9.5, 0.9),
        ("2018-W05", 14.0, 0.6),
        ("2018-W06", 13.0, 0.65),
    ]
    assert len(align(a, a)) == 6
    assert align(series([1.0, 2.0]), series([1.0, 2.0], start=10)) == []


def test_pearson_examples(data_dir):
    a = series([1.0, 2.0, 3.0, 4.0])
    assert pearson(align(a, a)) == 1.0
    assert pearson(align(a, series([-1.0, -2.0, -3.0, -4.0]))) == -1.0
    x = load_timeseries_csv(data_dir / "pair_x.csv", "week", "value")
    y = load_timeseries_csv(data_dir / "pair_y.csv", "week", "value")
    # centered x: -1.5 -0.5 0.5 1.5, centered y: -0.5 -1.5 1.5 0.5; 3 / sqrt(5 * 5)
    assert pearson(align(x, y)) == 0.6


def test_pearson_degenerate():
    with pytest.raises(LinkageError, match="at least 3"):
        pearson(align(series([1.0, 2.0]), series([3.0, 1.0])))
    with pytest.raises(LinkageError, match="zero variance"):
        pearson(align(series([1.0, 1.0, 1.0]), series([3.0, 1.0, 2.0])))


def test_link_report(tmp_path, data_dir):
    a = load_timeseries_csv(data_dir / "weekly_a.csv", "week", "value")
    b = load_timeseries_csv(data_dir / "weekly_b.csv", "week", "value")
    rep = link(a, b, ("sales", "price"))
    assert rep.n == 4 and not rep.resampling_flag
    assert rep.r == pytest.approx(pearson_by_hand([11.0, 9.5, 14.0, 13.0], [0.7, 0.9, 0.6, 0.65]), abs=1e-12)
    csv_path, json_path = rep.write(tmp_path)
    assert csv_path.read_text().splitlines()[0] == "bucket,sales,price"
    assert link(series([1.0]), series([2.0])).r is None


values = st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=30)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_pearson_affine_invariance_and_symmetry(data):
    xs = data.draw(values)
    ys = data.draw(st.lists(st.floats(-1e3, 1e3), min_size=len(xs), max_size=len(xs)))
    a, b = series(xs), series(ys)
    try:
        r = pearson(align(a, b))
    except LinkageError:
        return
    # keep the spread well above rounding noise
    if min(max(xs) - min(xs), max(ys) - min(ys)) < 1e-3:
        return
    assert abs(pearson(align(b, a)) - r) <= 1e-12
    scale = data.draw(st.floats(0.1, 10))
    shift = data.draw(st.floats(-100, 100))
    r2 = pearson(align(series([scale * x + shift for x in xs]), b))
    assert abs(r2 - r) <= 1e-9
    assert -1.0 <= r <= 1.0
    assert math.isclose(r, pearson_by_hand(xs, ys), abs_tol=1e-9)


def test_pearson_extreme_magnitudes():
    tiny = [("2018-W01", 0.0, 0.0), ("2018-W02", 0.0, 0.0), ("2018-W03", 2.5e-103, 2.5e-103)]
    assert pearson(tiny) == 1.0
    with pytest.raises(LinkageError, match="too large"):
        pearson([("2018-W01", 1e200, 1e200), ("2018-W02", 0.0, 0.0), ("2018-W03", -3e200, 2e200)])
