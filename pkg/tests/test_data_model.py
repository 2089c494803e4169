import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agriprivacy.clustering import kmeans
from agriprivacy.data_model import (
    BINARY,
    CONTINUOUS,
    FARMERS_MARKET_SCHEMA,
    CellParseError,
    ClusterSpec,
    Column,
    DataError,
    DuplicatePseudonymError,
    EmptyTableError,
    FeatureTable,
    GeneratorConfig,
    MissingColumnError,
    Schema,
    SchemaError,
    StandardizationParams,
    apply_standardizer,
    fit_standardizer,
    generate_labeled_market,
    generate_synthetic_market,
    load_csv,
    partition,
    write_csv,
)

SIMPLE = Schema((Column("id", "identifier"), Column("x", CONTINUOUS)))


def simple_table(xs, prefix="r"):
    return FeatureTable(SIMPLE, [f"{prefix}{i}" for i in range(len(xs))], np.array(xs, dtype=float)[:, None])


def test_load_table2_rows(data_dir):
    t = load_csv(data_dir / "table2.csv", FARMERS_MARKET_SCHEMA)
    assert t.n == 5
    assert t.d == 12
    assert t.pseudonyms == ("6815", "5991", "5663", "5950", "5686")
    assert t.column("Sales").tolist() == [414.0, 157.0, 670.0, 70.0, 285.0]
    assert t.column("#Visitors").tolist() == [70.0, 404.0, 6.0, 53.0, 166.0]


def test_empty_data_section(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text(",".join(FARMERS_MARKET_SCHEMA.names) + "\n")
    with pytest.raises(EmptyTableError, match="empty table"):
        load_csv(p, FARMERS_MARKET_SCHEMA)


def test_bad_cell_names_row_and_column(data_dir, tmp_path):
    text = (data_dir / "table2.csv").read_text().replace("157.0", "abc")
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(CellParseError, match=r"row 3, column 'Sales'"):
        load_csv(p, FARMERS_MARKET_SCHEMA)


def test_missing_column(data_dir, tmp_path):
    lines = (data_dir / "table2.csv").read_text().splitlines()
    p = tmp_path / "m.csv"
    p.write_text("\n".join(",".join(line.split(",")[:-1]) for line in lines) + "\n")
    with pytest.raises(MissingColumnError, match="#Visitors"):
        load_csv(p, FARMERS_MARKET_SCHEMA)


def test_duplicate_pseudonym(data_dir, tmp_path):
    text = (data_dir / "table2.csv").read_text().replace("5991,", "6815,")
    p = tmp_path / "d.csv"
    p.write_text(text)
    with pytest.raises(DuplicatePseudonymError, match="6815"):
        load_csv(p, FARMERS_MARKET_SCHEMA)


def test_indicator_must_be_binary(data_dir, tmp_path):
    text = (data_dir / "table2.csv").read_text().replace("6815,42.22,0", "6815,42.22,2")
    p = tmp_path / "b.csv"
    p.write_text(text)
    with pytest.raises(CellParseError, match="F&V"):
        load_csv(p, FARMERS_MARKET_SCHEMA)


def test_csv_roundtrip(data_dir, tmp_path):
    t = load_csv(data_dir / "table2.csv", FARMERS_MARKET_SCHEMA)
    write_csv(t, tmp_path / "out.csv")
    assert load_csv(tmp_path / "out.csv", FARMERS_MARKET_SCHEMA) == t


def test_schema_rules():
    with pytest.raises(SchemaError):
        Schema((Column("x", CONTINUOUS),))
    with pytest.raises(SchemaError):
        Schema((Column("id", "identifier"), Column("id", CONTINUOUS)))
    assert Schema.from_dict(FARMERS_MARKET_SCHEMA.to_dict()) == FARMERS_MARKET_SCHEMA
    assert len(FARMERS_MARKET_SCHEMA.indices(BINARY)) == 9


def test_table_is_read_only():
    t = simple_table([1.0, 2.0])
    with pytest.raises(ValueError):
        t.values[0, 0] = 5.0


def test_standardizer_examples(data_dir):
    p = fit_standardizer(simple_table([0.0, 2.0]))
    assert p.means.tolist() == [1.0] and p.scales.tolist() == [1.0]
    p = fit_standardizer(simple_table([5.0, 5.0, 5.0]))
    assert p.means.tolist() == [5.0] and p.scales.tolist() == [1.0]
    t2 = load_csv(data_dir / "table2.csv", FARMERS_MARKET_SCHEMA)
    sales = FARMERS_MARKET_SCHEMA.feature_names.index("Sales")
    assert fit_standardizer(t2).means[sales] == pytest.approx(319.2, abs=1e-12)


def test_standardizer_needs_two_rows():
    with pytest.raises(DataError, match="insufficient rows"):
        fit_standardizer(simple_table([1.0]))


def test_apply_standardizer_examples(data_dir):
    t = simple_table([0.0, 2.0])
    assert apply_standardizer(fit_standardizer(t), t).values[:, 0].tolist() == [-1.0, 1.0]
    ident = StandardizationParams([0.0], [1.0])
    assert np.array_equal(apply_standardizer(ident, t).values, t.values)
    t2 = load_csv(data_dir / "table2.csv", FARMERS_MARKET_SCHEMA)
    z = apply_standardizer(fit_standardizer(t2), t2)
    assert np.all(np.abs(z.values.mean(axis=0)) < 1e-12)
    assert not z.schema.indices(BINARY)


def test_apply_standardizer_dimension_mismatch():
    with pytest.raises(DataError, match="dimension mismatch"):
        apply_standardizer(StandardizationParams([0.0, 0.0], [1.0, 1.0]), simple_table([1.0, 2.0]))


def test_partition_examples():
    t9 = simple_table(range(9))
    parts = partition(t9, 3, seed=4)
    assert [p.n for p in parts] == [3, 3, 3]
    ids = [set(p.pseudonyms) for p in parts]
    assert set().union(*ids) == set(t9.pseudonyms)
    assert sum(len(s) for s in ids) == 9
    again = partition(t9, 3, seed=4)
    assert all(a == b for a, b in zip(parts, again))
    assert sorted(p.n for p in partition(simple_table(range(10)), 3, seed=1)) == [3, 3, 4]


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 60), parts=st.integers(2, 6), seed=st.integers(0, 2**31))
def test_partition_is_balanced_and_disjoint(n, parts, seed):
    t = simple_table(range(n))
    if parts > n:
        return
    out = partition(t, parts, seed)
    sizes = [p.n for p in out]
    assert max(sizes) - min(sizes) <= 1 and sum(sizes) == n
    seen = [x for p in out for x in p.pseudonyms]
    assert sorted(seen) == sorted(t.pseudonyms)


def test_generator_zero_spread():
    spec = [ClusterSpec((10.0, 300.0, 50.0), 0.0, 1.0)]
    t = generate_synthetic_market(20, spec, seed=3)
    for name, c in zip(("Miles from Market", "Sales", "#Visitors"), (10.0, 300.0, 50.0)):
        assert np.all(t.column(name) == c)


def test_generator_determinism(tmp_path):
    spec = [ClusterSpec((10.0, 300.0, 50.0), 5.0, 1.0)]
    write_csv(generate_synthetic_market(30, spec, seed=9), tmp_path / "a.csv")
    write_csv(generate_synthetic_market(30, spec, seed=9), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert generate_synthetic_market(30, spec, seed=9) == generate_synthetic_market(30, spec, seed=9)
    assert generate_synthetic_market(30, spec, seed=9) != generate_synthetic_market(30, spec, seed=10)


def test_generator_two_clusters_recovered_by_kmeans():
    spec = [ClusterSpec((10.0, 100.0, 50.0), 1.0, 1.0), ClusterSpec((60.0, 900.0, 400.0), 1.0, 1.0)]
    t, truth = generate_labeled_market(80, spec, seed=2)
    labels = kmeans(t.values, 2, seed=0).labels
    agree = np.mean(labels == truth)
    assert agree in (0.0, 1.0)


def test_generator_config_json_roundtrip():
    cfg = GeneratorConfig(n=10, clusters=[ClusterSpec((1.0, 2.0, 3.0), 0.5, 2.0)], seed=4)
    assert GeneratorConfig.from_json(cfg.to_json()) == cfg
