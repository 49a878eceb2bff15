import itertools
import json

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from grafo.dataset import (BinaryDataset, Categorical, ColumnType, Continuous, DatasetError,
                           DegenerateColumnError, EmptyDataError, MixedDataset, SchemaError, apply_mapping,
                           best_bipartition, dichotomize, ingest_csv, parse_schema, write_csv, write_schema)


def _schema(tmp_path, columns):
    path = tmp_path / "schema.json"
    path.write_text(json.dumps({"columns": columns}))
    return path


SCHEMA4 = [
    {"name": "a", "kind": "continuous"},
    {"name": "b", "kind": "categorical", "levels": ["x", "y", "z"]},
    {"name": "c", "kind": "continuous"},
    {"name": "d", "kind": "categorical", "levels": ["-1", "1"]},
]


def test_casewise_deletion_reports_dropped_rows(tmp_path, caplog):
    csv = tmp_path / "d.csv"
    csv.write_text("a,b\n1.5,x\n,y\n2.5,y\n")
    schema = _schema(tmp_path, SCHEMA4[:2])
    with caplog.at_level("INFO"):
        data, dropped = ingest_csv(csv, schema)
    assert (data.n, dropped) == (2, 1)
    assert "1 row dropped" in caplog.text


def test_na_token_counts_as_missing(tmp_path):
    csv = tmp_path / "d.csv"
    csv.write_text("a,b\n1,x\nNA,y\n2,y\n3,x\n")
    data, dropped = ingest_csv(csv, _schema(tmp_path, SCHEMA4[:2]))
    assert dropped == 1 and data.n == 3


def test_complete_file_keeps_shape_and_types(tmp_path):
    csv = tmp_path / "d.csv"
    csv.write_text("a,b,c,d\n1,x,0.5,-1\n2,y,0.25,1\n3,z,1e3,1\n")
    data, dropped = ingest_csv(csv, _schema(tmp_path, SCHEMA4))
    assert dropped == 0 and (data.n, data.p) == (3, 4)
    assert [t.kind for t in data.types] == ["continuous", "categorical", "continuous", "categorical"]
    np.testing.assert_array_equal(data.values[:, 1], [0, 1, 2])
    assert data.n_levels.tolist() == [0, 3, 0, 2]


def test_quoted_cells_and_column_order(tmp_path):
    csv = tmp_path / "d.csv"
    csv.write_text('b,a\n"x",1\n"y",2\n')
    data, _ = ingest_csv(csv, _schema(tmp_path, SCHEMA4[:2]))
    assert data.names == ("a", "b")
    np.testing.assert_array_equal(data.values, [[1, 0], [2, 1]])


def test_single_level_column_is_degenerate(tmp_path):
    csv = tmp_path / "d.csv"
    csv.write_text("a,b\n1,x\n2,x\n")
    with pytest.raises(DegenerateColumnError):
        ingest_csv(csv, _schema(tmp_path, SCHEMA4[:2]))


def test_unknown_level_names_column_and_line(tmp_path):
    csv = tmp_path / "d.csv"
    csv.write_text("a,b\n1,x\n2,w\n")
    with pytest.raises(SchemaError, match=r"'b'.*line 3.*'w'"):
        ingest_csv(csv, _schema(tmp_path, SCHEMA4[:2]))


def test_no_rows_left_is_empty_data(tmp_path):
    csv = tmp_path / "d.csv"
    csv.write_text("a,b\n,x\n1,\n")
    with pytest.raises(EmptyDataError):
        ingest_csv(csv, _schema(tmp_path, SCHEMA4[:2]))


@pytest.mark.parametrize("columns,msg", [
    ([{"name": "a", "kind": "ordinal"}], "kind"),
    ([{"name": "a", "kind": "categorical", "levels": ["x"]}], "2 levels"),
    ([{"name": "a", "kind": "categorical", "levels": ["x", "x"]}], "duplicate"),
    ([{"name": "a", "kind": "continuous"}, {"name": "a", "kind": "continuous"}], "duplicate"),
    ([], "columns"),
])
def test_bad_schemas(columns, msg):
    with pytest.raises(SchemaError, match=msg):
        parse_schema({"columns": columns})


def test_header_mismatch(tmp_path):
    csv = tmp_path / "d.csv"
    csv.write_text("a,q\n1,x\n")
    with pytest.raises(SchemaError, match="header"):
        ingest_csv(csv, _schema(tmp_path, SCHEMA4[:2]))


def test_non_numeric_continuous_cell(tmp_path):
    csv = tmp_path / "d.csv"
    csv.write_text("a,b\n1,x\nabc,y\n")
    with pytest.raises(SchemaError, match="not a number"):
        ingest_csv(csv, _schema(tmp_path, SCHEMA4[:2]))


def test_csv_round_trip(tmp_path):
    data = MixedDataset(["u", "v"], [Continuous(), Categorical(["lo", "hi"])],
                        np.array([[0.1, 0], [2.0 / 3.0, 1], [-5.0, 1]]))
    write_csv(data, tmp_path / "d.csv")
    write_schema(data, tmp_path / "s.json")
    back, dropped = ingest_csv(tmp_path / "d.csv", tmp_path / "s.json")
    assert dropped == 0
    np.testing.assert_array_equal(back.values, data.values)
    assert back.types == data.types


def test_column_type_invariants():
    with pytest.raises(SchemaError):
        ColumnType("continuous", ("a", "b"))
    with pytest.raises(SchemaError):
        Categorical(["a"])
    assert Categorical([1, 2]).levels == ("1", "2")


def test_dataset_values_are_read_only():
    data = MixedDataset(["a"], [Continuous()], np.array([[1.0], [2.0]]))
    with pytest.raises(ValueError):
        data.values[0, 0] = 3.0


def test_validate_rejects_out_of_range_level():
    data = MixedDataset(["a"], [Categorical(["x", "y"])], np.array([[0.0], [2.0]]))
    with pytest.raises(SchemaError):
        data.validate()


# ---------------------------------------------------------------- dichotomize


def test_median_split_example():
    data = MixedDataset(["a"], [Continuous()], np.arange(1.0, 6.0)[:, None])
    np.testing.assert_array_equal(dichotomize(data).values[:, 0], [-1, -1, -1, 1, 1])


def test_balanced_level_split_example():
    # a:40%, b:35%, c:25% -> {a} vs {b, c}
    col = np.array([0] * 40 + [1] * 35 + [2] * 25, dtype=float)
    data = MixedDataset(["a"], [Categorical(["a", "b", "c"])], col[:, None])
    out = dichotomize(data)
    np.testing.assert_array_equal(out.values[:, 0], np.where(col == 0, -1.0, 1.0))
    assert out.mapping[0]["minus"] == ["a"]


def test_pm1_columns_pass_through():
    vals = np.array([[-1.0, 0.0], [1.0, 1.0], [1.0, 0.0]])
    data = MixedDataset(["a", "b"], [Continuous(), Categorical(["-1", "1"])], vals)
    out = dichotomize(data)
    np.testing.assert_array_equal(out.values, [[-1, -1], [1, 1], [1, -1]])


def test_dichotomize_is_idempotent_on_binary_data():
    b = BinaryDataset(["a", "b"], np.array([[1.0, -1.0], [-1.0, 1.0]]))
    assert dichotomize(b) is b
    twice = dichotomize(MixedDataset(["a", "b"], [Continuous()] * 2, b.values))
    np.testing.assert_array_equal(twice.values, b.values)


def test_binary_dataset_rejects_other_values():
    with pytest.raises(DatasetError):
        BinaryDataset(["a"], np.array([[0.0]]))


def test_mapping_reproduces_values(rng):
    vals = np.column_stack([rng.normal(size=30), rng.integers(0, 4, 30)])
    data = MixedDataset(["a", "b"], [Continuous(), Categorical("wxyz")], vals)
    out = dichotomize(data)
    np.testing.assert_array_equal(apply_mapping(data, out.mapping).values, out.values)


@given(st.lists(st.integers(-3, 3), min_size=2, max_size=40))
def test_median_split_imbalance_bounded_by_median_ties(values):
    col = np.array(values, dtype=float)
    assume(not set(values) <= {-1, 1})  # already binary: passes through
    data = MixedDataset(["a"], [Continuous()], col[:, None])
    out = dichotomize(data).values[:, 0]
    assert set(np.unique(out)) <= {-1.0, 1.0}
    ties = int(np.sum(col == np.median(col)))
    minus, plus = int(np.sum(out == -1)), int(np.sum(out == 1))
    assert minus >= plus
    if ties <= 1:
        assert minus - plus <= ties
    # ties all land on -1, so a large tied block can push the gap up to twice its size
    assert minus - plus <= 2 * ties


def test_tied_block_at_median_goes_to_minus():
    data = MixedDataset(["a"], [Continuous()], np.array([[0.0], [0.0], [-1.0]]))
    np.testing.assert_array_equal(dichotomize(data).values[:, 0], [-1, -1, -1])


@given(st.lists(st.integers(0, 40), min_size=2, max_size=5))
def test_bipartition_is_global_minimizer(counts):
    C = len(counts)
    minus = best_bipartition(counts)
    total = sum(counts)

    def imbalance(s):
        return abs(total - 2 * sum(counts[k] for k in s))

    subsets = [s for size in range(1, C) for s in itertools.combinations(range(C), size)]
    best = min(imbalance(s) for s in subsets)
    assert imbalance(minus) == best
    assert minus == min(s for s in subsets if imbalance(s) == best)
