import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltatab.data import (
    DataParseError,
    Schema,
    SchemaError,
    evaluate,
    fit_stats,
    from_arrays,
    load_csv,
    load_schema,
    preprocess,
    read_cells,
    split,
    subsample_fewshot,
)
from deltatab.datasets import convert_blood, schema_path

SCHEMA = {
    "name": "toy",
    "columns": [{"name": "a", "kind": "numerical"}, {"name": "c", "kind": "categorical"}],
    "target": {"name": "y", "task": "binclass"},
}


def write(tmp_path, rows, schema=SCHEMA):
    p = tmp_path / "d.csv"
    p.write_text("\n".join(rows) + "\n")
    s = tmp_path / "s.json"
    s.write_text(json.dumps(schema))
    return p, load_schema(s)


def test_load_and_preprocess(tmp_path):
    p, schema = write(tmp_path, ["a,c,y", "1,red,no", "3,blue,yes", "5,red,no"])
    raw = load_csv(p, schema)
    assert raw.n == 3 and not raw.is_preprocessed
    ds = preprocess(raw, raw)
    np.testing.assert_allclose(ds.features[:, 0], [-1.224744871391589, 0, 1.224744871391589])
    assert list(ds.features[:, 1]) == [0, 1, 0]
    assert list(ds.labels) == [0, 1, 0]


def test_unseen_category_gets_reserved_code(tmp_path):
    p, schema = write(tmp_path, ["a,c,y", "1,red,no", "3,blue,yes"])
    stats = fit_stats(load_csv(p, schema))
    q, _ = write(tmp_path, ["a,c,y", "2,green,no"])
    assert preprocess(load_csv(q, schema), stats).features[0, 1] == 2


def test_zero_variance_column_maps_to_zero(tmp_path):
    p, schema = write(tmp_path, ["a,c,y", "4,red,no", "4,blue,yes"])
    raw = load_csv(p, schema)
    assert np.all(preprocess(raw, raw).features[:, 0] == 0.0)


def test_preprocess_is_idempotent_under_same_stats(tmp_path):
    p, schema = write(tmp_path, ["a,c,y", "1,red,no", "3,blue,yes"])
    raw = load_csv(p, schema)
    stats = fit_stats(raw)
    once = preprocess(raw, stats)
    assert preprocess(once, stats) is once


def test_missing_cell_reports_row_and_column(tmp_path):
    p, schema = write(tmp_path, ["a,c,y", "1,red,no", ",blue,yes"])
    with pytest.raises(DataParseError) as e:
        load_csv(p, schema)
    assert e.value.row == 2 and e.value.column == "a"


def test_missing_column_is_schema_error(tmp_path):
    p, schema = write(tmp_path, ["a,y", "1,no"])
    with pytest.raises(SchemaError):
        load_csv(p, schema)


def test_schema_rejects_target_as_feature():
    bad = dict(SCHEMA, columns=SCHEMA["columns"] + [{"name": "y", "kind": "numerical"}])
    with pytest.raises(SchemaError):
        Schema.from_dict(bad)


def test_schema_hash_stable():
    s = Schema.from_dict(SCHEMA)
    assert s.hash() == Schema.from_dict(json.loads(json.dumps(s.to_dict()))).hash()


@settings(max_examples=40, deadline=None)
@given(n=st.integers(10, 300), seed=st.integers(0, 10_000), frac=st.floats(0.1, 0.9))
def test_split_partitions_rows(n, seed, frac):
    y = (np.arange(n) < int(frac * n)).astype(int)
    ds = from_arrays(np.zeros((n, 1)), y)
    parts = split(ds, seed=seed)
    idx = np.concatenate([p.indices for p in parts])
    assert sorted(idx) == list(range(n))
    sizes = [p.n for p in parts]
    assert abs(sizes[0] - 0.64 * n) <= 1.5 and abs(sizes[2] - 0.2 * n) <= 1.5


def test_split_stratifies():
    y = np.r_[np.zeros(700), np.ones(300)].astype(int)
    tr, va, te = split(from_arrays(np.zeros((1000, 1)), y), seed=3)
    assert (tr.n, va.n, te.n) == (640, 160, 200)
    assert (tr.labels.mean(), va.labels.mean(), te.labels.mean()) == (0.3, 0.3, 0.3)


def test_split_seeded():
    ds = from_arrays(np.zeros((50, 1)), np.arange(50) % 2)
    a = split(ds, seed=1)[0].indices
    assert np.array_equal(a, split(ds, seed=1)[0].indices)
    assert not np.array_equal(a, split(ds, seed=2)[0].indices)


def test_split_tiny_class_warns():
    y = np.r_[np.zeros(20), [1, 1]].astype(int)
    tr, _, _ = split(from_arrays(np.zeros((22, 1)), y))
    assert tr.warnings


def test_fewshot_keeps_original_ids():
    ds = from_arrays(np.arange(30.0)[:, None], np.arange(30) % 2)
    sub = subsample_fewshot(ds, 7, seed=4)
    assert sub.n == 7
    np.testing.assert_array_equal(sub.features[:, 0], sub.indices)
    with pytest.raises(ValueError):
        subsample_fewshot(ds, 31)


def test_evaluate_accuracy_and_nrmse():
    assert evaluate([[0.2, 0.8], [0.6, 0.4]], [1, 1], "binclass").value == 0.5
    # argmax tie goes to the lower class
    assert evaluate([[0.5, 0.5]], [0], "binclass").value == 1.0
    r = evaluate([1.0, 2.0, 3.0], [1.0, 2.0, 5.0], "regression")
    assert r.name == "nrmse"
    assert r.value == pytest.approx(np.sqrt(4 / 3) / np.std([1, 2, 5]))
    with pytest.raises(ValueError):
        evaluate([1.0, 1.0], [2.0, 2.0], "regression")


def test_read_cells(tmp_path):
    p, _ = write(tmp_path, ["a,c,y", "1,red,no", "3,blue,yes"])
    assert read_cells(p) == ["1", "red", "no", "3", "blue", "yes"]
    assert read_cells(p, rows=[1]) == ["3", "blue", "yes"]


def test_bundled_credit_shape(credit_raw):
    assert credit_raw.n == 1000 and credit_raw.d == 20
    assert credit_raw.schema.n_num == 7 and credit_raw.schema.n_cat == 13
    assert sorted(set(credit_raw.labels)) == ["1", "2"]


def test_convert_blood(tmp_path):
    src = tmp_path / "transfusion.data"
    src.write_text(
        "Recency (months),Frequency (times),Monetary (c.c. blood),Time (months),"
        '"whether he/she donated blood in March 2007"\n2 ,50,12500,98 ,1\n0 ,13,3250,28 ,1\n'
    )
    dst = tmp_path / "blood.csv"
    assert convert_blood(src, dst) == 2
    ds = load_csv(dst, load_schema(schema_path("blood")))
    assert ds.n == 2 and ds.features[0, 3] == 98.0
