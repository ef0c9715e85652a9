import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_xai.data import (
    Dataset, DegenerateFeature, EmptyDataset, Feature, MissingColumn, Schema, SchemaError, UnknownLevel,
    add_unrelated_features, encode, load_csv, split_train_eval, write_csv,
)


def test_schema_requires_single_binary_target():
    with pytest.raises(SchemaError):
        Schema([Feature("a", "numeric")])
    with pytest.raises(SchemaError):
        Schema([Feature("a", "numeric"), Feature("t", "categorical", "target", levels=("x", "y", "z"))])
    with pytest.raises(SchemaError):
        Schema([Feature("a", "numeric"), Feature("a", "categorical", "target", levels=("x", "y"))])


def test_encode_blocks(mixed_schema):
    codes = np.array([[30.0, 2.0, 1.0]])
    enc = mixed_schema.encode(codes)
    assert enc.tolist() == [[30.0, 0.0, 0.0, 1.0, 0.0, 1.0]]
    assert mixed_schema.encoded_width == 6
    np.testing.assert_array_equal(mixed_schema.decode(enc), codes)


def test_decode_snaps_to_argmax(mixed_schema):
    enc = np.array([[1.5, 0.2, 0.7, 0.1, 0.4, 0.6]])
    assert mixed_schema.decode(enc).tolist() == [[1.5, 1.0, 1.0]]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e6, 1e6, allow_nan=False), st.integers(0, 2), st.integers(0, 1)),
                min_size=1, max_size=20))
def test_encode_decode_roundtrip(mixed_schema, rows):
    codes = np.array(rows, dtype=float)
    np.testing.assert_array_equal(mixed_schema.decode(mixed_schema.encode(codes)), codes)


def test_raw_codes_and_unknown_level(mixed_schema):
    ds = Dataset(mixed_schema, [[1.0, 0.0, 0.0], [2.0, 1.0, 1.0]], [0, 1])
    inst = encode(ds, [40, "blue", "b"])
    assert inst.codes.tolist() == [40.0, 2.0, 1.0]
    with pytest.raises(UnknownLevel):
        encode(ds, [40, "purple", "b"])


def test_load_csv_handles_bom_and_missing(tmp_path, mixed_schema):
    p = tmp_path / "d.csv"
    p.write_text("﻿age,color,race,label\n30,red,a,no\n?,red,a,no\n41,blue,b,yes\n,green,a,yes\n",
                 encoding="utf-8")
    ds = load_csv(p, mixed_schema)
    assert len(ds) == 2 and ds.dropped == 2
    assert ds.X.tolist() == [[30.0, 0.0, 0.0], [41.0, 2.0, 1.0]]
    assert ds.y.tolist() == [0, 1]


def test_load_csv_errors(tmp_path, mixed_schema):
    p = tmp_path / "d.csv"
    p.write_text("age,color,label\n30,red,no\n")
    with pytest.raises(MissingColumn):
        load_csv(p, mixed_schema)
    p.write_text("age,color,race,label\n30,cyan,a,no\n31,red,a,no\n")
    with pytest.raises(UnknownLevel):
        load_csv(p, mixed_schema)
    p.write_text("age,color,race,label\nNA,red,a,no\n")
    with pytest.raises(EmptyDataset):
        load_csv(p, mixed_schema)
    p.write_text("age,color,race,label\n5,red,a,no\n5,blue,b,yes\n")
    with pytest.raises(DegenerateFeature):
        load_csv(p, mixed_schema)


def test_csv_roundtrip(tmp_path, compas):
    p = tmp_path / "c.csv"
    write_csv(compas, p)
    back = load_csv(p, compas.schema)
    np.testing.assert_array_equal(back.X, compas.X)
    np.testing.assert_array_equal(back.y, compas.y)


def test_dataset_is_read_only(compas):
    with pytest.raises(ValueError):
        compas.X[0, 0] = 1.0


def test_split_sizes_and_disjointness(compas):
    tr, ev = split_train_eval(compas, 0.9, 3)
    assert len(tr) == 540 and len(ev) == 60
    tr2, _ = split_train_eval(compas, 0.9, 3)
    np.testing.assert_array_equal(tr.X, tr2.X)


def test_unrelated_features(compas):
    ds = add_unrelated_features(compas, 2, 0)
    assert ds.schema.with_role("unrelated") == ["random1", "random2"]
    assert set(np.unique(ds.X[:, -2:])) <= {0.0, 1.0}
    with pytest.raises(SchemaError):
        add_unrelated_features(ds, 1, 0)


def test_normalization(compas):
    norm = compas.normalization
    z = norm.zscore(compas.X)
    np.testing.assert_allclose(z[:, compas.schema.numeric_idx].mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(norm.unzscore(z), compas.X)
