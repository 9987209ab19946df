import json
import math

import numpy as np
import pytest

import treealime as ta
from treealime.errors import (
    DegenerateSplit,
    DimensionMismatch,
    EmptyMatrix,
    MissingColumn,
    NonBinaryLabel,
    UnknownCategory,
)

from conftest import require_dataset


def make_schema():
    return ta.FeatureSchema(
        features=(
            ta.Feature("x", "numeric"),
            ta.Feature("color", "categorical", ("red", "green", "blue")),
        ),
        label_column="label",
    )


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# ---------------------------------------------------------------------------
# load_csv
# ---------------------------------------------------------------------------

def test_load_csv_single_complete_row(tmp_path):
    p = write(tmp_path, "x,color,label\n1.5,red,1\n")
    dset = ta.load_csv(p, make_schema())
    assert dset.n_rows == 1
    assert dset.imputations == {}
    assert dset.rows[0] == [1.5, "red"]
    assert dset.labels.tolist() == [1]


def test_load_csv_numeric_mean_imputation(tmp_path):
    p = write(tmp_path, "x,color,label\n2,red,0\n?,green,1\n4,blue,0\n")
    dset = ta.load_csv(p, make_schema())
    assert dset.rows[1][0] == pytest.approx(3.0)
    assert dset.imputations == {"x": 1}


def test_load_csv_categorical_mode_imputation(tmp_path):
    p = write(tmp_path, "x,color,label\n1,green,0\n2,green,1\n3,,0\n4,red,1\n")
    dset = ta.load_csv(p, make_schema())
    assert dset.rows[2][1] == "green"
    assert dset.imputations == {"color": 1}


def test_load_csv_mode_tie_prefers_schema_order(tmp_path):
    p = write(tmp_path, "x,color,label\n1,blue,0\n2,green,1\n3,?,0\n")
    dset = ta.load_csv(p, make_schema())
    # green and blue tie at one observation each; green comes first in schema.
    assert dset.rows[2][1] == "green"


def test_load_csv_extra_columns_ignored(tmp_path):
    p = write(tmp_path, "junk,x,color,label\nzzz,1,red,0\nzzz,2,blue,1\n")
    dset = ta.load_csv(p, make_schema())
    assert dset.n_rows == 2


def test_load_csv_missing_column(tmp_path):
    p = write(tmp_path, "x,label\n1,0\n")
    with pytest.raises(MissingColumn):
        ta.load_csv(p, make_schema())


def test_load_csv_unknown_category(tmp_path):
    p = write(tmp_path, "x,color,label\n1,purple,0\n")
    with pytest.raises(UnknownCategory):
        ta.load_csv(p, make_schema())


def test_load_csv_non_binary_label(tmp_path):
    p = write(tmp_path, "x,color,label\n1,red,2\n")
    with pytest.raises(NonBinaryLabel):
        ta.load_csv(p, make_schema())


def test_load_csv_hepatitis_row_count():
    csv, schema_path = require_dataset("hepatitis")
    schema = ta.FeatureSchema.from_json(schema_path)
    dset = ta.load_csv(csv, schema)
    assert dset.n_rows == 155
    assert len(schema.features) == 19


# ---------------------------------------------------------------------------
# one_hot_encode
# ---------------------------------------------------------------------------

def test_one_hot_basic(tmp_path):
    p = write(tmp_path, "x,color,label\n1,green,0\n2,red,1\n")
    enc = ta.one_hot_encode(ta.load_csv(p, make_schema()))
    assert enc.n_columns == 1 + 3
    assert enc.matrix[0, 1:].tolist() == [0.0, 1.0, 0.0]
    assert enc.matrix[1, 1:].tolist() == [1.0, 0.0, 0.0]


def test_one_hot_numeric_only_is_identity():
    schema = ta.FeatureSchema(
        features=(ta.Feature("a", "numeric"), ta.Feature("b", "numeric")),
        label_column="y",
    )
    dset = ta.Dataset(schema=schema, rows=[[1.0, 2.0], [3.0, 4.0]], labels=np.array([0, 1]))
    enc = ta.one_hot_encode(dset)
    assert np.array_equal(enc.matrix, np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert [c.name for c in enc.column_map] == ["a", "b"]


def test_column_map_round_trip(tmp_path):
    p = write(tmp_path, "x,color,label\n1,green,0\n2,red,1\n")
    dset = ta.load_csv(p, make_schema())
    enc = ta.one_hot_encode(dset)
    for col in enc.column_map:
        feat = dset.schema.features[col.feature_index]
        if col.category_index is None:
            assert col.name == feat.name
        else:
            assert col.name == f"{feat.name}={feat.categories[col.category_index]}"


def test_one_hot_group_sums_random_datasets():
    rng = np.random.default_rng(42)
    for _ in range(50):
        n = int(rng.integers(1, 30))
        cats = tuple(f"c{i}" for i in range(int(rng.integers(2, 6))))
        schema = ta.FeatureSchema(
            features=(ta.Feature("num", "numeric"), ta.Feature("cat", "categorical", cats)),
            label_column="y",
        )
        rows = [[float(rng.normal()), cats[int(rng.integers(len(cats)))]] for _ in range(n)]
        dset = ta.Dataset(schema=schema, rows=rows, labels=rng.integers(0, 2, size=n))
        enc = ta.one_hot_encode(dset)
        group = [i for i, c in enumerate(enc.column_map) if c.category_index is not None]
        assert np.allclose(enc.matrix[:, group].sum(axis=1), 1.0)


# ---------------------------------------------------------------------------
# fit_scaler / apply_scaler
# ---------------------------------------------------------------------------

def test_fit_scaler_population_convention():
    s = ta.fit_scaler(np.array([[1.0], [2.0], [3.0]]))
    assert s.mean[0] == pytest.approx(2.0)
    assert s.std[0] == pytest.approx(math.sqrt(2.0 / 3.0))
    assert not s.constant[0]


def test_fit_scaler_sample_convention():
    s = ta.fit_scaler(np.array([[1.0], [2.0], [3.0]]), convention="sample")
    assert s.std[0] == pytest.approx(1.0)


def test_fit_scaler_constant_column():
    s = ta.fit_scaler(np.array([[5.0], [5.0], [5.0]]))
    assert s.mean[0] == pytest.approx(5.0)
    assert s.std[0] == 0.0
    assert s.constant[0]
    assert s.effective_std[0] == 1.0


def test_fit_scaler_standardized_column_is_fixed_point():
    rng = np.random.default_rng(3)
    col = rng.normal(size=200)
    col = (col - col.mean()) / col.std()
    s = ta.fit_scaler(col.reshape(-1, 1))
    assert s.mean[0] == pytest.approx(0.0, abs=1e-12)
    assert s.std[0] == pytest.approx(1.0, rel=1e-12)


def test_fit_scaler_empty():
    with pytest.raises(EmptyMatrix):
        ta.fit_scaler(np.empty((0, 3)))


def test_apply_scaler_hand_values():
    m = np.array([[1.0], [2.0], [3.0]])
    out = ta.apply_scaler(ta.fit_scaler(m), m)
    assert out.ravel() == pytest.approx([-1.2247448, 0.0, 1.2247448], abs=1e-6)


def test_apply_scaler_on_mean_vector_gives_zero():
    m = np.array([[1.0, 10.0], [3.0, 30.0]])
    s = ta.fit_scaler(m)
    assert np.array_equal(ta.apply_scaler(s, s.mean.reshape(1, -1)), np.zeros((1, 2)))


def test_apply_scaler_identity():
    s = ta.Scaler(mean=np.zeros(2), std=np.ones(2), constant=np.zeros(2, dtype=bool))
    m = np.array([[1.0, -4.0], [0.5, 2.0]])
    assert np.array_equal(ta.apply_scaler(s, m), m)


def test_apply_scaler_dimension_mismatch():
    s = ta.fit_scaler(np.ones((3, 2)))
    with pytest.raises(DimensionMismatch):
        ta.apply_scaler(s, np.ones((3, 5)))


def test_scaler_self_application_moments():
    rng = np.random.default_rng(9)
    m = rng.normal(size=(101, 7)) * rng.uniform(0.1, 30, size=7) + rng.normal(size=7)
    out = ta.apply_scaler(ta.fit_scaler(m), m)
    assert np.all(np.abs(out.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(out.var(axis=0) - 1.0) < 1e-6)


def test_scaler_json_round_trip():
    s = ta.fit_scaler(np.array([[1.0, 5.0], [2.0, 5.0], [4.0, 5.0]]))
    doc = json.loads(json.dumps(s.to_dict()))
    s2 = ta.Scaler.from_dict(doc)
    assert np.array_equal(s.mean, s2.mean)
    assert np.array_equal(s.std, s2.std)
    assert np.array_equal(s.constant, s2.constant)


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------

def _encoded(n, seed=0):
    rng = np.random.default_rng(seed)
    cmap = (ta.EncodedColumn(0, None, "a"), ta.EncodedColumn(1, None, "b"))
    return ta.EncodedDataset(rng.normal(size=(n, 2)), cmap, rng.integers(0, 2, size=n))


def test_split_569_rows_floor():
    train, test = ta.split(_encoded(569), 0.8, seed=1)
    assert train.n_rows == 455
    assert test.n_rows == 114


def test_split_deterministic():
    a1, b1 = ta.split(_encoded(100), 0.8, seed=5)
    a2, b2 = ta.split(_encoded(100), 0.8, seed=5)
    assert np.array_equal(a1.matrix, a2.matrix)
    assert np.array_equal(b1.labels, b2.labels)


def test_split_two_rows_half():
    train, test = ta.split(_encoded(2), 0.5, seed=0)
    assert train.n_rows == 1 and test.n_rows == 1


def test_split_is_partition():
    enc = _encoded(53, seed=2)
    train, test = ta.split(enc, 0.7, seed=3)
    merged = np.vstack([train.matrix, test.matrix])
    assert merged.shape[0] == enc.n_rows
    # Every original row appears exactly once.
    original = {tuple(r) for r in enc.matrix}
    recombined = [tuple(r) for r in merged]
    assert set(recombined) == original
    assert len(recombined) == len(set(recombined))


def test_split_degenerate():
    with pytest.raises(DegenerateSplit):
        ta.split(_encoded(3), 0.1, seed=0)
