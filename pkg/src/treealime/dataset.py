"""Tabular ingestion: schema-driven CSV loading, one-hot encoding, scaling, splits."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateSplit,
    DimensionMismatch,
    EmptyMatrix,
    InvalidArgument,
    MalformedCell,
    MissingColumn,
    NonBinaryLabel,
    UnknownCategory,
)

# Empty fields and "?" both mark a missing cell.
MISSING_TOKENS = frozenset({"", "?"})

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise InvalidArgument(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if len(self.categories) < 2:
                raise InvalidArgument(f"feature {self.name!r}: needs >= 2 categories")
            if len(set(self.categories)) != len(self.categories):
                raise InvalidArgument(f"feature {self.name!r}: duplicate categories")
        elif self.categories:
            raise InvalidArgument(f"numeric feature {self.name!r} cannot list categories")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature declarations plus the name of the binary label column."""

    features: tuple[Feature, ...]
    label_column: str

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise InvalidArgument("feature names must be unique")
        if self.label_column in names:
            raise InvalidArgument("label column cannot also be a feature")
        if not self.features:
            raise InvalidArgument("schema needs at least one feature")

    @classmethod
    def from_json(cls, path: str | Path) -> "FeatureSchema":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        feats = tuple(
            Feature(
                name=f["name"],
                kind=f["kind"],
                categories=tuple(f.get("categories", ())),
            )
            for f in doc["features"]
        )
        return cls(features=feats, label_column=doc["label_column"])

    def to_dict(self) -> dict:
        return {
            "features": [
                {"name": f.name, "kind": f.kind}
                if f.kind == NUMERIC
                else {"name": f.name, "kind": f.kind, "categories": list(f.categories)}
                for f in self.features
            ],
            "label_column": self.label_column,
        }


@dataclass
class Dataset:
    """Raw rows (floats and category tokens) with binary labels."""

    schema: FeatureSchema
    rows: list[list[object]]
    labels: np.ndarray
    imputations: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.rows) != self.labels.shape[0]:
            raise InvalidArgument("row count and label count differ")
        bad = set(np.unique(self.labels)) - {0, 1}
        if bad:
            raise NonBinaryLabel(f"labels outside {{0,1}}: {sorted(bad)}")

    @property
    def n_rows(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class EncodedColumn:
    """Provenance of one encoded column: source feature and category, if any."""

    feature_index: int
    category_index: int | None
    name: str


@dataclass
class EncodedDataset:
    matrix: np.ndarray
    column_map: tuple[EncodedColumn, ...]
    labels: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.matrix.ndim != 2:
            raise DimensionMismatch("encoded matrix must be 2-D")
        if self.matrix.shape[0] != self.labels.shape[0]:
            raise InvalidArgument("matrix rows and label count differ")
        if self.matrix.shape[1] != len(self.column_map):
            raise DimensionMismatch("column_map length must match matrix width")

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.column_map)


@dataclass
class Scaler:
    """Per-column centering and variance normalization.

    Columns whose spread is (numerically) zero are flagged constant and
    divided by an effective std of 1 instead of 0.
    """

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray
    convention: str = "population"

    @property
    def effective_std(self) -> np.ndarray:
        return np.where(self.constant, 1.0, self.std)

    @property
    def n_columns(self) -> int:
        return self.mean.shape[0]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "constant": self.constant.astype(bool).tolist(),
            "convention": self.convention,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Scaler":
        return cls(
            mean=np.asarray(doc["mean"], dtype=np.float64),
            std=np.asarray(doc["std"], dtype=np.float64),
            constant=np.asarray(doc["constant"], dtype=bool),
            convention=doc.get("convention", "population"),
        )


def load_csv(path: str | Path, schema: FeatureSchema) -> Dataset:
    """Read a header-first CSV into a Dataset, imputing missing cells.

    Missing numeric cells take the column mean of the observed values;
    missing categorical cells take the column mode (ties resolved by the
    schema's category order). Imputation counts land in ``Dataset.imputations``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MalformedCell(f"{path}: file is empty") from None
        col_of = {name: i for i, name in enumerate(header)}
        for feat in schema.features:
            if feat.name not in col_of:
                raise MissingColumn(f"{path}: column {feat.name!r} not in header")
        if schema.label_column not in col_of:
            raise MissingColumn(f"{path}: label column {schema.label_column!r} not in header")
        raw_rows = [[c.strip() for c in row] for row in reader if row]

    if not raw_rows:
        raise EmptyMatrix(f"{path}: no data rows")

    labels = np.empty(len(raw_rows), dtype=np.int64)
    label_idx = col_of[schema.label_column]
    for r, row in enumerate(raw_rows):
        token = row[label_idx] if label_idx < len(row) else ""
        try:
            value = float(token)
        except ValueError:
            raise NonBinaryLabel(f"{path}: row {r + 1}: label {token!r}") from None
        if value not in (0.0, 1.0):
            raise NonBinaryLabel(f"{path}: row {r + 1}: label {token!r} outside {{0,1}}")
        labels[r] = int(value)

    n = len(raw_rows)
    cells: list[list[object]] = [[None] * len(schema.features) for _ in range(n)]
    imputations: dict[str, int] = {}

    for j, feat in enumerate(schema.features):
        src = col_of[feat.name]
        tokens = [row[src] if src < len(row) else "" for row in raw_rows]
        missing = [t in MISSING_TOKENS for t in tokens]
        if feat.kind == NUMERIC:
            observed = []
            for r, (tok, miss) in enumerate(zip(tokens, missing)):
                if miss:
                    continue
                try:
                    cells[r][j] = float(tok)
                except ValueError:
                    raise MalformedCell(
                        f"{path}: row {r + 1}: {feat.name!r} is not numeric: {tok!r}"
                    ) from None
                observed.append(cells[r][j])
            if any(missing):
                if not observed:
                    raise MalformedCell(f"{path}: {feat.name!r} has no observed values")
                fill = float(np.mean(observed))
                for r, miss in enumerate(missing):
                    if miss:
                        cells[r][j] = fill
        else:
            counts = {c: 0 for c in feat.categories}
            for r, (tok, miss) in enumerate(zip(tokens, missing)):
                if miss:
                    continue
                if tok not in counts:
                    raise UnknownCategory(
                        f"{path}: row {r + 1}: {feat.name!r} has unknown token {tok!r}"
                    )
                cells[r][j] = tok
                counts[tok] += 1
            if any(missing):
                # Mode; ties go to the earliest category in schema order.
                fill = max(feat.categories, key=lambda c: (counts[c], -feat.categories.index(c)))
                for r, miss in enumerate(missing):
                    if miss:
                        cells[r][j] = fill
        n_missing = sum(missing)
        if n_missing:
            imputations[feat.name] = n_missing

    return Dataset(schema=schema, rows=cells, labels=labels, imputations=imputations)


def one_hot_encode(ds: Dataset) -> EncodedDataset:
    """Expand categorical features to one-hot columns; copy numeric columns."""
    column_map: list[EncodedColumn] = []
    for j, feat in enumerate(ds.schema.features):
        if feat.kind == NUMERIC:
            column_map.append(EncodedColumn(j, None, feat.name))
        else:
            for k, cat in enumerate(feat.categories):
                column_map.append(EncodedColumn(j, k, f"{feat.name}={cat}"))

    matrix = np.zeros((ds.n_rows, len(column_map)), dtype=np.float64)
    col = 0
    for j, feat in enumerate(ds.schema.features):
        if feat.kind == NUMERIC:
            matrix[:, col] = [row[j] for row in ds.rows]
            col += 1
        else:
            index_of = {c: k for k, c in enumerate(feat.categories)}
            for r, row in enumerate(ds.rows):
                matrix[r, col + index_of[row[j]]] = 1.0
            col += len(feat.categories)

    return EncodedDataset(matrix=matrix, column_map=tuple(column_map), labels=ds.labels)


def fit_scaler(matrix: np.ndarray, convention: str = "population") -> Scaler:
    """Compute per-column mean and spread; flag (near-)constant columns.

    ``population`` divides by N, ``sample`` by N-1.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise DimensionMismatch("fit_scaler expects a 2-D matrix")
    if matrix.shape[0] < 1:
        raise EmptyMatrix("fit_scaler needs at least one row")
    if convention not in ("population", "sample"):
        raise InvalidArgument(f"unknown std convention {convention!r}")

    mean = matrix.mean(axis=0)
    if convention == "sample" and matrix.shape[0] > 1:
        std = matrix.std(axis=0, ddof=1)
    else:
        std = matrix.std(axis=0, ddof=0)
    constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    return Scaler(mean=mean, std=std, constant=constant, convention=convention)


def apply_scaler(scaler: Scaler, matrix: np.ndarray) -> np.ndarray:
    """Center and rescale columns; constant columns map to (numerically) zero."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(1, -1)
    if matrix.shape[1] != scaler.n_columns:
        raise DimensionMismatch(
            f"matrix has {matrix.shape[1]} columns, scaler expects {scaler.n_columns}"
        )
    return (matrix - scaler.mean) / scaler.effective_std


def split_indices(n_rows: int, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded permutation split: first floor(N * fraction) rows go to train."""
    if not 0.0 < train_fraction < 1.0:
        raise InvalidArgument("train_fraction must lie strictly between 0 and 1")
    perm = np.random.default_rng(seed).permutation(n_rows)
    n_train = math.floor(n_rows * train_fraction)
    if n_train == 0 or n_train == n_rows:
        raise DegenerateSplit(f"split of {n_rows} rows at {train_fraction} leaves one side empty")
    return perm[:n_train], perm[n_train:]


def split(
    ds: EncodedDataset, train_fraction: float, seed: int
) -> tuple[EncodedDataset, EncodedDataset]:
    """Partition an encoded dataset into seeded train/test halves."""
    train_idx, test_idx = split_indices(ds.n_rows, train_fraction, seed)
    train = EncodedDataset(ds.matrix[train_idx], ds.column_map, ds.labels[train_idx])
    test = EncodedDataset(ds.matrix[test_idx], ds.column_map, ds.labels[test_idx])
    return train, test
