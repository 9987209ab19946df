"""Shared fixtures: synthetic tabular data, optional real datasets, and a
small trained pipeline reused by the explainer and evaluation tests."""

import json
import os
from pathlib import Path

import numpy as np
import pytest

import treealime as ta

REPO_ROOT = Path(__file__).resolve().parents[1]


def dataset_dir() -> Path:
    return Path(os.environ.get("TREEALIME_DATA_DIR", REPO_ROOT / "data"))


def require_dataset(name: str):
    """Paths of an optional on-disk dataset, or skip the test."""
    csv = dataset_dir() / f"{name}.csv"
    schema = dataset_dir() / f"{name}.schema.json"
    if not csv.exists() or not schema.exists():
        pytest.skip(f"dataset {name!r} not present; run scripts/fetch_datasets.py first")
    return csv, schema


def synthetic_rows(n=120, seed=0):
    """A learnable 2-numeric + 1-categorical binary problem."""
    rng = np.random.default_rng(seed)
    x1 = rng.normal(size=n)
    x2 = rng.normal(size=n)
    color = rng.choice(["red", "green", "blue"], size=n, p=[0.5, 0.3, 0.2])
    logits = 1.5 * x1 - 1.0 * x2 + 0.8 * (color == "red") + rng.normal(scale=0.5, size=n)
    y = (logits > 0).astype(int)
    return x1, x2, color, y


def write_synthetic_csv(directory: Path, n=120, seed=0, name="toy"):
    x1, x2, color, y = synthetic_rows(n, seed)
    lines = ["a,b,color,label"]
    for i in range(n):
        lines.append(f"{x1[i]!r},{x2[i]!r},{color[i]},{y[i]}")
    csv_path = directory / f"{name}.csv"
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    schema = {
        "features": [
            {"name": "a", "kind": "numeric"},
            {"name": "b", "kind": "numeric"},
            {"name": "color", "kind": "categorical", "categories": ["red", "green", "blue"]},
        ],
        "label_column": "label",
    }
    schema_path = directory / f"{name}.schema.json"
    schema_path.write_text(json.dumps(schema, indent=2), encoding="utf-8")
    return csv_path, schema_path


@pytest.fixture(scope="session")
def toy_files(tmp_path_factory):
    directory = tmp_path_factory.mktemp("toydata")
    return write_synthetic_csv(directory, n=120, seed=7)


@pytest.fixture(scope="session")
def toy_pipeline(toy_files):
    """Encoded + scaled synthetic data with a trained black box and autoencoder."""
    csv_path, schema_path = toy_files
    schema = ta.FeatureSchema.from_json(schema_path)
    raw = ta.load_csv(csv_path, schema)
    encoded = ta.one_hot_encode(raw)
    scaler = ta.fit_scaler(encoded.matrix)
    scaled = ta.apply_scaler(scaler, encoded.matrix)
    train_idx, test_idx = ta.split_indices(encoded.n_rows, 0.8, seed=11)

    stats = ta.TrainingStats(
        means=encoded.matrix[train_idx].mean(axis=0),
        variances=encoded.matrix[train_idx].var(axis=0),
        column_map=encoded.column_map,
    )
    k = encoded.n_columns
    tc = ta.TrainConfig(max_epochs=60, patience=10, batch_size=16, seed=5)
    n_val = max(1, len(train_idx) // 10)
    model = ta.mlp_train(
        scaled[train_idx][n_val:],
        encoded.labels[train_idx][n_val:],
        scaled[train_idx][:n_val],
        encoded.labels[train_idx][:n_val],
        (k, 8, 6, 1),
        tc,
    )
    ae = ta.ae_train(scaled[train_idx], ta.TrainConfig(max_epochs=60, patience=10, batch_size=16, seed=6), latent_dim=3)
    return {
        "schema": schema,
        "encoded": encoded,
        "scaler": scaler,
        "scaled": scaled,
        "train_idx": train_idx,
        "test_idx": test_idx,
        "stats": stats,
        "model": model,
        "ae": ae,
        "feature_names": tuple(c.name for c in encoded.column_map),
    }


@pytest.fixture()
def toy_explainer_config(toy_pipeline):
    def make(method="alime", m=300, n=100, seed=0, **kw):
        return ta.ExplainerConfig(
            method=method,
            model=toy_pipeline["model"],
            scaler=toy_pipeline["scaler"],
            stats=toy_pipeline["stats"],
            feature_names=toy_pipeline["feature_names"],
            perturbation=ta.PerturbationConfig(pool_size=m, n_points=n, seed=seed),
            autoencoder=toy_pipeline["ae"],
            **kw,
        )

    return make
