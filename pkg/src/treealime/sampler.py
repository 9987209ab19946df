"""Perturbation sampling around an instance: Gaussian pools matching the
training statistics, nearest-neighbor selection in latent space, and the
exponential kernels that turn distances into sample weights."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .dataset import EncodedColumn, EncodedDataset
from .errors import (
    DimensionMismatch,
    InvalidArgument,
    InvalidVariance,
    NegativeDistance,
)

CATEGORICAL_MODES = ("frequency", "literal-paper")


@dataclass(frozen=True)
class PerturbationConfig:
    """Pool size (points sampled) and neighborhood size (points kept)."""

    pool_size: int = 10000
    n_points: int = 1000
    categorical_mode: str = "frequency"
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_points <= self.pool_size:
            raise InvalidArgument("need 1 <= n_points <= pool_size")
        if self.categorical_mode not in CATEGORICAL_MODES:
            raise InvalidArgument(f"unknown categorical_mode {self.categorical_mode!r}")

    def to_dict(self) -> dict:
        return {
            "pool_size": self.pool_size,
            "n_points": self.n_points,
            "categorical_mode": self.categorical_mode,
            "seed": self.seed,
        }


@dataclass
class TrainingStats:
    """Per-column mean/variance of the raw encoded training matrix, plus the
    column map needed to treat one-hot groups as categorical draws."""

    means: np.ndarray
    variances: np.ndarray
    column_map: tuple[EncodedColumn, ...]

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if self.means.shape != self.variances.shape:
            raise DimensionMismatch("means and variances must have the same shape")
        if self.means.shape[0] != len(self.column_map):
            raise DimensionMismatch("stats must cover every encoded column")

    @classmethod
    def from_encoded(cls, enc: EncodedDataset) -> "TrainingStats":
        return cls(
            means=enc.matrix.mean(axis=0),
            variances=enc.matrix.var(axis=0),
            column_map=enc.column_map,
        )

    @property
    def n_columns(self) -> int:
        return self.means.shape[0]

    def numeric_columns(self) -> np.ndarray:
        return np.array([c.category_index is None for c in self.column_map], dtype=bool)

    def categorical_groups(self) -> list[np.ndarray]:
        """Column indices per categorical source feature, in column order."""
        groups: dict[int, list[int]] = {}
        for i, col in enumerate(self.column_map):
            if col.category_index is not None:
                groups.setdefault(col.feature_index, []).append(i)
        return [np.asarray(groups[k], dtype=np.intp) for k in sorted(groups)]

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "column_map": [
                {"feature_index": c.feature_index, "category_index": c.category_index, "name": c.name}
                for c in self.column_map
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainingStats":
        cmap = tuple(
            EncodedColumn(c["feature_index"], c["category_index"], c["name"])
            for c in doc["column_map"]
        )
        return cls(means=np.asarray(doc["means"]), variances=np.asarray(doc["variances"]), column_map=cmap)


@dataclass
class NeighborhoodSample:
    """The selected perturbed points (scaled space) with their distances to
    the instance and kernel weights. ``kernel`` records the weighting rule."""

    points: np.ndarray
    distances: np.ndarray
    weights: np.ndarray
    source_indices: np.ndarray
    kernel: str

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def to_csv(self) -> str:
        """Debug dump: source_index, distance, weight, then feature values."""
        buf = io.StringIO()
        k = self.points.shape[1]
        buf.write("source_index,distance,weight," + ",".join(f"x{i}" for i in range(k)) + "\n")
        for i in range(self.n_points):
            row = ",".join(repr(v) for v in self.points[i])
            buf.write(f"{int(self.source_indices[i])},{self.distances[i]!r},{self.weights[i]!r},{row}\n")
        return buf.getvalue()


def gaussian_sample(
    stats: TrainingStats,
    m: int,
    seed: int,
    categorical_mode: str = "frequency",
) -> np.ndarray:
    """Draw an m-row pool in the raw encoded space.

    Numeric columns are independent normals with the training column's mean
    and variance. One-hot groups are filled per ``categorical_mode``:

    * ``frequency``: one category per group, drawn from the training
      frequencies and re-encoded one-hot (rows stay valid).
    * ``literal-paper``: every one-hot column is the constant 1. Rows violate
      the one-hot sum invariant; kept only for replication experiments.

    Draw order is fixed (numeric block first, then groups in column order),
    so a given seed always produces the same matrix.
    """
    if m < 1:
        raise InvalidArgument("m must be >= 1")
    if categorical_mode not in CATEGORICAL_MODES:
        raise InvalidArgument(f"unknown categorical_mode {categorical_mode!r}")
    if np.any(stats.variances < 0):
        raise InvalidVariance("negative variance in training stats")

    rng = np.random.default_rng(seed)
    out = np.empty((m, stats.n_columns), dtype=np.float64)

    numeric = stats.numeric_columns()
    if numeric.any():
        out[:, numeric] = rng.normal(
            loc=stats.means[numeric],
            scale=np.sqrt(stats.variances[numeric]),
            size=(m, int(numeric.sum())),
        )

    for group in stats.categorical_groups():
        if categorical_mode == "literal-paper":
            out[:, group] = 1.0
            continue
        freqs = np.clip(stats.means[group], 0.0, None)
        total = freqs.sum()
        if total <= 0:
            raise InvalidVariance("one-hot group has no observed categories")
        draws = rng.choice(group.shape[0], size=m, p=freqs / total)
        out[:, group] = 0.0
        out[np.arange(m), group[draws]] = 1.0

    return out


def select_nearest(
    latents: np.ndarray, instance_latent: np.ndarray, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """Indices and distances of the n points nearest to the instance.

    Results come back in ascending distance order; equal distances keep
    ascending source-index order. Euclidean distance throughout.
    """
    latents = np.asarray(latents, dtype=np.float64)
    x = np.asarray(instance_latent, dtype=np.float64).ravel()
    if latents.ndim != 2 or latents.shape[1] != x.shape[0]:
        raise DimensionMismatch("latents and instance latent disagree on dimension")
    if not 1 <= n <= latents.shape[0]:
        raise InvalidArgument("need 1 <= n <= number of pool points")
    d = np.sqrt(((latents - x) ** 2).sum(axis=1))
    order = np.argsort(d, kind="stable")[:n]
    return order, d[order]


def kernel_weights(distances: np.ndarray) -> np.ndarray:
    """exp(-d) for each distance; strictly positive, 1 at distance 0."""
    d = np.asarray(distances, dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise NegativeDistance("distances must be finite")
    if np.any(d < 0):
        raise NegativeDistance("distances must be non-negative")
    return np.exp(-d)


def default_kernel_width(n_columns: int) -> float:
    return 0.75 * math.sqrt(n_columns)


def lime_neighborhood(
    stats: TrainingStats,
    scaler,
    x_scaled: np.ndarray,
    n: int,
    kernel_width: float | None = None,
    seed: int = 0,
    categorical_mode: str = "frequency",
) -> NeighborhoodSample:
    """Baseline neighborhood: draw exactly n points (no pool-then-select),
    measure feature-space distance to the instance, and weight with
    exp(-d^2 / width^2)."""
    from .dataset import apply_scaler  # local import to avoid cycle at module load

    x = np.asarray(x_scaled, dtype=np.float64).ravel()
    if x.shape[0] != stats.n_columns:
        raise DimensionMismatch("instance dimension does not match stats")
    if kernel_width is None:
        kernel_width = default_kernel_width(stats.n_columns)
    if kernel_width <= 0:
        raise InvalidArgument("kernel_width must be positive")

    raw = gaussian_sample(stats, n, seed, categorical_mode)
    points = apply_scaler(scaler, raw)
    d = np.sqrt(((points - x) ** 2).sum(axis=1))
    weights = np.exp(-(d**2) / (kernel_width**2))
    return NeighborhoodSample(
        points=points,
        distances=d,
        weights=weights,
        source_indices=np.arange(n, dtype=np.intp),
        kernel=f"exp(-d^2/{kernel_width!r}^2)",
    )
