"""Feed-forward networks trained in-library: the black-box classifier and the
denoising autoencoder used for latent-space weighting.

Everything here is plain numpy: batched forward/backward passes, Adam updates,
early stopping on a validation loss, and k-fold grid search for layer widths.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    FoldTooSmall,
    InvalidArgument,
    NonFiniteInput,
    NonFiniteLoss,
)
from .util import derive_seed

Layers = list[tuple[np.ndarray, np.ndarray]]

DEFAULT_NEURON_RANGE = (5, 10, 15, 20, 25, 30, 35)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 150
    patience: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise InvalidArgument("max_epochs, patience and batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        return cls(**doc)


# ---------------------------------------------------------------------------
# Functional core shared by both network kinds.
# ---------------------------------------------------------------------------

def _relu(z):
    return np.maximum(z, 0.0)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softplus(z):
    # log(1 + e^z) without overflow.
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def init_layers(dims: tuple[int, ...], rng: np.random.Generator) -> Layers:
    """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    layers: Layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / (d_in + d_out))
        w = rng.uniform(-bound, bound, size=(d_in, d_out))
        layers.append((w, np.zeros(d_out)))
    return layers


def forward(layers: Layers, activations: list[str], X: np.ndarray) -> np.ndarray:
    a = X
    for (w, b), act in zip(layers, activations):
        z = a @ w + b
        if act == "relu":
            a = _relu(z)
        elif act == "sigmoid":
            a = _sigmoid(z)
        elif act == "linear":
            a = z
        else:
            raise InvalidArgument(f"unknown activation {act!r}")
    return a


def _forward_cached(layers, activations, X):
    """Forward pass keeping layer inputs and pre-activations for backprop."""
    a = X
    inputs, zs = [], []
    for (w, b), act in zip(layers, activations):
        inputs.append(a)
        z = a @ w + b
        zs.append(z)
        if act == "relu":
            a = _relu(z)
        elif act == "sigmoid":
            a = _sigmoid(z)
        elif act == "linear":
            a = z
        else:
            raise InvalidArgument(f"unknown activation {act!r}")
    return a, inputs, zs


def _backward(layers, activations, inputs, zs, dz_last):
    """Backprop a gradient already expressed w.r.t. the LAST pre-activation."""
    grads = [None] * len(layers)
    dz = dz_last
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads[i] = (inputs[i].T @ dz, dz.sum(axis=0))
        if i > 0:
            da = dz @ w.T
            act = activations[i - 1]
            if act == "relu":
                dz = da * (zs[i - 1] > 0.0)
            elif act == "linear":
                dz = da
            elif act == "sigmoid":
                s = _sigmoid(zs[i - 1])
                dz = da * s * (1.0 - s)
    return grads


def bce_loss_and_grads(layers: Layers, activations: list[str], X, y):
    """Mean binary cross-entropy (sigmoid head) and parameter gradients.

    The final activation must be sigmoid; the loss is evaluated on the
    pre-activation with the softplus identity, so no probability clipping
    is needed anywhere.
    """
    if activations[-1] != "sigmoid":
        raise InvalidArgument("bce head requires a sigmoid output")
    _, inputs, zs = _forward_cached(layers, activations, X)
    z = zs[-1].ravel()
    y = np.asarray(y, dtype=np.float64)
    n = z.shape[0]
    loss = float(np.mean(_softplus(z) - y * z))
    dz = ((_sigmoid(z) - y) / n).reshape(-1, 1)
    return loss, _backward(layers, activations, inputs, zs, dz)


def mse_loss_and_grads(layers: Layers, activations: list[str], X, target):
    """Mean squared error over all output entries, plus parameter gradients."""
    out, inputs, zs = _forward_cached(layers, activations, X)
    diff = out - target
    loss = float(np.mean(diff * diff))
    dz_out = 2.0 * diff / diff.size
    if activations[-1] == "linear":
        dz = dz_out
    elif activations[-1] == "relu":
        dz = dz_out * (zs[-1] > 0.0)
    elif activations[-1] == "sigmoid":
        s = _sigmoid(zs[-1])
        dz = dz_out * s * (1.0 - s)
    else:
        raise InvalidArgument(f"unknown activation {activations[-1]!r}")
    return loss, _backward(layers, activations, inputs, zs, dz)


class Adam:
    """Standard Adam over a list of (W, b) layers."""

    def __init__(self, layers: Layers, lr: float, beta1: float, beta2: float, epsilon: float):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in layers]
        self.v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in layers]

    def step(self, layers: Layers, grads) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for i, ((w, b), (gw, gb)) in enumerate(zip(layers, grads)):
            mw, mb = self.m[i]
            vw, vb = self.v[i]
            mw[:] = self.beta1 * mw + (1.0 - self.beta1) * gw
            mb[:] = self.beta1 * mb + (1.0 - self.beta1) * gb
            vw[:] = self.beta2 * vw + (1.0 - self.beta2) * gw * gw
            vb[:] = self.beta2 * vb + (1.0 - self.beta2) * gb * gb
            w -= self.lr * (mw / c1) / (np.sqrt(vw / c2) + self.epsilon)
            b -= self.lr * (mb / c1) / (np.sqrt(vb / c2) + self.epsilon)


def _copy_layers(layers: Layers) -> Layers:
    return [(w.copy(), b.copy()) for w, b in layers]


# ---------------------------------------------------------------------------
# Models.
# ---------------------------------------------------------------------------

@dataclass
class MlpClassifier:
    """Two-hidden-layer rectifier network with a sigmoid probability head."""

    dims: tuple[int, ...]
    layers: Layers
    activations: list[str]
    seed: int
    config: TrainConfig
    best_epoch: int = 0
    train_curve: list[float] = field(default_factory=list)
    val_curve: list[float] = field(default_factory=list)

    @property
    def n_inputs(self) -> int:
        return self.dims[0]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        squeeze = X.ndim == 1
        if squeeze:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_inputs:
            raise DimensionMismatch(f"expected {self.n_inputs} inputs, got {X.shape[1]}")
        p = forward(self.layers, self.activations, X).ravel()
        return p[0] if squeeze else p

    def to_dict(self) -> dict:
        return {
            "kind": "mlp",
            "dims": list(self.dims),
            "activations": list(self.activations),
            "layers": [{"w": w.tolist(), "b": b.tolist()} for w, b in self.layers],
            "seed": self.seed,
            "config": self.config.to_dict(),
            "best_epoch": self.best_epoch,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpClassifier":
        layers = [
            (np.asarray(l["w"], dtype=np.float64), np.asarray(l["b"], dtype=np.float64))
            for l in doc["layers"]
        ]
        return cls(
            dims=tuple(doc["dims"]),
            layers=layers,
            activations=list(doc["activations"]),
            seed=doc["seed"],
            config=TrainConfig.from_dict(doc["config"]),
            best_epoch=doc.get("best_epoch", 0),
        )


@dataclass
class DenoisingAutoencoder:
    """Symmetric encoder/decoder trained to reconstruct clean rows from
    Gaussian-corrupted ones. ``encode`` never injects noise."""

    dims: tuple[int, ...]
    layers: Layers
    activations: list[str]
    latent_dim: int
    noise_std: float
    seed: int
    config: TrainConfig
    best_epoch: int = 0
    val_curve: list[float] = field(default_factory=list)

    @property
    def n_inputs(self) -> int:
        return self.dims[0]

    @property
    def encoder_depth(self) -> int:
        # Symmetric stack: the first half of the layers ends at the latent.
        return len(self.dims) // 2

    def encode(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        squeeze = X.ndim == 1
        if squeeze:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_inputs:
            raise DimensionMismatch(f"expected {self.n_inputs} inputs, got {X.shape[1]}")
        depth = self.encoder_depth
        z = forward(self.layers[:depth], self.activations[:depth], X)
        return z[0] if squeeze else z

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        return forward(self.layers, self.activations, X)

    def to_dict(self) -> dict:
        return {
            "kind": "dae",
            "dims": list(self.dims),
            "activations": list(self.activations),
            "layers": [{"w": w.tolist(), "b": b.tolist()} for w, b in self.layers],
            "latent_dim": self.latent_dim,
            "noise_std": self.noise_std,
            "seed": self.seed,
            "config": self.config.to_dict(),
            "best_epoch": self.best_epoch,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DenoisingAutoencoder":
        layers = [
            (np.asarray(l["w"], dtype=np.float64), np.asarray(l["b"], dtype=np.float64))
            for l in doc["layers"]
        ]
        return cls(
            dims=tuple(doc["dims"]),
            layers=layers,
            activations=list(doc["activations"]),
            latent_dim=doc["latent_dim"],
            noise_std=doc["noise_std"],
            seed=doc["seed"],
            config=TrainConfig.from_dict(doc["config"]),
            best_epoch=doc.get("best_epoch", 0),
        )


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True), encoding="utf-8")


def load_model(path: str | Path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc["kind"] == "mlp":
        return MlpClassifier.from_dict(doc)
    if doc["kind"] == "dae":
        return DenoisingAutoencoder.from_dict(doc)
    raise InvalidArgument(f"unknown model kind {doc['kind']!r}")


def mlp_forward(model: MlpClassifier, x: np.ndarray) -> float:
    """Probability of class 1 for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.n_inputs:
        raise DimensionMismatch(f"expected a vector of length {model.n_inputs}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("input vector contains NaN or infinity")
    return float(model.predict_proba(x))


def ae_encode(ae: DenoisingAutoencoder, x: np.ndarray) -> np.ndarray:
    """Latent embedding of one vector or a batch of rows (no noise)."""
    return ae.encode(x)


# ---------------------------------------------------------------------------
# Training loops.
# ---------------------------------------------------------------------------

def _check_finite(loss: float, what: str) -> None:
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"{what} became non-finite")


def mlp_train(
    train_matrix: np.ndarray,
    train_labels: np.ndarray,
    val_matrix: np.ndarray,
    val_labels: np.ndarray,
    dims: tuple[int, ...],
    config: TrainConfig,
) -> MlpClassifier:
    """Adam + mini-batch BCE with early stopping on the validation loss.

    Returns the parameters of the best validation epoch.
    """
    X = np.asarray(train_matrix, dtype=np.float64)
    y = np.asarray(train_labels, dtype=np.float64)
    Xv = np.asarray(val_matrix, dtype=np.float64)
    yv = np.asarray(val_labels, dtype=np.float64)
    if X.shape[0] == 0 or Xv.shape[0] == 0:
        raise InvalidArgument("train and validation sets must be non-empty")
    if X.shape[1] != dims[0] or dims[-1] != 1:
        raise DimensionMismatch(f"dims {dims} incompatible with {X.shape[1]} input columns")
    for arr, name in ((y, "train"), (yv, "validation")):
        if not np.isin(arr, (0.0, 1.0)).all():
            raise InvalidArgument(f"{name} labels must be 0 or 1")

    rng = np.random.default_rng(config.seed)
    layers = init_layers(dims, rng)
    activations = ["relu"] * (len(dims) - 2) + ["sigmoid"]
    opt = Adam(layers, config.learning_rate, config.beta1, config.beta2, config.epsilon)

    best_val = math.inf
    best_layers = _copy_layers(layers)
    best_epoch = 0
    stale = 0
    train_curve: list[float] = []
    val_curve: list[float] = []

    for epoch in range(config.max_epochs):
        order = rng.permutation(X.shape[0])
        for start in range(0, X.shape[0], config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = bce_loss_and_grads(layers, activations, X[idx], y[idx])
            _check_finite(loss, "batch loss")
            opt.step(layers, grads)

        train_loss, _ = bce_loss_and_grads(layers, activations, X, y)
        val_loss, _ = bce_loss_and_grads(layers, activations, Xv, yv)
        _check_finite(train_loss, "training loss")
        _check_finite(val_loss, "validation loss")
        train_curve.append(train_loss)
        val_curve.append(val_loss)

        if val_loss < best_val:
            best_val = val_loss
            best_layers = _copy_layers(layers)
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    return MlpClassifier(
        dims=tuple(dims),
        layers=best_layers,
        activations=activations,
        seed=config.seed,
        config=config,
        best_epoch=best_epoch,
        train_curve=train_curve,
        val_curve=val_curve,
    )


def accuracy(model: MlpClassifier, X: np.ndarray, y: np.ndarray, threshold: float = 0.5) -> float:
    p = model.predict_proba(np.asarray(X, dtype=np.float64))
    return float(np.mean((p >= threshold) == (np.asarray(y) == 1)))


@dataclass
class GridSearchResult:
    best_dims: tuple[int, int]
    best_fold: int
    fold_accuracies: list[float]
    mean_accuracy: float
    fold_choices: list[tuple[int, int]]
    table: list[dict]
    selection: str


def grid_search_cv(
    encoded_train: np.ndarray,
    labels: np.ndarray,
    neuron_range: tuple[int, ...] = DEFAULT_NEURON_RANGE,
    folds: int = 10,
    config: TrainConfig = TrainConfig(),
    selection: str = "validation",
    combos: list[tuple[int, int]] | None = None,
) -> GridSearchResult:
    """K-fold grid search over hidden-layer widths.

    Within each fold the fold-training rows are split 90/10 into train and
    validation; every (h1, h2) pair is trained and scored on the held-out
    fold. ``selection="validation"`` picks each fold's pair by validation
    accuracy; ``selection="paper-protocol"`` picks by held-out-fold accuracy
    instead (leaky, kept for replication). The fold with the highest held-out
    accuracy names the final pair; the mean across folds is the headline
    accuracy. ``combos`` replaces the square neuron_range x neuron_range grid
    with an explicit pair list (e.g. to CV a single architecture).
    """
    if selection not in ("validation", "paper-protocol"):
        raise InvalidArgument(f"unknown selection mode {selection!r}")
    X = np.asarray(encoded_train, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n = X.shape[0]
    if n < folds:
        raise FoldTooSmall(f"{n} rows cannot form {folds} folds")

    rng = np.random.default_rng(config.seed)
    chunks = np.array_split(rng.permutation(n), folds)
    for c in chunks:
        if c.shape[0] < 2:
            raise FoldTooSmall("every fold needs at least 2 samples")

    if combos is None:
        combos = [(h1, h2) for h1 in neuron_range for h2 in neuron_range]
    combos = [(int(h1), int(h2)) for h1, h2 in combos]
    fold_accuracies: list[float] = []
    fold_choices: list[tuple[int, int]] = []
    table: list[dict] = []

    for f, test_idx in enumerate(chunks):
        rest = np.concatenate([c for g, c in enumerate(chunks) if g != f])
        inner = np.random.default_rng(derive_seed(config.seed, "inner-split", f)).permutation(rest)
        n_val = max(1, math.floor(0.1 * inner.shape[0]))
        if inner.shape[0] - n_val < 1:
            raise FoldTooSmall(f"fold {f}: not enough rows for a 90/10 inner split")
        val_idx, tr_idx = inner[:n_val], inner[n_val:]

        best_key = -math.inf
        best_combo = combos[0]
        best_test = 0.0
        for h1, h2 in combos:
            cfg = replace(config, seed=derive_seed(config.seed, "fold", f, h1, h2))
            model = mlp_train(X[tr_idx], y[tr_idx], X[val_idx], y[val_idx], (X.shape[1], h1, h2, 1), cfg)
            val_acc = accuracy(model, X[val_idx], y[val_idx])
            test_acc = accuracy(model, X[test_idx], y[test_idx])
            table.append({"fold": f, "h1": h1, "h2": h2, "val_accuracy": val_acc, "test_accuracy": test_acc})
            key = test_acc if selection == "paper-protocol" else val_acc
            if key > best_key:
                best_key = key
                best_combo = (h1, h2)
                best_test = test_acc
        fold_accuracies.append(best_test)
        fold_choices.append(best_combo)

    best_fold = int(np.argmax(fold_accuracies))
    return GridSearchResult(
        best_dims=fold_choices[best_fold],
        best_fold=best_fold,
        fold_accuracies=fold_accuracies,
        mean_accuracy=float(np.mean(fold_accuracies)),
        fold_choices=fold_choices,
        table=table,
        selection=selection,
    )


def default_latent_dim(n_columns: int) -> int:
    return min(8, n_columns)


def ae_train(
    train_matrix: np.ndarray,
    config: TrainConfig,
    latent_dim: int | None = None,
    noise_std: float = 0.1,
) -> DenoisingAutoencoder:
    """Train the denoising autoencoder on (already scaled) rows.

    Each mini-batch is corrupted with zero-mean Gaussian noise before the
    forward pass; the loss is the MSE against the clean rows. Early stopping
    watches the clean reconstruction loss of a held-out 10% slice.
    """
    X = np.asarray(train_matrix, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgument("train_matrix must be a non-empty 2-D array")
    k = X.shape[1]
    if latent_dim is None:
        latent_dim = default_latent_dim(k)
    if latent_dim < 1:
        raise InvalidArgument("latent_dim must be >= 1")
    hidden = max(4, math.ceil(k / 2))
    dims = (k, hidden, latent_dim, hidden, k)
    activations = ["relu", "linear", "relu", "linear"]

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(X.shape[0])
    n_val = max(1, math.floor(0.1 * X.shape[0]))
    if n_val >= X.shape[0]:
        train_idx = val_idx = order
    else:
        val_idx, train_idx = order[:n_val], order[n_val:]
    Xt, Xv = X[train_idx], X[val_idx]

    layers = init_layers(dims, rng)
    opt = Adam(layers, config.learning_rate, config.beta1, config.beta2, config.epsilon)

    best_val = math.inf
    best_layers = _copy_layers(layers)
    best_epoch = 0
    stale = 0
    val_curve: list[float] = []

    for epoch in range(config.max_epochs):
        perm = rng.permutation(Xt.shape[0])
        for start in range(0, Xt.shape[0], config.batch_size):
            idx = perm[start : start + config.batch_size]
            clean = Xt[idx]
            noisy = clean + rng.normal(0.0, noise_std, size=clean.shape) if noise_std > 0 else clean
            loss, grads = mse_loss_and_grads(layers, activations, noisy, clean)
            _check_finite(loss, "batch loss")
            opt.step(layers, grads)

        val_loss, _ = mse_loss_and_grads(layers, activations, Xv, Xv)
        _check_finite(val_loss, "validation loss")
        val_curve.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_layers = _copy_layers(layers)
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    return DenoisingAutoencoder(
        dims=dims,
        layers=best_layers,
        activations=activations,
        latent_dim=latent_dim,
        noise_std=noise_std,
        seed=config.seed,
        config=config,
        best_epoch=best_epoch,
        val_curve=val_curve,
    )
