import numpy as np
import pytest

import treealime as ta
from treealime import neuralnet as nn
from treealime.errors import (
    DimensionMismatch,
    FoldTooSmall,
    InvalidArgument,
    NonFiniteInput,
    NonFiniteLoss,
)


def finite_diff_grads(loss_fn, layers, h=1e-6):
    """Central differences over every parameter entry."""
    grads = []
    for w, b in layers:
        gw = np.zeros_like(w)
        gb = np.zeros_like(b)
        for idx in np.ndindex(*w.shape):
            orig = w[idx]
            w[idx] = orig + h
            lp = loss_fn()
            w[idx] = orig - h
            lm = loss_fn()
            w[idx] = orig
            gw[idx] = (lp - lm) / (2 * h)
        for i in range(b.shape[0]):
            orig = b[i]
            b[i] = orig + h
            lp = loss_fn()
            b[i] = orig - h
            lm = loss_fn()
            b[i] = orig
            gb[i] = (lp - lm) / (2 * h)
        grads.append((gw, gb))
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for (aw, ab), (nw, nb) in zip(analytic, numeric):
        for a, n in ((aw, nw), (ab, nb)):
            denom = np.maximum(1e-8, np.abs(a) + np.abs(n))
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def make_model(dims=(4, 3, 2, 1), seed=0):
    rng = np.random.default_rng(seed)
    layers = nn.init_layers(dims, rng)
    activations = ["relu"] * (len(dims) - 2) + ["sigmoid"]
    return ta.MlpClassifier(
        dims=dims, layers=layers, activations=activations, seed=seed, config=ta.TrainConfig(seed=seed)
    )


# ---------------------------------------------------------------------------
# mlp_forward
# ---------------------------------------------------------------------------

def test_forward_zero_parameters_gives_half():
    model = make_model()
    for w, b in model.layers:
        w[:] = 0.0
        b[:] = 0.0
    assert ta.mlp_forward(model, np.ones(4)) == pytest.approx(0.5)


def test_forward_output_in_open_interval():
    model = make_model(dims=(30, 20, 25, 1), seed=3)
    x = np.random.default_rng(0).normal(size=30)
    p = ta.mlp_forward(model, x)
    assert 0.0 < p < 1.0


def test_forward_purity():
    model = make_model(seed=1)
    x = np.random.default_rng(2).normal(size=4)
    assert ta.mlp_forward(model, x) == ta.mlp_forward(model, x.copy())


def test_forward_errors():
    model = make_model()
    with pytest.raises(DimensionMismatch):
        ta.mlp_forward(model, np.ones(5))
    with pytest.raises(NonFiniteInput):
        ta.mlp_forward(model, np.array([np.nan, 0.0, 0.0, 0.0]))


def test_forward_batch_matches_rows():
    model = make_model(seed=4)
    X = np.random.default_rng(5).normal(size=(10, 4))
    batch = model.predict_proba(X)
    singles = np.array([ta.mlp_forward(model, row) for row in X])
    assert np.allclose(batch, singles, rtol=0, atol=1e-12)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def test_bce_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    for trial in range(10):
        dims = (3, 4, 2, 1)
        layers = nn.init_layers(dims, rng)
        activations = ["relu", "relu", "sigmoid"]
        X = rng.normal(size=(6, 3))
        y = rng.integers(0, 2, size=6).astype(float)
        _, analytic = nn.bce_loss_and_grads(layers, activations, X, y)
        numeric = finite_diff_grads(lambda: nn.bce_loss_and_grads(layers, activations, X, y)[0], layers)
        assert max_rel_error(analytic, numeric) < 1e-4


def test_mse_gradients_match_finite_differences():
    rng = np.random.default_rng(13)
    for trial in range(10):
        dims = (4, 3, 2, 3, 4)
        layers = nn.init_layers(dims, rng)
        activations = ["relu", "linear", "relu", "linear"]
        X = rng.normal(size=(5, 4))
        target = rng.normal(size=(5, 4))
        _, analytic = nn.mse_loss_and_grads(layers, activations, X, target)
        numeric = finite_diff_grads(
            lambda: nn.mse_loss_and_grads(layers, activations, X, target)[0], layers
        )
        assert max_rel_error(analytic, numeric) < 1e-4


# ---------------------------------------------------------------------------
# mlp_train
# ---------------------------------------------------------------------------

def separable_toy():
    x = np.linspace(-2.0, 2.0, 20)
    X = np.column_stack([x, -x])
    y = (x > 0).astype(int)
    return X, y


def test_train_separable_reaches_full_accuracy():
    X, y = separable_toy()
    model = ta.mlp_train(X, y, X, y, (2, 6, 4, 1), ta.TrainConfig(max_epochs=150, patience=150, batch_size=4, seed=0))
    assert ta.accuracy(model, X, y) == 1.0


def test_train_seeded_determinism():
    X, y = separable_toy()
    cfg = ta.TrainConfig(max_epochs=20, patience=20, batch_size=4, seed=9)
    m1 = ta.mlp_train(X, y, X, y, (2, 5, 3, 1), cfg)
    m2 = ta.mlp_train(X, y, X, y, (2, 5, 3, 1), cfg)
    for (w1, b1), (w2, b2) in zip(m1.layers, m2.layers):
        assert np.array_equal(w1, w2)
        assert np.array_equal(b1, b2)


def test_train_curves_finite_and_best_epoch_is_minimum():
    X, y = separable_toy()
    model = ta.mlp_train(X, y, X, y, (2, 5, 3, 1), ta.TrainConfig(max_epochs=40, patience=40, batch_size=4, seed=2))
    assert np.all(np.isfinite(model.train_curve))
    assert model.val_curve[model.best_epoch] == min(model.val_curve)


def test_train_rejects_bad_labels():
    X, y = separable_toy()
    with pytest.raises(InvalidArgument):
        ta.mlp_train(X, y + 1, X, y, (2, 5, 3, 1), ta.TrainConfig(seed=0))


def test_train_nan_input_raises_non_finite_loss():
    X, y = separable_toy()
    X = X.copy()
    X[0, 0] = np.nan
    with pytest.raises(NonFiniteLoss):
        ta.mlp_train(X, y, X, y, (2, 5, 3, 1), ta.TrainConfig(seed=0))


# ---------------------------------------------------------------------------
# grid_search_cv
# ---------------------------------------------------------------------------

def test_grid_search_singleton_grid():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] > 0).astype(int)
    res = ta.grid_search_cv(
        X, y, neuron_range=(5,), folds=5, config=ta.TrainConfig(max_epochs=8, patience=8, seed=0)
    )
    assert res.best_dims == (5, 5)
    assert len(res.fold_accuracies) == 5
    assert res.mean_accuracy == pytest.approx(np.mean(res.fold_accuracies))
    assert len(res.table) == 5  # one combo per fold


def test_grid_search_fold_too_small():
    X = np.zeros((15, 2))
    y = np.zeros(15, dtype=int)
    with pytest.raises(FoldTooSmall):
        ta.grid_search_cv(X, y, neuron_range=(5,), folds=10, config=ta.TrainConfig(seed=0))


def test_grid_search_paper_protocol_runs():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(50, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    res = ta.grid_search_cv(
        X,
        y,
        neuron_range=(4, 6),
        folds=5,
        config=ta.TrainConfig(max_epochs=5, patience=5, seed=1),
        selection="paper-protocol",
    )
    assert res.selection == "paper-protocol"
    assert len(res.table) == 5 * 4  # folds x combos


# ---------------------------------------------------------------------------
# autoencoder
# ---------------------------------------------------------------------------

def line_data(n=256, k=5, seed=0):
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=k)
    direction /= np.linalg.norm(direction)
    t = rng.normal(size=(n, 1))
    return t * direction


def test_ae_recovers_one_dimensional_structure():
    X = line_data()
    cfg = ta.TrainConfig(max_epochs=500, patience=60, batch_size=32, learning_rate=5e-3, seed=0)
    ae = ta.ae_train(X, cfg, latent_dim=1, noise_std=0.0)
    held = line_data(n=64, seed=99)
    mse = float(np.mean((ae.reconstruct(held) - held) ** 2))
    assert mse < 1e-3


def test_ae_beats_noisy_identity_baseline():
    rng = np.random.default_rng(7)
    k, noise_std = 10, 0.5
    basis = rng.normal(size=(3, k))
    X = rng.normal(size=(400, 3)) @ basis
    cfg = ta.TrainConfig(max_epochs=200, patience=30, batch_size=32, learning_rate=5e-3, seed=1)
    ae = ta.ae_train(X, cfg, latent_dim=3, noise_std=noise_std)
    held = rng.normal(size=(100, 3)) @ basis
    noisy = held + rng.normal(0.0, noise_std, size=held.shape)
    denoised_err = float(np.mean(np.sum((ae.reconstruct(noisy) - held) ** 2, axis=1)))
    identity_err = noise_std**2 * k  # analytic per-sample error of returning the noisy input
    assert denoised_err < identity_err


def test_ae_determinism():
    X = line_data(n=60)
    cfg = ta.TrainConfig(max_epochs=15, patience=15, batch_size=16, seed=21)
    a1 = ta.ae_train(X, cfg, latent_dim=2, noise_std=0.1)
    a2 = ta.ae_train(X, cfg, latent_dim=2, noise_std=0.1)
    for (w1, b1), (w2, b2) in zip(a1.layers, a2.layers):
        assert np.array_equal(w1, w2)
        assert np.array_equal(b1, b2)


def test_ae_encode_contract():
    X = line_data(n=40)
    ae = ta.ae_train(X, ta.TrainConfig(max_epochs=5, patience=5, seed=0), latent_dim=3)
    z = ta.ae_encode(ae, X[0])
    assert z.shape == (3,)
    assert np.array_equal(z, ta.ae_encode(ae, X[0]))  # no noise at encode time
    batch = ta.ae_encode(ae, X)
    assert batch.shape == (40, 3)
    singles = np.vstack([ta.ae_encode(ae, row) for row in X])
    assert np.allclose(batch, singles, rtol=0, atol=1e-10)
    with pytest.raises(DimensionMismatch):
        ta.ae_encode(ae, np.ones(6))


def test_ae_latent_dim_defaults():
    assert nn.default_latent_dim(30) == 8
    assert nn.default_latent_dim(5) == 5


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def test_model_save_load_bitwise(tmp_path):
    X, y = separable_toy()
    model = ta.mlp_train(X, y, X, y, (2, 5, 3, 1), ta.TrainConfig(max_epochs=10, patience=10, seed=3))
    path = tmp_path / "model.json"
    ta.save_model(model, path)
    loaded = ta.load_model(path)
    probe = np.random.default_rng(0).normal(size=(25, 2))
    assert np.array_equal(model.predict_proba(probe), loaded.predict_proba(probe))


def test_ae_save_load_bitwise(tmp_path):
    X = line_data(n=50)
    ae = ta.ae_train(X, ta.TrainConfig(max_epochs=5, patience=5, seed=2), latent_dim=2)
    path = tmp_path / "ae.json"
    ta.save_model(ae, path)
    loaded = ta.load_model(path)
    assert np.array_equal(ae.encode(X), loaded.encode(X))
