"""Command-line entry point.

Subcommands: ingest, train-blackbox, train-ae, explain, fidelity, stability.
Every run is driven by one JSON config; every random choice comes from an
explicit seed in that config, so reruns reproduce artifacts byte for byte.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import evaluation as ev
from . import explain as ex
from . import neuralnet as nn
from . import sampler as sp
from .errors import ArtifactConflict, ConfigError, TreealimeError
from .util import config_hash, jsonable, sha256_bytes

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAINING = 3
EXIT_EVALUATION = 4


# ---------------------------------------------------------------------------
# Artifact store.
# ---------------------------------------------------------------------------

class ArtifactStore:
    """Owns one output directory: manifest bookkeeping plus a lock file.

    Writing a path that the manifest already records verifies the content
    hash instead of rewriting; differing content is an error, never an
    overwrite.
    """

    def __init__(self, root: str | Path, cfg_hash: str):
        self.root = Path(root)
        self.cfg_hash = cfg_hash
        self.manifest_path = self.root / "manifest.json"
        self.lock_path = self.root / ".lock"
        self.written = 0
        self.verified = 0
        self._lock_fd = None
        self.manifest: dict = {"artifacts": {}}

    def __enter__(self) -> "ArtifactStore":
        self.root.mkdir(parents=True, exist_ok=True)
        try:
            self._lock_fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(
                f"{self.root} is locked by another process (remove {self.lock_path} if stale)"
            ) from None
        if self.manifest_path.exists():
            self.manifest = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        return self

    def __exit__(self, exc_type, exc, tb):
        self.manifest_path.write_text(
            json.dumps(self.manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        if self._lock_fd is not None:
            os.close(self._lock_fd)
            self.lock_path.unlink(missing_ok=True)
        return False

    def write_bytes(self, rel: str, data: bytes) -> None:
        digest = sha256_bytes(data)
        record = self.manifest["artifacts"].get(rel)
        target = self.root / rel
        if record is not None:
            if record["sha256"] == digest:
                self.verified += 1
                return
            raise ArtifactConflict(
                f"{rel} already exists with different content; use a fresh output directory"
            )
        if target.exists():
            raise ArtifactConflict(f"{rel} exists on disk but is not in the manifest")
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
        self.manifest["artifacts"][rel] = {"sha256": digest, "config": self.cfg_hash}
        self.written += 1

    def write_text(self, rel: str, text: str) -> None:
        self.write_bytes(rel, text.encode("utf-8"))

    def write_json(self, rel: str, obj) -> None:
        self.write_text(rel, json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n")

    def write_npy(self, rel: str, arr: np.ndarray) -> None:
        buf = io.BytesIO()
        np.save(buf, arr, allow_pickle=False)
        self.write_bytes(rel, buf.getvalue())

    def read_json(self, rel: str):
        return json.loads((self.root / rel).read_text(encoding="utf-8"))

    def read_npy(self, rel: str) -> np.ndarray:
        return np.load(self.root / rel, allow_pickle=False)

    def has(self, rel: str) -> bool:
        return (self.root / rel).exists()


# ---------------------------------------------------------------------------
# Config handling.
# ---------------------------------------------------------------------------

def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ConfigError(f"config is missing {where}.{key}" if where else f"config is missing {key}")
    return doc[key]


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"MissingFile: config {path} does not exist")
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from None
    return cfg


def validate_config(cfg: dict) -> None:
    dataset = _require(cfg, "dataset", "")
    for key in ("id", "csv", "schema"):
        _require(dataset, key, "dataset")
    for key in ("csv", "schema"):
        if not Path(dataset[key]).exists():
            raise ConfigError(f"MissingFile: dataset.{key} path {dataset[key]!r} does not exist")
    split = _require(cfg, "split", "")
    _require(split, "train_fraction", "split")
    _require(split, "seed", "split")
    blackbox = _require(cfg, "blackbox", "")
    _require(blackbox, "train", "blackbox")
    _require(blackbox["train"], "seed", "blackbox.train")
    if not blackbox.get("grid_search") and "dims" not in blackbox:
        raise ConfigError("blackbox needs either dims or grid_search=true")
    ae = _require(cfg, "autoencoder", "")
    _require(ae, "train", "autoencoder")
    _require(ae["train"], "seed", "autoencoder.train")
    explainer = _require(cfg, "explainer", "")
    for key in ("method", "m", "n", "seed"):
        _require(explainer, key, "explainer")
    if explainer["method"] not in ex.METHODS:
        raise ConfigError(f"explainer.method must be one of {ex.METHODS}")
    evaluation = _require(cfg, "evaluation", "")
    _require(evaluation, "base_seed", "evaluation")
    _require(cfg, "output_dir", "")


def _train_config(doc: dict) -> nn.TrainConfig:
    return nn.TrainConfig(
        max_epochs=doc.get("max_epochs", 150),
        patience=doc.get("patience", 10),
        batch_size=doc.get("batch_size", 32),
        learning_rate=doc.get("learning_rate", 1e-3),
        beta1=doc.get("beta1", 0.9),
        beta2=doc.get("beta2", 0.999),
        epsilon=doc.get("epsilon", 1e-8),
        seed=doc["seed"],
    )


# ---------------------------------------------------------------------------
# Artifact loading between stages.
# ---------------------------------------------------------------------------

def _load_ingested(store: ArtifactStore):
    for rel in ("data/train_matrix.npy", "data/scaler.json", "data/stats.json"):
        if not store.has(rel):
            raise ConfigError(f"missing artifact {rel}; run `ingest` first")
    return {
        "train_matrix": store.read_npy("data/train_matrix.npy"),
        "test_matrix": store.read_npy("data/test_matrix.npy"),
        "train_labels": store.read_npy("data/train_labels.npy"),
        "test_labels": store.read_npy("data/test_labels.npy"),
        "scaler": ds.Scaler.from_dict(store.read_json("data/scaler.json")),
        "stats": sp.TrainingStats.from_dict(store.read_json("data/stats.json")),
    }


def _load_blackbox(store: ArtifactStore) -> nn.MlpClassifier:
    if not store.has("models/blackbox.json"):
        raise ConfigError("missing artifact models/blackbox.json; run `train-blackbox` first")
    model = nn.MlpClassifier.from_dict(store.read_json("models/blackbox.json"))
    return model

def _load_autoencoder(store: ArtifactStore) -> nn.DenoisingAutoencoder:
    if not store.has("models/autoencoder.json"):
        raise ConfigError("missing artifact models/autoencoder.json; run `train-ae` first")
    return nn.DenoisingAutoencoder.from_dict(store.read_json("models/autoencoder.json"))


def _explainer_config(cfg: dict, store: ArtifactStore, method: str | None = None) -> tuple:
    arts = _load_ingested(store)
    excfg = cfg["explainer"]
    method = method or excfg["method"]
    model = _load_blackbox(store)
    autoencoder = None
    if method in ("alime", "tree-alime") or store.has("models/autoencoder.json"):
        autoencoder = _load_autoencoder(store)
    perturbation = sp.PerturbationConfig(
        pool_size=excfg["m"],
        n_points=excfg["n"],
        categorical_mode=excfg.get("categorical_mode", "frequency"),
        seed=excfg["seed"],
    )
    ecfg = ex.ExplainerConfig(
        method=method,
        model=model,
        scaler=arts["scaler"],
        stats=arts["stats"],
        feature_names=tuple(c.name for c in arts["stats"].column_map),
        perturbation=perturbation,
        autoencoder=autoencoder,
        max_iter=excfg.get("max_iter", 150),
        l2=excfg.get("l2", 1e-4),
        max_depth=excfg.get("max_depth", 5),
        min_leaf_weight=excfg.get("min_leaf_weight"),
        kernel_width=excfg.get("kernel_width"),
        threshold=excfg.get("threshold", 0.5),
        include_instance=excfg.get("include_instance", False),
    )
    return ecfg, arts


# ---------------------------------------------------------------------------
# Commands.
# ---------------------------------------------------------------------------

def cmd_ingest(cfg: dict, store: ArtifactStore) -> None:
    schema = ds.FeatureSchema.from_json(cfg["dataset"]["schema"])
    raw = ds.load_csv(cfg["dataset"]["csv"], schema)
    encoded = ds.one_hot_encode(raw)
    scaler = ds.fit_scaler(encoded.matrix, convention=cfg.get("scaler", {}).get("convention", "population"))
    scaled = ds.apply_scaler(scaler, encoded.matrix)

    split_cfg = cfg["split"]
    train_idx, test_idx = ds.split_indices(
        encoded.n_rows, split_cfg["train_fraction"], split_cfg["seed"]
    )
    stats = sp.TrainingStats(
        means=encoded.matrix[train_idx].mean(axis=0),
        variances=encoded.matrix[train_idx].var(axis=0),
        column_map=encoded.column_map,
    )

    store.write_npy("data/train_matrix.npy", scaled[train_idx])
    store.write_npy("data/test_matrix.npy", scaled[test_idx])
    store.write_npy("data/train_labels.npy", encoded.labels[train_idx])
    store.write_npy("data/test_labels.npy", encoded.labels[test_idx])
    store.write_json("data/scaler.json", scaler.to_dict())
    store.write_json("data/stats.json", stats.to_dict())
    store.write_json(
        "data/split.json",
        {
            "seed": split_cfg["seed"],
            "train_fraction": split_cfg["train_fraction"],
            "train_indices": train_idx.tolist(),
            "test_indices": test_idx.tolist(),
        },
    )
    store.write_json(
        "reports/ingest.json",
        {
            "dataset_id": cfg["dataset"]["id"],
            "rows": encoded.n_rows,
            "encoded_columns": encoded.n_columns,
            "train_rows": int(train_idx.shape[0]),
            "test_rows": int(test_idx.shape[0]),
            "imputations": raw.imputations,
            "label_balance": float(np.mean(encoded.labels)),
            "column_names": list(encoded.column_names),
        },
    )
    store.write_text(
        "logs/ingest.log",
        f"ingest dataset={cfg['dataset']['id']} rows={encoded.n_rows} "
        f"columns={encoded.n_columns} config={store.cfg_hash}\n",
    )


def cmd_train_blackbox(cfg: dict, store: ArtifactStore) -> None:
    arts = _load_ingested(store)
    bb = cfg["blackbox"]
    tc = _train_config(bb["train"])
    X, y = arts["train_matrix"], arts["train_labels"]
    k = X.shape[1]

    report: dict = {}
    if bb.get("grid_search"):
        result = nn.grid_search_cv(
            X,
            y,
            neuron_range=tuple(bb.get("neuron_range", nn.DEFAULT_NEURON_RANGE)),
            folds=bb.get("folds", 10),
            config=tc,
            selection=bb.get("selection", "validation"),
        )
        dims = result.best_dims
        report["grid_search"] = {
            "best_dims": list(result.best_dims),
            "best_fold": result.best_fold,
            "fold_accuracies": result.fold_accuracies,
            "mean_accuracy": result.mean_accuracy,
            "fold_choices": [list(c) for c in result.fold_choices],
            "selection": result.selection,
        }
        table = io.StringIO()
        table.write("fold,h1,h2,val_accuracy,test_accuracy\n")
        for row in result.table:
            table.write(
                f"{row['fold']},{row['h1']},{row['h2']},{row['val_accuracy']!r},{row['test_accuracy']!r}\n"
            )
        store.write_text("reports/grid_search.csv", table.getvalue())
    else:
        dims = tuple(bb["dims"])
        if bb.get("cv_report"):
            single = nn.grid_search_cv(
                X,
                y,
                folds=bb.get("folds", 10),
                config=tc,
                selection=bb.get("selection", "validation"),
                combos=[(dims[0], dims[1])],
            )
            report["cv_report"] = {
                "fold_accuracies": single.fold_accuracies,
                "mean_accuracy": single.mean_accuracy,
            }

    # Final model: 90/10 inner validation split for early stopping.
    rng = np.random.default_rng(tc.seed)
    order = rng.permutation(X.shape[0])
    n_val = max(1, int(0.1 * X.shape[0]))
    val_idx, tr_idx = order[:n_val], order[n_val:]
    model = nn.mlp_train(X[tr_idx], y[tr_idx], X[val_idx], y[val_idx], (k, dims[0], dims[1], 1), tc)
    test_acc = nn.accuracy(model, arts["test_matrix"], arts["test_labels"])
    report.update(
        {
            "dims": [k, dims[0], dims[1], 1],
            "test_accuracy": test_acc,
            "best_epoch": model.best_epoch,
            "seed": tc.seed,
        }
    )

    store.write_text("models/blackbox.json", json.dumps(model.to_dict(), sort_keys=True))
    store.write_json("reports/blackbox_accuracy.json", report)
    store.write_text(
        "logs/train-blackbox.log",
        f"train-blackbox dims={dims} test_accuracy={test_acc!r} config={store.cfg_hash}\n",
    )


def cmd_train_ae(cfg: dict, store: ArtifactStore) -> None:
    arts = _load_ingested(store)
    ae_cfg = cfg["autoencoder"]
    tc = _train_config(ae_cfg["train"])
    ae = nn.ae_train(
        arts["train_matrix"],
        tc,
        latent_dim=ae_cfg.get("latent_dim"),
        noise_std=ae_cfg.get("noise_std", 0.1),
    )
    store.write_text("models/autoencoder.json", json.dumps(ae.to_dict(), sort_keys=True))
    curve = io.StringIO()
    curve.write("epoch,val_loss,best_so_far\n")
    best = float("inf")
    for i, v in enumerate(ae.val_curve):
        best = min(best, v)
        curve.write(f"{i},{v!r},{best!r}\n")
    store.write_text("reports/ae_loss_curve.csv", curve.getvalue())
    store.write_json(
        "reports/autoencoder.json",
        {
            "dims": list(ae.dims),
            "latent_dim": ae.latent_dim,
            "noise_std": ae.noise_std,
            "best_epoch": ae.best_epoch,
            "final_val_loss": ae.val_curve[ae.best_epoch] if ae.val_curve else None,
            "seed": tc.seed,
        },
    )
    store.write_text(
        "logs/train-ae.log",
        f"train-ae latent={ae.latent_dim} best_epoch={ae.best_epoch} config={store.cfg_hash}\n",
    )


def _select_instances(args, cfg: dict, n_test: int) -> list[int]:
    if args.instances:
        idx = [int(tok) for tok in args.instances.split(",") if tok.strip() != ""]
    elif args.sample:
        rng = np.random.default_rng(cfg["explainer"]["seed"])
        idx = sorted(rng.choice(n_test, size=min(args.sample, n_test), replace=False).tolist())
    else:
        idx = [cfg.get("evaluation", {}).get("instance_index", 0)]
    for i in idx:
        if not 0 <= i < n_test:
            raise IndexError(f"instance index {i} out of range [0, {n_test})")
    return idx


def cmd_explain(cfg: dict, store: ArtifactStore, args) -> None:
    method = args.method or cfg["explainer"]["method"]
    ecfg, arts = _explainer_config(cfg, store, method)
    test = arts["test_matrix"]
    indices = _select_instances(args, cfg, test.shape[0])
    log_lines = []
    for i in indices:
        instance_id = f"test[{i}]"
        e = ex.explain(ecfg, test[i], instance_id=instance_id)
        stem = f"explanations/{method}_test{i}"
        store.write_text(f"{stem}.json", e.to_json() + "\n")
        store.write_text(f"{stem}.txt", ex.render_explanation(e))
        if e.kind == "tree":
            store.write_text(f"{stem}.dot", ex.tree_to_dot(e.payload, e.feature_names) + "\n")
        log_lines.append(
            f"explain method={method} instance={instance_id} "
            f"bb={e.black_box_probability!r} surrogate={e.surrogate_probability_at_instance!r}"
        )
    store.write_text("logs/explain.log", "\n".join(log_lines) + f"\nconfig={store.cfg_hash}\n")


def cmd_fidelity(cfg: dict, store: ArtifactStore, args) -> None:
    ecfg, arts = _explainer_config(cfg, store, args.method)
    evc = cfg["evaluation"]
    test = arts["test_matrix"]
    max_points = evc.get("max_test_points")
    if max_points:
        test = test[: int(max_points)]
    n_grid = evc.get("n_grid") or [evc.get("n", cfg["explainer"]["n"])]
    methods = tuple(evc.get("methods", ("alime", "tree-alime")))
    if args.method:
        methods = (args.method,)
    report = ev.fidelity_sweep(
        ecfg,
        test,
        n_grid=list(n_grid),
        base_seed=evc["base_seed"],
        methods=methods,
        dataset_id=cfg["dataset"]["id"],
        threshold=cfg["explainer"].get("threshold", 0.5),
    )
    dataset_id = cfg["dataset"]["id"]
    store.write_text(f"reports/fidelity_{dataset_id}.csv", report.to_csv())
    store.write_json(f"reports/fidelity_{dataset_id}.json", report.to_dict())
    store.write_text(
        "logs/fidelity.log",
        f"fidelity dataset={dataset_id} methods={','.join(methods)} "
        f"grid={n_grid} points={test.shape[0]} config={store.cfg_hash}\n",
    )


def cmd_stability(cfg: dict, store: ArtifactStore, args) -> None:
    ecfg, arts = _explainer_config(cfg, store, args.method)
    evc = cfg["evaluation"]
    test = arts["test_matrix"]
    instance_index = int(evc.get("instance_index", 0))
    if not 0 <= instance_index < test.shape[0]:
        raise IndexError(f"instance index {instance_index} out of range [0, {test.shape[0]})")
    n_grid = evc.get("n_grid") or [evc.get("n", cfg["explainer"]["n"])]
    methods = tuple(evc.get("methods", ("alime", "tree-alime")))
    if args.method:
        methods = (args.method,)
    sweep = ev.stability_sweep(
        ecfg,
        test[instance_index],
        n_grid=list(n_grid),
        runs=evc.get("runs", 20),
        base_seed=evc["base_seed"],
        methods=methods,
        dataset_id=cfg["dataset"]["id"],
        instance_id=f"test[{instance_index}]",
        quartile_fraction=evc.get("quartile_fraction", 0.25),
        quartile_base=evc.get("quartile_base", "all"),
    )
    dataset_id = cfg["dataset"]["id"]
    store.write_text(f"reports/stability_{dataset_id}.csv", sweep.to_csv())
    store.write_json(f"reports/stability_{dataset_id}.json", sweep.to_dict())
    store.write_text(
        "logs/stability.log",
        f"stability dataset={dataset_id} instance=test[{instance_index}] "
        f"methods={','.join(methods)} grid={n_grid} config={store.cfg_hash}\n",
    )


# ---------------------------------------------------------------------------
# Entry point.
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treealime",
        description="Local explanations of black-box tabular classifiers.",
    )
    parser.add_argument("command", choices=["ingest", "train-blackbox", "train-ae", "explain", "fidelity", "stability"])
    parser.add_argument("--config", required=True, help="path to the run config JSON")
    parser.add_argument("--out", default=None, help="override the config's output directory")
    parser.add_argument("--seed", type=int, default=None, help="override explainer seed and evaluation base seed")
    parser.add_argument("--method", choices=list(ex.METHODS), default=None, help="override the explainer method")
    parser.add_argument("--instances", default=None, help="comma-separated test-set indices (explain)")
    parser.add_argument("--sample", type=int, default=None, help="explain this many random test instances")
    return parser


def run(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg["output_dir"] = args.out
    if args.seed is not None:
        cfg.setdefault("explainer", {})["seed"] = args.seed
        cfg.setdefault("evaluation", {})["base_seed"] = args.seed
    validate_config(cfg)
    cfg_hash = config_hash(cfg)

    with ArtifactStore(cfg["output_dir"], cfg_hash) as store:
        if args.command == "ingest":
            cmd_ingest(cfg, store)
        elif args.command == "train-blackbox":
            cmd_train_blackbox(cfg, store)
        elif args.command == "train-ae":
            cmd_train_ae(cfg, store)
        elif args.command == "explain":
            cmd_explain(cfg, store, args)
        elif args.command == "fidelity":
            cmd_fidelity(cfg, store, args)
        elif args.command == "stability":
            cmd_stability(cfg, store, args)
        print(
            f"{args.command}: wrote {store.written} artifact(s), verified {store.verified} "
            f"existing artifact(s) in {store.root}"
        )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (ConfigError, ArtifactConflict, IndexError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TreealimeError as e:
        print(f"error: {e}", file=sys.stderr)
        if args.command in ("train-blackbox", "train-ae"):
            return EXIT_TRAINING
        if args.command in ("explain", "fidelity", "stability"):
            return EXIT_EVALUATION
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
