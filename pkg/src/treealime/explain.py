"""End-to-end explainers. All three share the same shape: build a weighted
neighborhood around the instance, label it with the black box, fit an
interpretable surrogate, and package the result with enough metadata to
replay the run exactly."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import Scaler, apply_scaler
from .errors import DimensionMismatch, InvalidArgument, SingleClassNeighborhoodWarning
from .neuralnet import DenoisingAutoencoder, MlpClassifier
from .sampler import (
    NeighborhoodSample,
    PerturbationConfig,
    TrainingStats,
    gaussian_sample,
    kernel_weights,
    lime_neighborhood,
    select_nearest,
)
from .surrogate import (
    LinearSurrogate,
    TreeSurrogate,
    fit_cart,
    fit_logistic,
    predict_proba,
)

METHODS = ("lime", "alime", "tree-alime")


@dataclass
class ExplainerConfig:
    """Everything an explainer needs besides the instance itself."""

    method: str
    model: MlpClassifier
    scaler: Scaler
    stats: TrainingStats
    feature_names: tuple[str, ...]
    perturbation: PerturbationConfig
    autoencoder: DenoisingAutoencoder | None = None
    max_iter: int = 150
    l2: float = 1e-4
    max_depth: int = 5
    min_leaf_weight: float | None = None
    kernel_width: float | None = None
    threshold: float = 0.5
    include_instance: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgument(f"unknown method {self.method!r}")
        if self.method in ("alime", "tree-alime") and self.autoencoder is None:
            raise InvalidArgument(f"{self.method} requires a trained autoencoder")
        if len(self.feature_names) != self.stats.n_columns:
            raise DimensionMismatch("feature_names must cover every encoded column")


@dataclass
class Explanation:
    method: str
    kind: str  # "linear" | "tree"
    payload: LinearSurrogate | TreeSurrogate
    instance: np.ndarray
    instance_id: str | None
    n: int
    m: int
    seed: int
    black_box_probability: float
    surrogate_probability_at_instance: float
    feature_names: tuple[str, ...]
    flags: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "kind": self.kind,
            "instance_id": self.instance_id,
            "instance": self.instance.tolist(),
            "n": self.n,
            "m": self.m,
            "seed": self.seed,
            "black_box_probability": self.black_box_probability,
            "surrogate_probability": self.surrogate_probability_at_instance,
            "feature_names": list(self.feature_names),
            "flags": list(self.flags),
            "payload": self.payload.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "Explanation":
        payload = (
            LinearSurrogate.from_dict(doc["payload"])
            if doc["kind"] == "linear"
            else TreeSurrogate.from_dict(doc["payload"])
        )
        return cls(
            method=doc["method"],
            kind=doc["kind"],
            payload=payload,
            instance=np.asarray(doc["instance"], dtype=np.float64),
            instance_id=doc["instance_id"],
            n=doc["n"],
            m=doc["m"],
            seed=doc["seed"],
            black_box_probability=doc["black_box_probability"],
            surrogate_probability_at_instance=doc["surrogate_probability"],
            feature_names=tuple(doc["feature_names"]),
            flags=tuple(doc["flags"]),
        )


def _check_instance(cfg: ExplainerConfig, x_scaled: np.ndarray) -> np.ndarray:
    x = np.asarray(x_scaled, dtype=np.float64).ravel()
    if x.shape[0] != cfg.stats.n_columns:
        raise DimensionMismatch(
            f"instance has {x.shape[0]} columns, expected {cfg.stats.n_columns}"
        )
    return x


def alime_neighborhood(cfg: ExplainerConfig, x_scaled: np.ndarray, seed: int) -> NeighborhoodSample:
    """Sample the pool, embed it, and keep the n latent-nearest points with
    exp(-distance) weights."""
    pc = cfg.perturbation
    raw = gaussian_sample(cfg.stats, pc.pool_size, seed, pc.categorical_mode)
    points = apply_scaler(cfg.scaler, raw)
    latents = cfg.autoencoder.encode(points)
    x_latent = cfg.autoencoder.encode(x_scaled.reshape(1, -1))[0]
    idx, dist = select_nearest(latents, x_latent, pc.n_points)
    return NeighborhoodSample(
        points=points[idx],
        distances=dist,
        weights=kernel_weights(dist),
        source_indices=idx,
        kernel="exp(-d)",
    )


def _finish(
    cfg: ExplainerConfig,
    x: np.ndarray,
    neighborhood: NeighborhoodSample,
    seed: int,
    instance_id: str | None,
    use_tree: bool,
) -> Explanation:
    pts = neighborhood.points
    wts = neighborhood.weights
    if cfg.include_instance:
        pts = np.vstack([pts, x])
        wts = np.concatenate([wts, [1.0]])
    probs = cfg.model.predict_proba(pts)
    labels = (probs >= cfg.threshold).astype(np.float64)

    flags: list[str] = []
    if use_tree:
        payload: LinearSurrogate | TreeSurrogate = fit_cart(
            pts, labels, wts, max_depth=cfg.max_depth, min_leaf_weight=cfg.min_leaf_weight
        )
        kind = "tree"
        if payload.root.is_leaf:
            flags.append("single_class" if payload.root.impurity == 0.0 else "constant_tree")
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SingleClassNeighborhoodWarning)
            payload = fit_logistic(pts, labels, wts, max_iter=cfg.max_iter, l2=cfg.l2)
        kind = "linear"
        if payload.single_class:
            flags.append("single_class")

    return Explanation(
        method=cfg.method,
        kind=kind,
        payload=payload,
        instance=x,
        instance_id=instance_id,
        n=neighborhood.n_points,
        m=cfg.perturbation.pool_size if cfg.method != "lime" else neighborhood.n_points,
        seed=seed,
        black_box_probability=float(cfg.model.predict_proba(x)),
        surrogate_probability_at_instance=predict_proba(payload, x),
        feature_names=cfg.feature_names,
        flags=tuple(flags),
    )


def explain_alime(
    cfg: ExplainerConfig, x_scaled: np.ndarray, seed: int | None = None, instance_id: str | None = None
) -> Explanation:
    x = _check_instance(cfg, x_scaled)
    seed = cfg.perturbation.seed if seed is None else seed
    sample = alime_neighborhood(cfg, x, seed)
    return _finish(cfg, x, sample, seed, instance_id, use_tree=False)


def explain_tree_alime(
    cfg: ExplainerConfig, x_scaled: np.ndarray, seed: int | None = None, instance_id: str | None = None
) -> Explanation:
    """Same pipeline (and, for a given seed, the same neighborhood) as the
    linear variant; only the surrogate fit differs."""
    x = _check_instance(cfg, x_scaled)
    seed = cfg.perturbation.seed if seed is None else seed
    sample = alime_neighborhood(cfg, x, seed)
    return _finish(cfg, x, sample, seed, instance_id, use_tree=True)


def explain_lime(
    cfg: ExplainerConfig, x_scaled: np.ndarray, seed: int | None = None, instance_id: str | None = None
) -> Explanation:
    x = _check_instance(cfg, x_scaled)
    seed = cfg.perturbation.seed if seed is None else seed
    sample = lime_neighborhood(
        cfg.stats,
        cfg.scaler,
        x,
        cfg.perturbation.n_points,
        kernel_width=cfg.kernel_width,
        seed=seed,
        categorical_mode=cfg.perturbation.categorical_mode,
    )
    return _finish(cfg, x, sample, seed, instance_id, use_tree=False)


def explain(
    cfg: ExplainerConfig, x_scaled: np.ndarray, seed: int | None = None, instance_id: str | None = None
) -> Explanation:
    """Dispatch on cfg.method."""
    fn = {"lime": explain_lime, "alime": explain_alime, "tree-alime": explain_tree_alime}[cfg.method]
    return fn(cfg, x_scaled, seed=seed, instance_id=instance_id)


# ---------------------------------------------------------------------------
# Rendering.
# ---------------------------------------------------------------------------

def tree_to_dot(tree: TreeSurrogate, feature_names: tuple[str, ...]) -> str:
    """Graphviz DOT text; internal nodes read "name <= threshold"."""
    lines = ["digraph surrogate {", '  node [shape=box, fontname="monospace"];']
    counter = 0

    def walk(node) -> int:
        nonlocal counter
        my_id = counter
        counter += 1
        if node.is_leaf:
            lines.append(f'  n{my_id} [label="p={node.probability:.4f} w={node.weight:.4f}"];')
        else:
            name = feature_names[node.feature]
            lines.append(f'  n{my_id} [label="{name} ≤ {node.threshold:.6g}"];')
            left_id = walk(node.left)
            right_id = walk(node.right)
            lines.append(f'  n{my_id} -> n{left_id} [label="yes"];')
            lines.append(f'  n{my_id} -> n{right_id} [label="no"];')
        return my_id

    walk(tree.root)
    lines.append("}")
    return "\n".join(lines)


def _tree_text(node, feature_names, instance, depth=0) -> list[str]:
    pad = "  " * depth
    if node.is_leaf:
        return [f"{pad}leaf: p={node.probability:.4f} (weight {node.weight:.4f})"]
    name = feature_names[node.feature]
    value = instance[node.feature]
    lines = [f"{pad}{name} <= {node.threshold:.6g}?  [instance: {value:.6g}]"]
    lines += _tree_text(node.left, feature_names, instance, depth + 1)
    lines.append(f"{pad}else:")
    lines += _tree_text(node.right, feature_names, instance, depth + 1)
    return lines


def render_explanation(e: Explanation, top_k: int = 5) -> str:
    """Human-readable report: strongest coefficients for a linear surrogate,
    the indented decision path tree otherwise."""
    header = [
        f"method: {e.method}",
        f"instance: {e.instance_id if e.instance_id is not None else '(unnamed)'}",
        f"neighborhood: n={e.n} m={e.m} seed={e.seed}",
        f"black-box probability:  {e.black_box_probability:.6f}",
        f"surrogate probability:  {e.surrogate_probability_at_instance:.6f}",
    ]
    if e.flags:
        header.append(f"flags: {', '.join(e.flags)}")
    lines = list(header)

    if e.kind == "linear":
        coefs = e.payload.coefficients
        order_pos = sorted((i for i in range(len(coefs)) if coefs[i] > 0), key=lambda i: (-coefs[i], i))
        order_neg = sorted((i for i in range(len(coefs)) if coefs[i] < 0), key=lambda i: (coefs[i], i))
        lines.append("")
        lines.append(f"top positive coefficients (up to {top_k}):")
        for i in order_pos[:top_k]:
            lines.append(f"  {e.feature_names[i]:<30} {coefs[i]:+.6f}   [instance: {e.instance[i]:.6g}]")
        if not order_pos:
            lines.append("  (none)")
        lines.append(f"top negative coefficients (up to {top_k}):")
        for i in order_neg[:top_k]:
            lines.append(f"  {e.feature_names[i]:<30} {coefs[i]:+.6f}   [instance: {e.instance[i]:.6g}]")
        if not order_neg:
            lines.append("  (none)")
        lines.append(f"intercept: {e.payload.intercept:+.6f}")
    else:
        lines.append("")
        lines.append("surrogate tree:")
        lines += _tree_text(e.payload.root, e.feature_names, e.instance, depth=1)
    return "\n".join(lines) + "\n"
