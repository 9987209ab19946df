"""Locally interpretable surrogate models: a weighted logistic regression and
a weighted CART classification tree, both fit on a neighborhood of one
instance using the black box's thresholded outputs as labels."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidArgument, SingleClassNeighborhoodWarning

# Two impurity decreases within this tolerance count as tied; ties go to the
# lowest feature index, then the lowest threshold. Decreases are normalized by
# the total sample weight so the tolerance is scale-free.
GAIN_TOLERANCE = 1e-12


def _sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _sigmoid_scalar(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


# ---------------------------------------------------------------------------
# Weighted logistic regression.
# ---------------------------------------------------------------------------

@dataclass
class LinearSurrogate:
    coefficients: np.ndarray
    intercept: float
    iterations_used: int
    converged: bool
    single_class: bool = False

    @property
    def n_features(self) -> int:
        return self.coefficients.shape[0]

    def predict_proba(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.shape[0] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {x.shape[0]}")
        return _sigmoid_scalar(float(np.dot(self.coefficients, x) + self.intercept))

    def to_dict(self) -> dict:
        return {
            "kind": "linear",
            "coefficients": self.coefficients.tolist(),
            "intercept": self.intercept,
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "single_class": self.single_class,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LinearSurrogate":
        return cls(
            coefficients=np.asarray(doc["coefficients"], dtype=np.float64),
            intercept=float(doc["intercept"]),
            iterations_used=int(doc["iterations_used"]),
            converged=bool(doc["converged"]),
            single_class=bool(doc.get("single_class", False)),
        )


def logistic_objective(theta: np.ndarray, X: np.ndarray, y: np.ndarray, weights: np.ndarray, l2: float):
    """Weighted-mean BCE plus an l2 penalty on the non-intercept entries.

    ``theta[0]`` is the intercept. Normalizing by the weight total makes the
    objective invariant to rescaling all weights by a positive constant.
    Returns (value, gradient).
    """
    z = X @ theta[1:] + theta[0]
    total = weights.sum()
    value = float(np.dot(weights, _softplus(z) - y * z) / total)
    value += 0.5 * l2 * float(np.dot(theta[1:], theta[1:]))
    r = weights * (_sigmoid(z) - y) / total
    grad = np.concatenate(([r.sum()], X.T @ r + l2 * theta[1:]))
    return value, grad


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray,
    max_iter: int = 150,
    l2: float = 1e-4,
    tol: float = 1e-6,
) -> LinearSurrogate:
    """Full-batch gradient descent with backtracking (Armijo) line search.

    Stops when the gradient norm drops below ``tol`` or after ``max_iter``
    accepted steps. A neighborhood whose labels all agree yields an
    intercept-only constant model, flagged via ``single_class`` and a warning.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("X must be 2-D")
    n, k = X.shape
    if n < 2:
        raise InvalidArgument("need at least 2 neighborhood points")
    if y.shape[0] != n or w.shape[0] != n:
        raise DimensionMismatch("labels and weights must match X rows")
    if np.any(w < 0) or w.sum() <= 0:
        raise InvalidArgument("weights must be non-negative with a positive total")
    if not np.isin(y, (0.0, 1.0)).all():
        raise InvalidArgument("labels must be 0 or 1")

    active = y[w > 0]
    if active.size == 0 or np.all(active == active[0]):
        p = float(np.clip(np.dot(w, y) / w.sum(), 1e-6, 1.0 - 1e-6))
        warnings.warn(
            "all neighborhood labels agree; returning a constant intercept-only model",
            SingleClassNeighborhoodWarning,
            stacklevel=2,
        )
        return LinearSurrogate(
            coefficients=np.zeros(k),
            intercept=math.log(p / (1.0 - p)),
            iterations_used=0,
            converged=True,
            single_class=True,
        )

    theta = np.zeros(k + 1)
    value, grad = logistic_objective(theta, X, y, w, l2)
    step = 1.0
    iterations = 0
    converged = False
    for _ in range(max_iter):
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            converged = True
            break
        # Backtracking from twice the last accepted step, capped at 1.
        t = min(1.0, 2.0 * step)
        sq = gnorm * gnorm
        while True:
            candidate = theta - t * grad
            cand_value, cand_grad = logistic_objective(candidate, X, y, w, l2)
            if cand_value <= value - 1e-4 * t * sq or t < 1e-20:
                break
            t *= 0.5
        if t < 1e-20:
            break
        theta, value, grad, step = candidate, cand_value, cand_grad, t
        iterations += 1

    if not converged:
        converged = float(np.linalg.norm(grad)) < tol
    return LinearSurrogate(
        coefficients=theta[1:],
        intercept=float(theta[0]),
        iterations_used=iterations,
        converged=converged,
        single_class=False,
    )


# ---------------------------------------------------------------------------
# Weighted CART.
# ---------------------------------------------------------------------------

@dataclass
class TreeNode:
    """Internal node (feature >= 0) or leaf (feature == -1)."""

    feature: int
    threshold: float
    probability: float
    weight: float
    impurity: float
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    def to_dict(self) -> dict:
        doc = {
            "probability": self.probability,
            "weight": self.weight,
            "impurity": self.impurity,
        }
        if not self.is_leaf:
            doc.update(
                feature=self.feature,
                threshold=self.threshold,
                left=self.left.to_dict(),
                right=self.right.to_dict(),
            )
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TreeNode":
        if "feature" in doc:
            return cls(
                feature=int(doc["feature"]),
                threshold=float(doc["threshold"]),
                probability=float(doc["probability"]),
                weight=float(doc["weight"]),
                impurity=float(doc["impurity"]),
                left=cls.from_dict(doc["left"]),
                right=cls.from_dict(doc["right"]),
            )
        return cls(
            feature=-1,
            threshold=0.0,
            probability=float(doc["probability"]),
            weight=float(doc["weight"]),
            impurity=float(doc["impurity"]),
        )


@dataclass
class TreeSurrogate:
    root: TreeNode
    max_depth: int
    n_features: int
    total_weight: float

    def predict_proba(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.shape[0] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {x.shape[0]}")
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.probability

    def depth(self) -> int:
        def walk(node, d):
            if node.is_leaf:
                return d
            return max(walk(node.left, d + 1), walk(node.right, d + 1))

        return walk(self.root, 0)

    def leaves(self) -> list[TreeNode]:
        out = []

        def walk(node):
            if node.is_leaf:
                out.append(node)
            else:
                walk(node.left)
                walk(node.right)

        walk(self.root)
        return out

    def internal_nodes(self) -> list[TreeNode]:
        out = []

        def walk(node):
            if not node.is_leaf:
                out.append(node)
                walk(node.left)
                walk(node.right)

        walk(self.root)
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "tree",
            "max_depth": self.max_depth,
            "n_features": self.n_features,
            "total_weight": self.total_weight,
            "root": self.root.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TreeSurrogate":
        return cls(
            root=TreeNode.from_dict(doc["root"]),
            max_depth=int(doc["max_depth"]),
            n_features=int(doc["n_features"]),
            total_weight=float(doc["total_weight"]),
        )


def _gini(pos: float, total: float) -> float:
    if total <= 0:
        return 0.0
    p = pos / total
    return 2.0 * p * (1.0 - p)


def candidate_thresholds(values: np.ndarray) -> np.ndarray:
    """Midpoints between consecutive distinct sorted values that actually
    separate them (a <= t < b); degenerate midpoints are dropped."""
    u = np.unique(values)
    if u.shape[0] < 2:
        return np.empty(0)
    t = u[:-1] + (u[1:] - u[:-1]) * 0.5
    valid = (t >= u[:-1]) & (t < u[1:])
    return t[valid]


def best_split(X: np.ndarray, y: np.ndarray, w: np.ndarray, total_weight: float, min_leaf_weight: float):
    """The (feature, threshold, normalized decrease) of the best weighted-Gini
    split, or None when no candidate clears the gain tolerance.

    Decreases are normalized by the tree's total weight. The winner is the
    maximum decrease; anything within GAIN_TOLERANCE of it counts as tied and
    the lowest (feature, threshold) wins.
    """
    node_w = float(w.sum())
    node_pos = float(np.dot(w, y))
    node_term = node_w * _gini(node_pos, node_w)

    best_gain = -math.inf
    per_feature: list[tuple[np.ndarray, np.ndarray]] = []
    for f in range(X.shape[1]):
        col = X[:, f]
        order = np.argsort(col, kind="stable")
        sv = col[order]
        sw = w[order]
        sp = sw * y[order]
        cum_w = np.cumsum(sw)
        cum_pos = np.cumsum(sp)

        boundary = np.nonzero(sv[:-1] < sv[1:])[0]
        if boundary.shape[0] == 0:
            per_feature.append((np.empty(0), np.empty(0)))
            continue
        t = sv[boundary] + (sv[boundary + 1] - sv[boundary]) * 0.5
        valid = (t >= sv[boundary]) & (t < sv[boundary + 1])
        boundary, t = boundary[valid], t[valid]
        if boundary.shape[0] == 0:
            per_feature.append((np.empty(0), np.empty(0)))
            continue

        lw = cum_w[boundary]
        lp = cum_pos[boundary]
        rw = node_w - lw
        rp = node_pos - lp
        ok = (lw >= min_leaf_weight) & (rw >= min_leaf_weight)
        with np.errstate(divide="ignore", invalid="ignore"):
            gl = 2.0 * (lp / lw) * (1.0 - lp / lw)
            gr = 2.0 * (rp / rw) * (1.0 - rp / rw)
        gl = np.where(lw > 0, gl, 0.0)
        gr = np.where(rw > 0, gr, 0.0)
        gain = np.where(ok, (node_term - lw * gl - rw * gr) / total_weight, -math.inf)
        per_feature.append((t, gain))
        local_best = gain.max() if gain.size else -math.inf
        if local_best > best_gain:
            best_gain = local_best

    if not math.isfinite(best_gain) or best_gain <= GAIN_TOLERANCE:
        return None

    # Lowest feature, then lowest threshold, among near-ties with the best.
    for f, (t, gain) in enumerate(per_feature):
        if gain.size == 0:
            continue
        hits = np.nonzero(gain >= best_gain - GAIN_TOLERANCE)[0]
        if hits.size:
            i = hits[0]  # thresholds ascend within a feature
            return f, float(t[i]), float(gain[i])
    return None


def fit_cart(
    X: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray,
    max_depth: int = 5,
    min_leaf_weight: float | None = None,
) -> TreeSurrogate:
    """Greedy weighted-Gini CART with midpoint thresholds.

    Recursion stops at purity, the depth cap, a child below the minimum leaf
    weight, or when no split clears the gain tolerance. Points with value
    equal to the threshold route left.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise InvalidArgument("X must be a non-empty 2-D array")
    if y.shape[0] != X.shape[0] or w.shape[0] != X.shape[0]:
        raise DimensionMismatch("labels and weights must match X rows")
    if np.any(w <= 0):
        raise InvalidArgument("sample weights must be strictly positive")
    if not np.isin(y, (0.0, 1.0)).all():
        raise InvalidArgument("labels must be 0 or 1")
    if max_depth < 0:
        raise InvalidArgument("max_depth must be >= 0")

    total_weight = float(w.sum())
    if min_leaf_weight is None:
        min_leaf_weight = 1e-6 * total_weight

    def build(idx: np.ndarray, depth: int) -> TreeNode:
        sub_w = w[idx]
        sub_y = y[idx]
        node_w = float(sub_w.sum())
        node_pos = float(np.dot(sub_w, sub_y))
        prob = min(max(node_pos / node_w, 0.0), 1.0)
        impurity = _gini(node_pos, node_w)
        leaf = TreeNode(feature=-1, threshold=0.0, probability=prob, weight=node_w, impurity=impurity)

        pure = not (np.any(sub_y == 0.0) and np.any(sub_y == 1.0))
        if pure or depth >= max_depth:
            return leaf
        found = best_split(X[idx], sub_y, sub_w, total_weight, min_leaf_weight)
        if found is None:
            return leaf
        f, t, _ = found
        mask = X[idx, f] <= t
        node = TreeNode(
            feature=f,
            threshold=t,
            probability=prob,
            weight=node_w,
            impurity=impurity,
            left=build(idx[mask], depth + 1),
            right=build(idx[~mask], depth + 1),
        )
        return node

    root = build(np.arange(X.shape[0]), 0)
    return TreeSurrogate(root=root, max_depth=max_depth, n_features=X.shape[1], total_weight=total_weight)


def predict_proba(surrogate, x: np.ndarray) -> float:
    """Probability of class 1 at x for either surrogate kind."""
    if isinstance(surrogate, (LinearSurrogate, TreeSurrogate)):
        return surrogate.predict_proba(x)
    raise InvalidArgument(f"unknown surrogate type {type(surrogate).__name__}")


def feature_importances(tree: TreeSurrogate) -> np.ndarray:
    """Weighted impurity decrease per feature, normalized to sum 1.

    A single-leaf tree has no splits and yields the all-zero vector.
    """
    imp = np.zeros(tree.n_features)
    for node in tree.internal_nodes():
        drop = (
            node.weight * node.impurity
            - node.left.weight * node.left.impurity
            - node.right.weight * node.right.impurity
        )
        imp[node.feature] += drop
    total = imp.sum()
    if total > 0:
        imp /= total
    return imp


def top_bottom_quartile(
    coefs: np.ndarray, fraction: float = 0.25, base: str = "all"
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Indices of the strongest positive and negative coefficients.

    With ``base="all"`` each side keeps up to max(1, floor(fraction * K))
    entries; ``base="signed"`` computes the cap from the count of strictly
    positive (resp. negative) coefficients instead. Ties prefer the lower
    index. Sides may come back smaller when few coefficients carry the sign.
    """
    coefs = np.asarray(coefs, dtype=np.float64).ravel()
    k_total = coefs.shape[0]
    if k_total < 1:
        raise InvalidArgument("need at least one coefficient")
    if base not in ("all", "signed"):
        raise InvalidArgument(f"unknown quantile base {base!r}")

    pos_candidates = [i for i in range(k_total) if coefs[i] > 0]
    neg_candidates = [i for i in range(k_total) if coefs[i] < 0]
    if base == "all":
        k_pos = k_neg = max(1, math.floor(fraction * k_total))
    else:
        k_pos = max(1, math.floor(fraction * len(pos_candidates))) if pos_candidates else 0
        k_neg = max(1, math.floor(fraction * len(neg_candidates))) if neg_candidates else 0

    pos_candidates.sort(key=lambda i: (-coefs[i], i))
    neg_candidates.sort(key=lambda i: (coefs[i], i))
    return tuple(pos_candidates[:k_pos]), tuple(neg_candidates[:k_neg])
