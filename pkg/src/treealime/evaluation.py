"""Local-fidelity and stability evaluation.

Fidelity: fraction of test points whose surrogate agrees with the black box
after thresholding both probabilities. Stability: mean pairwise Jaccard
similarity of the selected-feature sets across re-runs with different
perturbation seeds (models stay fixed).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GridExceedsPool, InvalidArgument, TooFewRuns
from .explain import ExplainerConfig, Explanation, explain
from .surrogate import feature_importances, top_bottom_quartile
from .util import derive_seed

# The run-count denominator follows the ordered-pair convention T(T-1);
# reports carry this tag so downstream numbers are unambiguous.
STABILITY_FORMULA = "ordered-pairs/T(T-1)"


def jaccard(a, b) -> float:
    """|a n b| / |a u b|; two empty sets count as identical (1.0)."""
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def _pairwise_mean(sets: list[set]) -> float:
    t = len(sets)
    if t < 2:
        raise TooFewRuns("need at least two runs")
    total = 0.0
    for i in range(t):
        for j in range(t):
            if i != j:
                total += jaccard(sets[i], sets[j])
    return total / (t * (t - 1))


def linear_stability(runs: list[tuple]) -> tuple[float, float, float]:
    """Mean pairwise Jaccard of the positive sets, of the negative sets, and
    their average. ``runs`` holds (positive_set, negative_set) pairs."""
    if len(runs) < 2:
        raise TooFewRuns("need at least two runs")
    p_score = _pairwise_mean([set(p) for p, _ in runs])
    n_score = _pairwise_mean([set(n) for _, n in runs])
    return p_score, n_score, (p_score + n_score) / 2.0


def tree_stability(runs: list) -> float:
    """Mean pairwise Jaccard of the used-feature sets across runs."""
    return _pairwise_mean([set(r) for r in runs])


@dataclass
class StabilityReport:
    instance_id: str | None
    method: str
    n: int
    seeds: list[int]
    run_sets: list[dict]
    score: float
    p_score: float | None
    n_score: float | None
    feature_counts: list[int]
    mean_feature_count: float
    formula: str = STABILITY_FORMULA

    @property
    def run_count(self) -> int:
        return len(self.seeds)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "method": self.method,
            "n": self.n,
            "seeds": list(self.seeds),
            "runs": self.run_sets,
            "score": self.score,
            "p_score": self.p_score,
            "n_score": self.n_score,
            "feature_counts": list(self.feature_counts),
            "mean_feature_count": self.mean_feature_count,
            "formula": self.formula,
        }


def stability_experiment(
    cfg: ExplainerConfig,
    x_scaled: np.ndarray,
    runs: int = 20,
    base_seed: int = 0,
    instance_id: str | None = None,
    seeds: list[int] | None = None,
    quartile_fraction: float = 0.25,
    quartile_base: str = "all",
    n_override: int | None = None,
) -> StabilityReport:
    """Re-explain one instance ``runs`` times with seeds base_seed..base_seed+runs-1
    (or an explicit seed list) and score the feature-set agreement."""
    if seeds is None:
        seeds = [base_seed + r for r in range(runs)]
    if len(seeds) < 2:
        raise TooFewRuns("need at least two runs")
    run_cfg = cfg
    if n_override is not None:
        run_cfg = replace(cfg, perturbation=replace(cfg.perturbation, n_points=n_override))

    run_sets: list[dict] = []
    counts: list[int] = []
    linear_runs: list[tuple] = []
    tree_runs: list = []
    for seed in seeds:
        e = explain(run_cfg, x_scaled, seed=seed, instance_id=instance_id)
        if e.kind == "linear":
            pos, neg = top_bottom_quartile(
                e.payload.coefficients, fraction=quartile_fraction, base=quartile_base
            )
            linear_runs.append((pos, neg))
            run_sets.append({"seed": seed, "positive": sorted(pos), "negative": sorted(neg)})
            counts.append(len(pos) + len(neg))
        else:
            used = sorted(int(i) for i in np.nonzero(feature_importances(e.payload) > 0)[0])
            tree_runs.append(used)
            run_sets.append({"seed": seed, "used": used})
            counts.append(len(used))

    if linear_runs:
        p_score, n_score, combined = linear_stability(linear_runs)
        score = combined
    else:
        p_score = n_score = None
        score = tree_stability(tree_runs)

    return StabilityReport(
        instance_id=instance_id,
        method=cfg.method,
        n=run_cfg.perturbation.n_points,
        seeds=list(seeds),
        run_sets=run_sets,
        score=score,
        p_score=p_score,
        n_score=n_score,
        feature_counts=counts,
        mean_feature_count=float(np.mean(counts)),
    )


@dataclass
class FidelityEntry:
    n: int
    accuracy: float
    count: int
    agreements: list[bool] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "count": self.count,
            "agreements": [bool(a) for a in self.agreements],
        }


def _point_seed(base_seed: int, row: np.ndarray) -> int:
    # Tied to the row's contents, not its position, so fidelity is invariant
    # to test-set ordering.
    return derive_seed(base_seed, np.asarray(row, dtype=np.float64))


def local_fidelity(
    cfg: ExplainerConfig,
    test_matrix: np.ndarray,
    n: int,
    threshold: float = 0.5,
    base_seed: int = 0,
    explain_fn=None,
) -> FidelityEntry:
    """Agreement fraction between surrogate and black box over the test rows.

    Every row gets its own derived seed. ``explain_fn(cfg, x, seed)`` can be
    injected for testing; it defaults to the real pipeline.
    """
    X = np.asarray(test_matrix, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidArgument("test set must be a non-empty 2-D array")
    if n > cfg.perturbation.pool_size:
        raise GridExceedsPool(f"n={n} exceeds pool size {cfg.perturbation.pool_size}")
    if explain_fn is None:
        explain_fn = lambda c, x, s: explain(c, x, seed=s)  # noqa: E731

    run_cfg = replace(cfg, perturbation=replace(cfg.perturbation, n_points=n))
    agreements: list[bool] = []
    for row in X:
        e: Explanation = explain_fn(run_cfg, row, _point_seed(base_seed, row))
        bb = e.black_box_probability >= threshold
        sg = e.surrogate_probability_at_instance >= threshold
        agreements.append(bb == sg)
    return FidelityEntry(
        n=n,
        accuracy=float(np.mean(agreements)),
        count=len(agreements),
        agreements=agreements,
    )


@dataclass
class FidelityReport:
    dataset_id: str
    methods: tuple[str, ...]
    entries: dict  # method -> list[FidelityEntry], aligned across methods
    base_seed: int

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "methods": list(self.methods),
            "base_seed": self.base_seed,
            "entries": {m: [e.to_dict() for e in es] for m, es in self.entries.items()},
        }

    def to_csv(self) -> str:
        """Rows of ``n,linear_value,tree_value`` (blank where not evaluated)."""
        linear = {e.n: e for m in self.methods if m != "tree-alime" for e in self.entries[m]}
        tree = {e.n: e for m in self.methods if m == "tree-alime" for e in self.entries[m]}
        buf = io.StringIO()
        buf.write("n,linear_value,tree_value\n")
        for n in sorted(set(linear) | set(tree)):
            lv = f"{linear[n].accuracy!r}" if n in linear else ""
            tv = f"{tree[n].accuracy!r}" if n in tree else ""
            buf.write(f"{n},{lv},{tv}\n")
        return buf.getvalue()


def fidelity_sweep(
    cfg: ExplainerConfig,
    test_matrix: np.ndarray,
    n_grid: list[int],
    base_seed: int = 0,
    methods: tuple[str, ...] = ("alime", "tree-alime"),
    dataset_id: str = "",
    threshold: float = 0.5,
) -> FidelityReport:
    """Fidelity for every n in the grid, for each requested method, sharing
    the already-trained models held by ``cfg``."""
    if not n_grid:
        raise InvalidArgument("n_grid must be non-empty")
    for n in n_grid:
        if n > cfg.perturbation.pool_size:
            raise GridExceedsPool(f"n={n} exceeds pool size {cfg.perturbation.pool_size}")
    entries: dict[str, list[FidelityEntry]] = {}
    for method in methods:
        mcfg = replace(cfg, method=method)
        entries[method] = [
            local_fidelity(mcfg, test_matrix, n, threshold=threshold, base_seed=base_seed)
            for n in n_grid
        ]
    return FidelityReport(dataset_id=dataset_id, methods=methods, entries=entries, base_seed=base_seed)


@dataclass
class StabilitySweep:
    dataset_id: str
    instance_id: str | None
    n_grid: list[int]
    reports: dict  # method -> list[StabilityReport]
    base_seed: int

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "instance_id": self.instance_id,
            "n_grid": list(self.n_grid),
            "base_seed": self.base_seed,
            "reports": {m: [r.to_dict() for r in rs] for m, rs in self.reports.items()},
        }

    def to_csv(self) -> str:
        by_method_n = {
            m: {r.n: r for r in rs} for m, rs in self.reports.items()
        }
        linear = next((by_method_n[m] for m in by_method_n if m != "tree-alime"), {})
        tree = by_method_n.get("tree-alime", {})
        buf = io.StringIO()
        buf.write("n,linear_stability,tree_stability,linear_mean_features,tree_mean_features\n")
        for n in self.n_grid:
            ls = f"{linear[n].score!r}" if n in linear else ""
            ts = f"{tree[n].score!r}" if n in tree else ""
            lf = f"{linear[n].mean_feature_count!r}" if n in linear else ""
            tf = f"{tree[n].mean_feature_count!r}" if n in tree else ""
            buf.write(f"{n},{ls},{ts},{lf},{tf}\n")
        return buf.getvalue()


def stability_sweep(
    cfg: ExplainerConfig,
    x_scaled: np.ndarray,
    n_grid: list[int],
    runs: int = 20,
    base_seed: int = 0,
    methods: tuple[str, ...] = ("alime", "tree-alime"),
    dataset_id: str = "",
    instance_id: str | None = None,
    quartile_fraction: float = 0.25,
    quartile_base: str = "all",
) -> StabilitySweep:
    """Stability of one fixed instance for every n in the grid."""
    if not n_grid:
        raise InvalidArgument("n_grid must be non-empty")
    for n in n_grid:
        if n > cfg.perturbation.pool_size:
            raise GridExceedsPool(f"n={n} exceeds pool size {cfg.perturbation.pool_size}")
    reports: dict[str, list[StabilityReport]] = {}
    for method in methods:
        mcfg = replace(cfg, method=method)
        reports[method] = [
            stability_experiment(
                mcfg,
                x_scaled,
                runs=runs,
                base_seed=base_seed,
                instance_id=instance_id,
                quartile_fraction=quartile_fraction,
                quartile_base=quartile_base,
                n_override=n,
            )
            for n in n_grid
        ]
    return StabilitySweep(
        dataset_id=dataset_id,
        instance_id=instance_id,
        n_grid=list(n_grid),
        reports=reports,
        base_seed=base_seed,
    )
