"""Partition coherence and component ablations."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .cart import CLASSIFICATION, CartTree, TreeParams, fit_cart, task_kind
from .correct import default_loss, fit_delta_model
from .data import Dataset, evaluate
from .forest import Forest
from .pipeline import PipelineConfig, prepare_splits, run_pipeline
from .ruledsl import RefinedRule, rule_from_tree


# ---- intra-node distance ---------------------------------------------------


def leaf_assignment(partition: RefinedRule | CartTree, X: np.ndarray) -> np.ndarray:
    if isinstance(partition, RefinedRule):
        return partition.assign(X)
    if isinstance(partition, CartTree):
        return partition.apply(X)
    raise TypeError(f"cannot partition with {type(partition).__name__}")


def mean_pairwise_distance(X: np.ndarray, chunk_elems: int = 4_000_000) -> float:
    """Mean Euclidean distance over all unordered pairs of rows (needs >= 2 rows)."""
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least two rows")
    step = max(1, chunk_elems // max(1, n * d))
    total = 0.0
    for i in range(0, n, step):
        block = X[i : i + step]
        diff = block[:, None, :] - X[None, :, :]
        total += float(np.sqrt((diff * diff).sum(axis=2)).sum())
    # every unordered pair was counted twice, the zero diagonal once
    return total / (n * (n - 1))


def intra_node_distance(partition: RefinedRule | CartTree, data: Dataset) -> float:
    """Row-weighted mean of per-leaf mean pairwise distances; leaves with one row are skipped."""
    if data.n == 0:
        raise ValueError("data is empty")
    X = np.asarray(data.features, dtype=np.float64)
    leaf = leaf_assignment(partition, X)
    num = den = 0.0
    for l in np.unique(leaf):
        rows = X[leaf == l]
        if len(rows) < 2:
            continue
        num += len(rows) * mean_pairwise_distance(rows)
        den += len(rows)
    if den == 0:
        raise ValueError("every leaf holds a single row; distance undefined")
    return num / den


# ---- rule-as-predictor building blocks -------------------------------------


@dataclass(frozen=True)
class RuleTree:
    """A refined rule used directly as a tree: each leaf predicts its training rows' label summary."""

    rule: RefinedRule
    values: np.ndarray  # (n_leaves, m)
    kind: str

    def predict(self, X) -> np.ndarray:
        out = self.values[self.rule.assign(X)]
        return out if self.kind == CLASSIFICATION else out[:, 0]


def fit_rule_tree(rule: RefinedRule, train: Dataset) -> RuleTree:
    kind = task_kind(train.task)
    if kind == CLASSIFICATION:
        Y = np.zeros((train.n, train.n_classes))
        Y[np.arange(train.n), train.labels.astype(np.int64)] = 1.0
    else:
        Y = np.asarray(train.labels, dtype=np.float64)[:, None]
    leaf = rule.assign(train.features)
    overall = Y.mean(axis=0)
    values = np.tile(overall, (rule.n_leaves, 1))
    for l in np.unique(leaf):
        values[l] = Y[leaf == l].mean(axis=0)
    return RuleTree(rule, values, kind)


@dataclass(frozen=True)
class MeanOf:
    """Average of several predictors' outputs, with optional integer weights."""

    members: tuple
    weights: tuple[float, ...] | None = None

    def predict(self, X) -> np.ndarray:
        w = self.weights or (1.0,) * len(self.members)
        total = sum(wi * np.asarray(m.predict(X), dtype=np.float64) for wi, m in zip(w, self.members))
        return total / sum(w)


def append_to_forest(forest: Forest, rule_trees: Sequence[RuleTree]) -> MeanOf:
    """The forest with extra equally-weighted trees: (K*F + sum C_q) / (K + Q)."""
    return MeanOf((forest, *rule_trees), (float(forest.K),) + (1.0,) * len(rule_trees))


# ---- ablation variants -----------------------------------------------------


@dataclass(frozen=True)
class AblationVariant:
    id: str
    uses_refinement: bool
    uses_forest_output: bool
    uses_error_correction: bool


VARIANTS = {
    "A": AblationVariant("A", False, False, False),
    "B": AblationVariant("B", False, True, False),
    "C": AblationVariant("C", True, False, False),
    "D": AblationVariant("D", True, True, False),
    "E": AblationVariant("E", True, True, True),
    # flagged as not using the forest output, though its corrections are still added to F(x)
    "F": AblationVariant("F", False, False, True),
    "full": AblationVariant("full", True, True, True),
}


def get_variant(vid: str) -> AblationVariant:
    try:
        return VARIANTS[vid]
    except KeyError:
        raise ValueError(f"unknown variant {vid!r}; choose from {sorted(VARIANTS)}") from None


@dataclass(frozen=True)
class AblationConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    cart_params: TreeParams = field(default_factory=TreeParams)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    ratios: tuple[float, float, float] = (0.64, 0.16, 0.2)


@dataclass(frozen=True)
class AblationRow:
    variant: str
    dataset: str
    metric: str
    value: float
    seed: int


def variant_models(variants: Iterable[str], train: Dataset, val: Dataset, cfg: PipelineConfig, cart_params: TreeParams, client=None) -> dict:
    """Fitted predictor for every requested variant on one split."""
    wanted = [get_variant(v).id for v in variants]
    out: dict = {}
    if "A" in wanted:
        out["A"] = fit_cart(train, cart_params, seed=cfg.seed)
    if set(wanted) <= {"A"}:
        return out
    res = run_pipeline(train, val, cfg, client=client)
    forest = res.forest
    loss = cfg.loss or default_loss(train.task)
    out["B"] = forest
    out["full"] = res.model
    rule_trees = [fit_rule_tree(r, train) for r in res.refinement.rules]
    out["C"] = MeanOf(tuple(rule_trees))
    out["D"] = append_to_forest(forest, rule_trees)
    if "E" in wanted:
        out["E"] = fit_delta_model(out["D"], train, val, res.refinement.rules, cfg.net_params, cfg.eta_grid, loss, cfg.seed)
    if "F" in wanted:
        n = min(cfg.refiner.n_queries, forest.K)
        forest_rules = [rule_from_tree(forest.trees[i]) for i in res.ranked.tree_indices[:n]]
        out["F"] = fit_delta_model(forest, train, val, forest_rules, cfg.net_params, cfg.eta_grid, loss, cfg.seed)
    return {k: out[k] for k in wanted}


def predict_variant(model, X, task: str) -> np.ndarray:
    if isinstance(model, CartTree):
        p = model.predict(X)
        return p if task_kind(task) == CLASSIFICATION else p[:, 0]
    if isinstance(model, (MeanOf, RuleTree)) and task_kind(task) == CLASSIFICATION:
        p = model.predict(X)
        return p / p.sum(axis=1, keepdims=True)
    return model.predict(X)


def run_ablation(
    variants: Sequence[str],
    datasets: Sequence[tuple[str, Dataset]],
    config: AblationConfig = AblationConfig(),
    client=None,
) -> list[AblationRow]:
    """Test metric of every (variant, dataset, seed) cell; datasets are raw and split per seed."""
    rows: list[AblationRow] = []
    for name, raw in datasets:
        for seed in config.seeds:
            train, val, test = prepare_splits(raw, config.ratios, seed)
            cfg = replace(config.pipeline, seed=seed, refiner=replace(config.pipeline.refiner, seed=seed))
            models = variant_models(variants, train, val, cfg, config.cart_params, client)
            for vid in variants:
                rep = evaluate(predict_variant(models[vid], test.features, test.task), test.labels, test.task)
                rows.append(AblationRow(vid, name, rep.name, rep.value, seed))
    return rows


def ablation_csv(rows: Sequence[AblationRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "dataset", "metric", "value", "seed"])
    for r in rows:
        w.writerow([r.variant, r.dataset, r.metric, f"{r.value:.6f}", r.seed])
    return buf.getvalue()


def summarize(rows: Sequence[AblationRow]) -> dict[tuple[str, str], tuple[float, float, int]]:
    """(variant, dataset) -> (mean, std, n_seeds)."""
    groups: dict[tuple[str, str], list[float]] = {}
    for r in rows:
        groups.setdefault((r.variant, r.dataset), []).append(r.value)
    return {k: (float(np.mean(v)), float(np.std(v)), len(v)) for k, v in groups.items()}


def ablation_table(rows: Sequence[AblationRow]) -> str:
    summary = summarize(rows)
    variants = list(dict.fromkeys(r.variant for r in rows))
    datasets = list(dict.fromkeys(r.dataset for r in rows))
    metric = {r.dataset: r.metric for r in rows}
    head = ["variant", "RR", "RF", "EC"] + [f"{d} ({metric[d]})" for d in datasets]
    body = []
    for v in variants:
        flags = VARIANTS[v]
        cells = [v] + ["x" if f else "-" for f in (flags.uses_refinement, flags.uses_forest_output, flags.uses_error_correction)]
        for d in datasets:
            m, s, _ = summary[(v, d)]
            cells.append(f"{m:.4f} ± {s:.4f}")
        body.append(cells)
    widths = [max(len(str(r[i])) for r in [head] + body) for i in range(len(head))]
    fmt = lambda r: "  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()
    return "\n".join([fmt(head), fmt(["-" * w for w in widths])] + [fmt(r) for r in body]) + "\n"
