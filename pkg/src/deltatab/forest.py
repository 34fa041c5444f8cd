"""Bagged CART ensembles and their rule sets."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .cart import CLASSIFICATION, CartTree, TreeParams, build_tree, extract_rule_text, task_kind
from .data import Dataset

SEPARATOR = "----------------------------"


def default_forest_params(task: str, **overrides) -> TreeParams:
    mf = "third" if task == "regression" else "sqrt"
    return replace(TreeParams(max_features=mf), **overrides)


@dataclass(frozen=True)
class Forest:
    trees: tuple[CartTree, ...]
    subsets: tuple[np.ndarray, ...]
    seed: int
    task: str
    params: TreeParams
    n_classes: int | None = None
    bootstrap: bool = True

    @property
    def K(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    @property
    def kind(self) -> str:
        return task_kind(self.task)

    def predict(self, X, backend: str | None = None) -> np.ndarray:
        """Mean of the tree outputs: (N, c) class distributions or (N,) reals."""
        total = None
        for t in self.trees:
            p = t.predict(X, backend=backend)
            total = p.copy() if total is None else total + p
        out = total / self.K
        if self.kind == CLASSIFICATION:
            return out / out.sum(axis=1, keepdims=True)
        return out[:, 0]

    def predict_trees(self, X) -> np.ndarray:
        """Per-tree outputs stacked as (K, N, m)."""
        return np.stack([t.predict(X) for t in self.trees])

    def to_dict(self, schema_hash: str | None = None) -> dict:
        return {
            "K": self.K,
            "seed": self.seed,
            "task": self.task,
            "n_classes": self.n_classes,
            "bootstrap": self.bootstrap,
            "hyperparams": self.params.to_dict(),
            "schema_hash": schema_hash,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        trees = tuple(CartTree.from_dict(t) for t in d["trees"])
        return cls(trees, (), d["seed"], d["task"], TreeParams(**d["hyperparams"]), d["n_classes"], d["bootstrap"])


def tree_seeds(seed: int, K: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(K)


def fit_forest(
    train: Dataset,
    K: int = 100,
    params: TreeParams | None = None,
    seed: int = 0,
    bootstrap: bool = True,
    n_jobs: int = 1,
    backend: str | None = None,
) -> Forest:
    """Fit K trees on bootstrap resamples of ``train``.

    Each tree owns a child seed of ``seed``, so results do not depend on
    ``n_jobs`` or scheduling order.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if not train.is_preprocessed:
        raise ValueError("fit_forest expects a preprocessed dataset")
    params = params or default_forest_params(train.task)
    kind = task_kind(train.task)
    n_classes = train.n_classes if kind == CLASSIFICATION else None
    X, y, n = train.features, train.labels, train.n

    def fit_one(ss: np.random.SeedSequence):
        rng = np.random.default_rng(ss)
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        tree = build_tree(X[idx], y[idx], kind, params, n_classes=n_classes, rng=rng, backend=backend)
        return tree, idx

    seeds = tree_seeds(seed, K)
    if n_jobs == 1:
        fitted = [fit_one(s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=None if n_jobs < 1 else n_jobs) as pool:
            fitted = list(pool.map(fit_one, seeds))
    trees = tuple(t for t, _ in fitted)
    subsets = tuple(i for _, i in fitted)
    return Forest(trees, subsets, seed, train.task, params, n_classes, bootstrap)


def predict_forest(forest: Forest, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    out = forest.predict(x[None, :] if single else x)
    return out[0] if single else out


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[str, ...]
    tree_indices: tuple[int, ...]  # 0-based positions in the source forest

    def __len__(self) -> int:
        return len(self.rules)

    def render(self) -> str:
        parts = [SEPARATOR]
        for k, text in enumerate(self.rules, start=1):
            parts.append(f"Tree {k} rules:")
            parts.append(text)
            parts.append(SEPARATOR)
        return "\n".join(parts)

    def head(self, n: int) -> "RuleSet":
        return RuleSet(self.rules[:n], self.tree_indices[:n])

    def select(self, positions: Sequence[int]) -> "RuleSet":
        return RuleSet(tuple(self.rules[i] for i in positions), tuple(self.tree_indices[i] for i in positions))


def extract_rule_set(forest: Forest, order: Sequence[int] | None = None) -> RuleSet:
    """Rule text of every tree (or of ``order``'s trees, in that order)."""
    order = list(range(forest.K)) if order is None else list(order)
    return RuleSet(tuple(extract_rule_text(forest.trees[i]) for i in order), tuple(order))


def rank_trees(forest: Forest, val: Dataset) -> list[int]:
    """Tree positions sorted best-first by validation accuracy (or lowest MSE); ties by index."""
    scores = []
    for t in forest.trees:
        p = t.predict(val.features)
        if forest.kind == CLASSIFICATION:
            scores.append(-float(np.mean(np.argmax(p, axis=1) == val.labels)))
        else:
            scores.append(float(np.mean((p[:, 0] - val.labels) ** 2)))
    return sorted(range(forest.K), key=lambda i: (scores[i], i))


def parse_rule_set(text: str) -> list[str]:
    """Split a rendered rule set back into its per-tree blocks."""
    blocks: list[str] = []
    current: list[str] | None = None
    for line in text.splitlines():
        s = line.strip()
        if s.startswith("Tree ") and s.endswith("rules:"):
            current = []
            blocks.append("")
            continue
        if s == SEPARATOR:
            if current is not None:
                blocks[-1] = "\n".join(current)
            current = None
            continue
        if current is not None:
            current.append(line)
    if current is not None:
        blocks[-1] = "\n".join(current)
    return blocks
