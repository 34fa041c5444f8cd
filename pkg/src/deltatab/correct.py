"""Gradient-driven error correction on top of a fitted forest.

A refined rule partitions the training rows; each partition gets its own
regressor mapping features to the negative loss gradient at the forest's
output. The corrected prediction adds ``eta`` times the averaged regressor
outputs to the forest output.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Protocol, Sequence

import numpy as np

from .cart import REGRESSION, CartTree, TreeParams, build_tree
from .data import Dataset, evaluate
from .forest import Forest
from .ruledsl import RefinedRule, parse_rule, serialize_rule

SQUARED_ERROR = "squared_error"
ONE_HOT_SQUARED = "one_hot_squared"
LOSS_KINDS = (SQUARED_ERROR, ONE_HOT_SQUARED)
DEFAULT_ETA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))
FORMAT = "deltatab.delta-model/1"

TREE, CONSTANT, FALLBACK = "tree", "constant", "fallback"


def default_loss(task: str) -> str:
    return SQUARED_ERROR if task == "regression" else ONE_HOT_SQUARED


def default_net_params() -> TreeParams:
    return TreeParams(max_depth=3, min_leaf=20, max_leaf_nodes=8, max_features=None)


def _as_matrix(outputs) -> np.ndarray:
    F = np.asarray(outputs, dtype=np.float64)
    return F[:, None] if F.ndim == 1 else F


def _onehot(labels, c: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.dtype.kind == "f" and not np.all(y == np.round(y)):
        raise ValueError("class labels must be integers")
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= c):
        raise ValueError(f"class label out of range [0, {c})")
    out = np.zeros((len(y), c))
    out[np.arange(len(y)), y] = 1.0
    return out


def loss_value(outputs, labels, loss: str) -> np.ndarray:
    """Per-row loss: ½(F−y)² or ½‖p − onehot(y)‖²."""
    F = _as_matrix(outputs)
    if loss == SQUARED_ERROR:
        r = F - np.asarray(labels, dtype=np.float64).reshape(len(F), -1)
    elif loss == ONE_HOT_SQUARED:
        r = F - _onehot(labels, F.shape[1])
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return 0.5 * (r * r).sum(axis=1)


def negative_gradients(outputs, labels, loss: str) -> np.ndarray:
    """−∂loss/∂F for every row, shaped (N, m)."""
    F = _as_matrix(outputs)
    if not np.all(np.isfinite(F)):
        raise ValueError("model outputs must be finite")
    if len(F) != len(labels):
        raise ValueError("outputs and labels differ in length")
    if loss == SQUARED_ERROR:
        return np.asarray(labels, dtype=np.float64).reshape(len(F), -1) - F
    if loss == ONE_HOT_SQUARED:
        return _onehot(labels, F.shape[1]) - F
    raise ValueError(f"unknown loss {loss!r}")


@dataclass(frozen=True)
class GradientSet:
    features: np.ndarray
    targets: np.ndarray  # (N, m)

    def __post_init__(self):
        if len(self.features) != len(self.targets):
            raise ValueError("features and targets differ in length")
        if len(self.targets) == 0:
            raise ValueError("gradient set is empty")
        if not np.all(np.isfinite(self.targets)):
            raise ValueError("gradient targets must be finite")

    @property
    def m(self) -> int:
        return self.targets.shape[1]

    @classmethod
    def from_model(cls, base, data: Dataset, loss: str | None = None) -> "GradientSet":
        loss = loss or default_loss(data.task)
        return cls(data.features, negative_gradients(base.predict(data.features), data.labels, loss))


class Predictor(Protocol):
    def predict(self, X) -> np.ndarray: ...


@dataclass(frozen=True)
class GradientNet:
    rule: RefinedRule
    regressors: tuple[CartTree, ...]  # one per leaf ordinal
    status: tuple[str, ...]  # tree | constant | fallback, per leaf
    fallback: np.ndarray

    @property
    def m(self) -> int:
        return len(self.fallback)

    @property
    def empty_leaves(self) -> list[int]:
        return [i for i, s in enumerate(self.status) if s == FALLBACK]

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        leaf = self.rule.assign(X)
        out = np.empty((len(X), self.m))
        for l in np.unique(leaf):
            rows = leaf == l
            out[rows] = self.regressors[l].predict(X[rows])
        return out

    def to_dict(self) -> dict:
        return {
            "rule": json.loads(serialize_rule(self.rule)),
            "status": list(self.status),
            "fallback": [float(v) for v in self.fallback],
            "regressors": [r.to_dict() for r in self.regressors],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GradientNet":
        return cls(
            parse_rule(json.dumps(d["rule"])),
            tuple(CartTree.from_dict(r) for r in d["regressors"]),
            tuple(d["status"]),
            np.asarray(d["fallback"], dtype=np.float64),
        )


def _constant_tree(value: np.ndarray, n: int, d: int, params: TreeParams) -> CartTree:
    root = {"value": [float(v) for v in value], "n_samples": int(n)}
    return CartTree.from_dict({"kind": REGRESSION, "n_features": d, "params": params.to_dict(), "root": root})


def fit_gradient_net(
    gradset: GradientSet,
    rule: RefinedRule,
    params: TreeParams | None = None,
    seed: int = 0,
    n_jobs: int = 1,
    backend: str | None = None,
) -> GradientNet:
    """One multi-output regression tree per leaf of ``rule``, each fit on that leaf's rows only."""
    params = params or default_net_params()
    X, G = np.asarray(gradset.features, dtype=np.float64), gradset.targets
    d = X.shape[1]
    leaf = rule.assign(X)
    fallback = G.mean(axis=0)
    seeds = np.random.SeedSequence(seed).spawn(rule.n_leaves)

    def fit_leaf(l: int):
        rows = np.flatnonzero(leaf == l)
        if len(rows) == 0:
            return _constant_tree(fallback, 0, d, params), FALLBACK
        if len(rows) < params.min_leaf:
            return _constant_tree(G[rows].mean(axis=0), len(rows), d, params), CONSTANT
        tree = build_tree(X[rows], G[rows], REGRESSION, params, rng=np.random.default_rng(seeds[l]), backend=backend)
        return tree, TREE

    if n_jobs == 1:
        fitted = [fit_leaf(l) for l in range(rule.n_leaves)]
    else:
        with ThreadPoolExecutor(max_workers=None if n_jobs < 1 else n_jobs) as pool:
            fitted = list(pool.map(fit_leaf, range(rule.n_leaves)))
    return GradientNet(rule, tuple(t for t, _ in fitted), tuple(s for _, s in fitted), fallback)


def correction_vector(net: Predictor, x, eta: float) -> np.ndarray:
    """eta times the net output for a single row."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    return eta * net.predict(x[None, :])[0]


def apply_correction(F, delta, task: str) -> np.ndarray:
    """F + delta, with class rows clipped to [0, 1] and renormalized."""
    out = _as_matrix(F) + delta
    if task == "regression":
        return out[:, 0]
    out = np.clip(out, 0.0, 1.0)
    s = out.sum(axis=1, keepdims=True)
    flat = s[:, 0] <= 0
    if flat.any():
        out[flat] = 1.0
        s[flat] = out.shape[1]
    return out / s


@dataclass(frozen=True)
class DeltaModel:
    base: Forest  # anything with .predict(X); only a Forest can be persisted
    nets: tuple  # GradientNet (or other predictors), one per refined rule
    eta: float
    task: str
    loss: str

    def __post_init__(self):
        if not self.nets:
            raise ValueError("need at least one gradient net")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")

    @property
    def rules(self) -> list[RefinedRule]:
        return [n.rule for n in self.nets]

    def mean_direction(self, X) -> np.ndarray:
        """Average net output (before eta scaling), shaped (N, m)."""
        total = None
        for net in self.nets:
            p = net.predict(X)
            total = p.copy() if total is None else total + p
        return total / len(self.nets)

    def predict_base(self, X) -> np.ndarray:
        return self.base.predict(X)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return apply_correction(self.predict_base(X), self.eta * self.mean_direction(X), self.task)

    def with_eta(self, eta: float) -> "DeltaModel":
        return replace(self, eta=eta)

    def to_dict(self, schema_hash: str | None = None) -> dict:
        if not isinstance(self.base, Forest):
            raise TypeError("only forest-based models can be persisted")
        return {
            "format": FORMAT,
            "task": self.task,
            "loss": self.loss,
            "eta": self.eta,
            "schema_hash": schema_hash,
            "forest": self.base.to_dict(schema_hash),
            "nets": [n.to_dict() for n in self.nets],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DeltaModel":
        if d.get("format") != FORMAT:
            raise ValueError(f"unsupported model format {d.get('format')!r}")
        return cls(Forest.from_dict(d["forest"]), tuple(GradientNet.from_dict(n) for n in d["nets"]), d["eta"], d["task"], d["loss"])


def predict_corrected(model: DeltaModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    out = model.predict(x[None, :] if single else x)
    return out[0] if single else out


def ensemble_over_rules(base, nets: Sequence, eta: float, task: str, loss: str | None = None) -> DeltaModel:
    dims = {n.m for n in nets if hasattr(n, "m")}
    if len(dims) > 1:
        raise ValueError(f"gradient nets disagree on output dimension: {sorted(dims)}")
    d_sizes = {n.regressors[0].n_features for n in nets if isinstance(n, GradientNet)}
    if len(d_sizes) > 1:
        raise ValueError(f"gradient nets disagree on feature count: {sorted(d_sizes)}")
    return DeltaModel(base, tuple(nets), eta, task, loss or default_loss(task))


def _score(pred, val: Dataset) -> float:
    """Higher is better: accuracy, or negative NRMSE."""
    r = evaluate(pred, val.labels, val.task)
    return r.value if r.name == "accuracy" else -r.value


def select_eta(
    build: Callable[[float], Predictor],
    val: Dataset,
    grid: Sequence[float] = DEFAULT_ETA_GRID,
) -> float:
    """Grid value with the best validation metric; ties go to the smaller eta."""
    if val.n == 0:
        raise ValueError("validation set is empty")
    if not grid or any(g <= 0 for g in grid):
        raise ValueError("eta grid must be non-empty and positive")
    best_eta, best = None, -np.inf
    for eta in sorted(grid):
        s = _score(build(eta).predict(val.features), val)
        if s > best:
            best_eta, best = eta, s
    return float(best_eta)


def select_eta_fast(base_val: np.ndarray, direction_val: np.ndarray, val: Dataset, grid: Sequence[float] = DEFAULT_ETA_GRID) -> float:
    """select_eta with base outputs and mean net directions precomputed on ``val``."""

    class _Fixed:
        def __init__(self, eta):
            self.eta = eta

        def predict(self, X):
            return apply_correction(base_val, self.eta * direction_val, val.task)

    return select_eta(_Fixed, val, grid)


def fit_delta_model(
    base,
    train: Dataset,
    val: Dataset,
    rules: Sequence[RefinedRule],
    params: TreeParams | None = None,
    grid: Sequence[float] = DEFAULT_ETA_GRID,
    loss: str | None = None,
    seed: int = 0,
    n_jobs: int = 1,
    backend: str | None = None,
) -> DeltaModel:
    """Gradient set from ``base`` on train, one net per rule, eta chosen on val."""
    loss = loss or default_loss(train.task)
    gradset = GradientSet.from_model(base, train, loss)
    seeds = np.random.SeedSequence(seed).spawn(len(rules))

    def fit(i):
        return fit_gradient_net(gradset, rules[i], params, seed=int(seeds[i].generate_state(1)[0]), backend=backend)

    if n_jobs == 1:
        nets = [fit(i) for i in range(len(rules))]
    else:
        with ThreadPoolExecutor(max_workers=None if n_jobs < 1 else n_jobs) as pool:
            nets = list(pool.map(fit, range(len(rules))))
    model = ensemble_over_rules(base, nets, 1.0, train.task, loss)
    eta = select_eta_fast(model.predict_base(val.features), model.mean_direction(val.features), val, grid)
    return model.with_eta(eta)
