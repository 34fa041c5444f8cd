"""CART trees for classification and (multi-output) regression.

Trees are stored as flat node arrays; node 0 is the root and ``left == -1``
marks a leaf. Rows go left when ``x[feature] <= threshold``.
"""
from __future__ import annotations

import heapq
import math
import re
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from . import kernels
from .data import Dataset

CLASSIFICATION = "classification"
REGRESSION = "regression"


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 8
    min_leaf: int = 2
    max_leaf_nodes: int = 32
    # None -> all features; "sqrt" / "third" -> per-split subsampling; int -> fixed count
    max_features: int | str | None = None

    def n_candidate_features(self, d: int) -> int:
        mf = self.max_features
        if mf is None:
            return d
        if mf == "sqrt":
            return max(1, int(math.sqrt(d)))
        if mf == "third":
            return max(1, d // 3)
        return max(1, min(d, int(mf)))

    def to_dict(self) -> dict:
        return asdict(self)


def task_kind(task: str) -> str:
    return REGRESSION if task == "regression" else CLASSIFICATION


@dataclass(frozen=True)
class CartTree:
    feature: np.ndarray  # int64, -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # n_nodes x n_outputs: class distribution or target mean
    n_samples: np.ndarray
    kind: str
    n_features: int
    params: TreeParams

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_outputs(self) -> int:
        return self.value.shape[1]

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.left < 0)

    @property
    def n_leaves(self) -> int:
        return int((self.left < 0).sum())

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, dep = stack.pop()
            if self.left[node] < 0:
                best = max(best, dep)
            else:
                stack += [(self.left[node], dep + 1), (self.right[node], dep + 1)]
        return best

    def apply(self, X, backend: str | None = None) -> np.ndarray:
        X = check_features(X, self.n_features)
        return kernels.apply_tree(X, self.feature, self.threshold, self.left, self.right, backend=backend)

    def predict(self, X, backend: str | None = None) -> np.ndarray:
        """Leaf value per row: class distributions, or an (N, m) array of means."""
        return self.value[self.apply(X, backend=backend)]

    def to_dict(self) -> dict:
        def node(i: int) -> dict:
            if self.left[i] < 0:
                return {"value": [float(v) for v in self.value[i]], "n_samples": int(self.n_samples[i])}
            return {
                "feature": int(self.feature[i]),
                "threshold": float(self.threshold[i]),
                "left": node(int(self.left[i])),
                "right": node(int(self.right[i])),
            }

        return {"kind": self.kind, "n_features": self.n_features, "params": self.params.to_dict(), "root": node(0)}

    @classmethod
    def from_dict(cls, d: dict) -> "CartTree":
        b = _Builder(len(d["root"]["value"]) if "value" in d["root"] else None)
        b.add_nested(d["root"])
        return b.finish(d["kind"], d["n_features"], TreeParams(**d["params"]))


def check_features(X, d: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != d:
        raise ValueError(f"expected {d} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    return X


class _Builder:
    def __init__(self, n_outputs: int | None):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []
        self.n_samples: list[int] = []
        self.n_outputs = n_outputs

    def add_leaf(self, value, n: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(np.asarray(value, dtype=np.float64))
        self.n_samples.append(int(n))
        return len(self.feature) - 1

    def make_internal(self, i: int, feature: int, threshold: float, left: int, right: int):
        self.feature[i] = feature
        self.threshold[i] = threshold
        self.left[i] = left
        self.right[i] = right

    def add_nested(self, node: dict) -> int:
        if "feature" not in node:
            return self.add_leaf(node["value"], node.get("n_samples", 0))
        i = self.add_leaf(np.zeros(len(_first_leaf(node)["value"])), 0)
        left = self.add_nested(node["left"])
        right = self.add_nested(node["right"])
        self.make_internal(i, int(node["feature"]), float(node["threshold"]), left, right)
        self.n_samples[i] = self.n_samples[left] + self.n_samples[right]
        n = self.n_samples[i]
        if n > 0:
            self.value[i] = (self.value[left] * self.n_samples[left] + self.value[right] * self.n_samples[right]) / n
        return i

    def finish(self, kind: str, d: int, params: TreeParams) -> CartTree:
        return CartTree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.vstack(self.value),
            n_samples=np.asarray(self.n_samples, dtype=np.int64),
            kind=kind,
            n_features=d,
            params=params,
        )


def _first_leaf(node: dict) -> dict:
    while "feature" in node:
        node = node["left"]
    return node


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    kind: str,
    params: TreeParams = TreeParams(),
    n_classes: int | None = None,
    rng: np.random.Generator | None = None,
    split_jitter: float = 0.0,
    allowed_features: np.ndarray | None = None,
    backend: str | None = None,
) -> CartTree:
    """Grow a tree best-first until the depth, leaf-size, purity or leaf-count limit stops it.

    ``split_jitter > 0`` picks uniformly (with ``rng``) among features whose
    gain is within that relative tolerance of the best one.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    if d == 0:
        raise ValueError("need at least one feature")
    if params.min_leaf < 1 or params.max_leaf_nodes < 1 or params.max_depth < 0:
        raise ValueError(f"invalid tree parameters {params}")
    if kind == CLASSIFICATION:
        y = np.asarray(y, dtype=np.int64)
        if n_classes is None:
            n_classes = int(y.max()) + 1
        if y.min() < 0 or y.max() >= n_classes:
            raise ValueError("class labels out of range")
        targets = y
    else:
        targets = np.asarray(y, dtype=np.float64)
        if targets.ndim == 1:
            targets = targets[:, None]
    features_all = np.arange(d) if allowed_features is None else np.unique(np.asarray(allowed_features, dtype=np.int64))
    k = min(params.n_candidate_features(d), len(features_all))
    subsample = k < len(features_all)
    if (subsample or split_jitter > 0) and rng is None:
        rng = np.random.default_rng(0)

    def leaf_value(idx):
        if kind == CLASSIFICATION:
            return np.bincount(targets[idx], minlength=n_classes) / len(idx)
        return targets[idx].mean(axis=0)

    def is_pure(idx):
        t = targets[idx]
        return bool(np.all(t == t[0]))

    def parent_score(idx):
        if kind == CLASSIFICATION:
            c = np.bincount(targets[idx], minlength=n_classes)
            return float((c * c).sum()) / len(idx)
        s = targets[idx].sum(axis=0)
        return float((s * s).sum()) / len(idx)

    def search(idx, feats):
        Xn = X[idx]
        if kind == CLASSIFICATION:
            return kernels.best_splits_classification(Xn, targets[idx], n_classes, feats, params.min_leaf, backend)
        return kernels.best_splits_regression(Xn, targets[idx], feats, params.min_leaf, backend)

    def find_split(idx, depth):
        if depth >= params.max_depth or len(idx) < 2 * params.min_leaf or is_pure(idx):
            return None
        if subsample:
            feats = np.sort(rng.choice(features_all, size=k, replace=False))
            thr, sc = search(idx, feats)
            if not np.isfinite(sc).any():
                # sampled features cannot split this node; widen to the rest
                rest = np.setdiff1d(features_all, feats)
                feats = rest
                thr, sc = search(idx, feats)
        else:
            feats = features_all
            thr, sc = search(idx, feats)
        if not np.isfinite(sc).any():
            return None
        best = int(np.argmax(sc))
        base = parent_score(idx)
        if split_jitter > 0:
            gains = sc - base
            top = gains[best]
            near = np.flatnonzero(np.isfinite(sc) & (gains >= top - split_jitter * abs(top)))
            best = int(near[rng.integers(len(near))])
        gain = max(float(sc[best] - base), 0.0)
        f, t = int(feats[best]), float(thr[best])
        go_left = X[idx, f] <= t
        return gain, f, t, idx[go_left], idx[~go_left]

    b = _Builder(None)
    root_idx = np.arange(n)
    b.add_leaf(leaf_value(root_idx), n)
    heap: list = []
    counter = 0

    def push(node, idx, depth):
        nonlocal counter
        s = find_split(idx, depth)
        if s is not None:
            heapq.heappush(heap, (-s[0], counter, node, depth, s))
            counter += 1

    push(0, root_idx, 0)
    n_leaves = 1
    while heap and n_leaves < params.max_leaf_nodes:
        _, _, node, depth, (gain, f, t, li, ri) = heapq.heappop(heap)
        lnode = b.add_leaf(leaf_value(li), len(li))
        rnode = b.add_leaf(leaf_value(ri), len(ri))
        b.make_internal(node, f, t, lnode, rnode)
        n_leaves += 1
        push(lnode, li, depth + 1)
        push(rnode, ri, depth + 1)
    return b.finish(kind, d, params)


def fit_cart(train: Dataset, params: TreeParams = TreeParams(), seed: int = 0, backend: str | None = None) -> CartTree:
    if not train.is_preprocessed:
        raise ValueError("fit_cart expects a preprocessed dataset")
    if train.n < params.min_leaf:
        raise ValueError(f"need at least min_leaf={params.min_leaf} rows, got {train.n}")
    kind = task_kind(train.task)
    return build_tree(
        train.features,
        train.labels,
        kind,
        params,
        n_classes=train.n_classes if kind == CLASSIFICATION else None,
        rng=np.random.default_rng(seed),
        backend=backend,
    )


def predict_cart(tree: CartTree, x) -> np.ndarray:
    """Prediction for a single feature vector (class distribution or mean vector)."""
    return tree.predict(np.asarray(x, dtype=np.float64)[None, :] if np.ndim(x) == 1 else x)[0]


# ---- rule text -------------------------------------------------------------

INDENT = "|   "


def _fmt_threshold(t: float) -> str:
    return f"{t:.2f}"


def _leaf_line(tree: CartTree, i: int) -> str:
    if tree.kind == CLASSIFICATION:
        return f"|--- class: {float(np.argmax(tree.value[i]))}"
    vals = tree.value[i]
    if len(vals) == 1:
        return f"|--- value: {vals[0]:.2f}"
    return "|--- value: [" + ", ".join(f"{v:.2f}" for v in vals) + "]"


def extract_rule_text(tree: CartTree) -> str:
    """Depth-first indented rendering of the tree, one line per branch header or leaf."""
    lines: list[str] = []

    def walk(i: int, depth: int):
        pad = INDENT * depth
        if tree.left[i] < 0:
            lines.append(pad + _leaf_line(tree, i))
            return
        f, t = int(tree.feature[i]), _fmt_threshold(float(tree.threshold[i]))
        lines.append(f"{pad}|--- feature_{f} <= {t}")
        walk(int(tree.left[i]), depth + 1)
        lines.append(f"{pad}|--- feature_{f} >  {t}")
        walk(int(tree.right[i]), depth + 1)

    walk(0, 0)
    return "\n".join(lines)


_LINE = re.compile(
    r"^(?P<pad>(?:\|   )*)\|--- (?:feature_(?P<f>\d+) (?P<op><=|> ) (?P<t>-?\d+(?:\.\d+)?)"
    r"|(?P<kind>class|value): (?P<v>.+))$"
)


class RuleTextError(ValueError):
    pass


def parse_rule_text(text: str) -> dict[str, Any]:
    """Parse an indented rule block back into a nested node dict.

    Internal nodes become ``{"feature", "threshold", "left", "right"}``; leaves
    ``{"label": str}``.
    """
    rows = []
    for raw in text.splitlines():
        if not raw.strip():
            continue
        m = _LINE.match(raw.rstrip())
        if not m:
            raise RuleTextError(f"unparseable rule line: {raw!r}")
        rows.append((len(m["pad"]) // len(INDENT), m))
    pos = 0

    def node(depth: int) -> dict:
        nonlocal pos
        if pos >= len(rows):
            raise RuleTextError("rule text ended early")
        dep, m = rows[pos]
        if dep != depth:
            raise RuleTextError(f"line {pos + 1}: expected depth {depth}, got {dep}")
        if m["kind"]:
            pos += 1
            return {"label": m["v"]}
        if m["op"] != "<=":
            raise RuleTextError(f"line {pos + 1}: expected a '<=' branch first")
        f, t = int(m["f"]), float(m["t"])
        pos += 1
        left = node(depth + 1)
        if pos >= len(rows):
            raise RuleTextError("missing '>' branch")
        dep2, m2 = rows[pos]
        if dep2 != depth or m2["op"] != "> " or int(m2["f"]) != f or float(m2["t"]) != t:
            raise RuleTextError(f"line {pos + 1}: '>' branch does not match its '<=' header")
        pos += 1
        right = node(depth + 1)
        return {"feature": f, "threshold": t, "left": left, "right": right}

    root = node(0)
    if pos != len(rows):
        raise RuleTextError("trailing lines after the tree")
    return root


def route_parsed(node: dict, x) -> dict:
    while "feature" in node:
        node = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
    return node
