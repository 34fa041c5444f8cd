"""Prediction-free partitioning rules: parsing, validation, serialization, routing.

Wire format (JSON)::

    internal: {"feature": int, "threshold": number, "operator": "<=", "left": node, "right": node}
    leaf:     {"id": "leaf_<n>"}
"""
from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np

from . import kernels
from .cart import CartTree

OPERATOR = "<="
DEFAULT_LEAF_LIMIT = 30
_PREDICTION_KEYS = {"value", "class", "prediction", "label", "predict", "output"}


class RuleParseError(ValueError):
    pass


class RuleFormatError(RuleParseError):
    """No balanced object could be found or decoded."""


class RuleValidationError(RuleParseError):
    """Duplicate leaf ids, unknown operators, bad field types."""


class RuleStructureError(RuleParseError):
    """Missing children or nodes that are neither split nor leaf."""


@dataclass(frozen=True)
class LeafRef:
    id: str
    ordinal: int


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "Node"
    right: "Node"
    operator: str = OPERATOR


Node = Union[Split, LeafRef]


@dataclass(frozen=True)
class RefinedRule:
    root: Node

    @cached_property
    def leaves(self) -> tuple[LeafRef, ...]:
        out: list[LeafRef] = []

        def walk(n):
            if isinstance(n, LeafRef):
                out.append(n)
            else:
                walk(n.left)
                walk(n.right)

        walk(self.root)
        return tuple(out)

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @cached_property
    def features_used(self) -> frozenset[int]:
        out = set()
        stack = [self.root]
        while stack:
            n = stack.pop()
            if isinstance(n, Split):
                out.add(n.feature)
                stack += [n.left, n.right]
        return frozenset(out)

    @cached_property
    def _arrays(self):
        feature, threshold, left, right, ordinal = [], [], [], [], []

        def add(n) -> int:
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            ordinal.append(-1)
            if isinstance(n, LeafRef):
                ordinal[i] = n.ordinal
            else:
                feature[i], threshold[i] = n.feature, n.threshold
                li = add(n.left)
                ri = add(n.right)
                left[i], right[i] = li, ri
            return i

        add(self.root)
        return (
            np.asarray(feature, dtype=np.int64),
            np.asarray(threshold, dtype=np.float64),
            np.asarray(left, dtype=np.int64),
            np.asarray(right, dtype=np.int64),
            np.asarray(ordinal, dtype=np.int64),
        )

    def assign(self, X, backend: str | None = None) -> np.ndarray:
        """Leaf ordinal for every row of X."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        feature, threshold, left, right, ordinal = self._arrays
        if self.features_used and X.shape[1] <= max(self.features_used):
            raise ValueError(f"rule uses feature {max(self.features_used)} but rows have {X.shape[1]} columns")
        if len(feature) == 1:
            return np.zeros(X.shape[0], dtype=np.int64)
        return ordinal[kernels.apply_tree(X, feature, threshold, left, right, backend=backend)]


def assign_leaf(rule: RefinedRule, x) -> int:
    return int(rule.assign(np.asarray(x, dtype=np.float64)[None, :])[0])


# ---- parsing ---------------------------------------------------------------

_FENCE = re.compile(r"```[a-zA-Z]*")
_UNQUOTED_KEY = re.compile(r'([{,]\s*)([A-Za-z_][A-Za-z0-9_]*)\s*:')
_TRAILING_COMMA = re.compile(r",(\s*[}\]])")


def _balanced_objects(text: str):
    """Yield every outermost ``{...}`` span, skipping braces inside quoted strings."""
    i = 0
    n = len(text)
    while i < n:
        if text[i] != "{":
            i += 1
            continue
        depth = 0
        quote = None
        j = i
        while j < n:
            ch = text[j]
            if quote:
                if ch == "\\":
                    j += 1
                elif ch == quote:
                    quote = None
            elif ch in "\"'":
                quote = ch
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    yield text[i : j + 1]
                    break
            j += 1
        else:
            return
        i = j + 1


def _normalize(obj_text: str) -> str:
    s = obj_text
    if "'" in s and '"' not in s:
        s = s.replace("'", '"')
    else:
        s = re.sub(r"'([^'\"]*)'", r'"\1"', s)
    s = _UNQUOTED_KEY.sub(r'\1"\2":', s)
    prev = None
    while prev != s:
        prev = s
        s = _TRAILING_COMMA.sub(r"\1", s)
    return s


def _decode(obj_text: str):
    for candidate in (obj_text, _normalize(obj_text)):
        try:
            return json.loads(candidate)
        except json.JSONDecodeError:
            continue
    return None


def _as_feature(v) -> int:
    if isinstance(v, bool):
        raise RuleValidationError(f"feature must be an integer, got {v!r}")
    if isinstance(v, int):
        return v
    if isinstance(v, float) and v.is_integer():
        return int(v)
    if isinstance(v, str):
        m = re.fullmatch(r"(?:feature_)?(\d+)", v.strip())
        if m:
            return int(m.group(1))
    raise RuleValidationError(f"feature must be an integer, got {v!r}")


def _as_threshold(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise RuleValidationError(f"threshold must be a number, got {v!r}")
    try:
        return float(v)
    except ValueError:
        raise RuleValidationError(f"threshold must be a number, got {v!r}") from None


def rule_from_obj(obj) -> RefinedRule:
    """Build a rule from decoded JSON, assigning ordinals in first-appearance order."""
    seen: dict[str, int] = {}
    dropped: set[str] = set()

    def build(node, path: str) -> Node:
        if not isinstance(node, dict):
            raise RuleStructureError(f"{path}: expected an object, got {type(node).__name__}")
        is_split = any(k in node for k in ("feature", "left", "right", "threshold"))
        if not is_split:
            if "id" not in node:
                raise RuleStructureError(f"{path}: node is neither a split nor a leaf")
            leaf_id = str(node["id"])
            if leaf_id in seen:
                raise RuleValidationError(f"{path}: duplicate leaf id {leaf_id!r}")
            dropped.update(set(node) & _PREDICTION_KEYS)
            seen[leaf_id] = len(seen)
            return LeafRef(leaf_id, seen[leaf_id])
        for key in ("left", "right"):
            if key not in node:
                raise RuleStructureError(f"{path}: missing {key!r} child")
        for key in ("feature", "threshold"):
            if key not in node:
                raise RuleStructureError(f"{path}: missing {key!r}")
        op = node.get("operator", None)
        if op != OPERATOR:
            raise RuleValidationError(f"{path}: unsupported operator {op!r}; only '<=' is allowed")
        feature = _as_feature(node["feature"])
        threshold = _as_threshold(node["threshold"])
        left = build(node["left"], path + ".left")
        right = build(node["right"], path + ".right")
        return Split(feature, threshold, left, right)

    rule = RefinedRule(build(obj, "root"))
    if dropped:
        warnings.warn(f"ignored prediction keys in rule leaves: {sorted(dropped)}", stacklevel=3)
    return rule


def parse_rule(text: str) -> RefinedRule:
    """Extract and parse the first well-formed rule object in a refiner response."""
    cleaned = _FENCE.sub("", text)
    last_error: RuleParseError | None = None
    for span in _balanced_objects(cleaned):
        obj = _decode(span)
        if obj is None:
            continue
        if not isinstance(obj, dict) or not ({"feature", "id"} & set(obj)):
            continue
        try:
            return rule_from_obj(obj)
        except RuleParseError as exc:
            # a structurally broken rule object is reported, not skipped past
            last_error = exc
            break
    if last_error is not None:
        raise last_error
    raise RuleFormatError("no well-formed rule object found in the response")


# ---- validation and serialization -----------------------------------------


def validate_rule(rule: RefinedRule, d: int, leaf_limit: int = DEFAULT_LEAF_LIMIT) -> list[str]:
    """All violations of the rule against ``d`` features and the leaf limit (empty if valid)."""
    problems: list[str] = []
    ids: set[str] = set()

    def walk(n, path):
        if isinstance(n, LeafRef):
            if n.id in ids:
                problems.append(f"{path}: duplicate leaf id {n.id!r}")
            ids.add(n.id)
            return
        if n.operator != OPERATOR:
            problems.append(f"{path}: unsupported operator {n.operator!r}")
        if not 0 <= n.feature < d:
            problems.append(f"{path}: feature {n.feature} out of range [0, {d})")
        if not math.isfinite(n.threshold):
            problems.append(f"{path}: non-finite threshold {n.threshold!r}")
        walk(n.left, path + ".left")
        walk(n.right, path + ".right")

    walk(rule.root, "root")
    if rule.n_leaves > leaf_limit:
        problems.append(f"{rule.n_leaves} leaves exceeds the limit of {leaf_limit}")
    return problems


def rule_to_obj(rule: RefinedRule) -> dict:
    def node(n):
        if isinstance(n, LeafRef):
            return {"id": n.id}
        return {"feature": n.feature, "threshold": n.threshold, "operator": n.operator, "left": node(n.left), "right": node(n.right)}

    return node(rule.root)


def serialize_rule(rule: RefinedRule) -> str:
    """Canonical compact JSON; structurally equal rules give identical bytes."""
    return json.dumps(rule_to_obj(rule), separators=(",", ":"), allow_nan=False)


def rule_from_tree(tree: CartTree) -> RefinedRule:
    """Strip a fitted tree's predictions, numbering leaves leaf_1.. depth-first."""
    counter = 0

    def node(i: int) -> Node:
        nonlocal counter
        if tree.left[i] < 0:
            counter += 1
            return LeafRef(f"leaf_{counter}", counter - 1)
        return Split(int(tree.feature[i]), float(tree.threshold[i]), node(int(tree.left[i])), node(int(tree.right[i])))

    return RefinedRule(node(0))
