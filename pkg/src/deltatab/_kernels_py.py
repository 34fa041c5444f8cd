"""Pure-numpy split search and routing.

Arithmetic mirrors ``_kernels.pyx`` operation for operation so both backends
return bit-identical scores (integer class counts; sequential float sums).
"""
from __future__ import annotations

import numpy as np


def _boundaries(xs: np.ndarray, min_leaf: int) -> np.ndarray:
    n = len(xs)
    n_left = np.arange(1, n)
    ok = (xs[:-1] != xs[1:]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
    return np.flatnonzero(ok)


def best_splits_classification(X, y, n_classes, features, min_leaf):
    """Best (threshold, score) per candidate feature.

    ``score = sum_c nL_c^2 / nL + sum_c nR_c^2 / nR``; maximising it maximises
    the Gini impurity decrease. Features without a valid split get ``-inf``.
    """
    n = X.shape[0]
    k = len(features)
    thresholds = np.zeros(k)
    scores = np.full(k, -np.inf)
    if n < 2 * min_leaf or n < 2:
        return thresholds, scores
    onehot = np.zeros((n, n_classes), dtype=np.int64)
    for f_i, f in enumerate(features):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cand = _boundaries(xs, min_leaf)
        if len(cand) == 0:
            continue
        onehot[:] = 0
        onehot[np.arange(n), y[order]] = 1
        left = np.cumsum(onehot, axis=0)
        total = left[-1]
        sq_l = np.zeros(n, dtype=np.int64)
        sq_r = np.zeros(n, dtype=np.int64)
        for c in range(n_classes):
            sq_l += left[:, c] * left[:, c]
            r = total[c] - left[:, c]
            sq_r += r * r
        n_l = np.arange(1, n + 1, dtype=np.float64)
        n_r = n - n_l
        s = sq_l[cand].astype(np.float64) / n_l[cand] + sq_r[cand].astype(np.float64) / n_r[cand]
        best = int(np.argmax(s))  # first max -> lowest threshold
        scores[f_i] = s[best]
        i = cand[best]
        thresholds[f_i] = (xs[i] + xs[i + 1]) / 2.0
    return thresholds, scores


def best_splits_regression(X, Y, features, min_leaf):
    """Best (threshold, score) per feature for (multi-output) variance reduction.

    ``score = sum_j SL_j^2 / nL + SR_j^2 / nR`` with ``S`` the target sums.
    """
    n, m = Y.shape
    k = len(features)
    thresholds = np.zeros(k)
    scores = np.full(k, -np.inf)
    if n < 2 * min_leaf or n < 2:
        return thresholds, scores
    n_l = np.arange(1, n + 1, dtype=np.float64)
    n_r = n - n_l
    for f_i, f in enumerate(features):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cand = _boundaries(xs, min_leaf)
        if len(cand) == 0:
            continue
        left = np.cumsum(Y[order], axis=0)
        s = np.zeros(len(cand))
        for j in range(m):
            sl = left[cand, j]
            sr = left[-1, j] - sl
            s = s + (sl * sl / n_l[cand] + sr * sr / n_r[cand])
        best = int(np.argmax(s))
        scores[f_i] = s[best]
        i = cand[best]
        thresholds[f_i] = (xs[i] + xs[i + 1]) / 2.0
    return thresholds, scores


def apply_tree(X, feature, threshold, left, right):
    """Index of the leaf node each row reaches ("<=" goes left)."""
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = np.flatnonzero(left[node] >= 0)
    while len(active):
        cur = node[active]
        go_left = X[active, feature[cur]] <= threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])
        active = active[left[node[active]] >= 0]
    return node
