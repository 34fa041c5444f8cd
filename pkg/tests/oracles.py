"""Independent brute-force oracles shared by tests."""
import numpy as np


def gini_sum(y, c):
    """n * Gini impurity, computed from scratch."""
    if len(y) == 0:
        return 0.0
    p = np.bincount(y, minlength=c) / len(y)
    return len(y) * (1 - (p * p).sum())


def brute_force_best_gain(X, y, c, min_leaf=1):
    """Largest impurity decrease over every feature and midpoint threshold."""
    best = None
    parent = gini_sum(y, c)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            t = (a + b) / 2
            m = X[:, f] <= t
            if m.sum() < min_leaf or (~m).sum() < min_leaf:
                continue
            g = parent - gini_sum(y[m], c) - gini_sum(y[~m], c)
            best = g if best is None else max(best, g)
    return best


def root_gain(tree, X, y, c):
    m = X[:, tree.feature[0]] <= tree.threshold[0]
    return gini_sum(y, c) - gini_sum(y[m], c) - gini_sum(y[~m], c)
