# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled split search and routing. Must stay in numeric lockstep with _kernels_py."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def best_splits_classification(double[:, :] X, long long[:] y, int n_classes,
                               long long[:] features, int min_leaf):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t k = features.shape[0]
    thresholds_a = np.zeros(k)
    scores_a = np.full(k, -np.inf)
    cdef double[:] thresholds = thresholds_a
    cdef double[:] scores = scores_a
    if n < 2 * min_leaf or n < 2:
        return thresholds_a, scores_a
    total_a = np.zeros(n_classes, dtype=np.int64)
    left_a = np.zeros(n_classes, dtype=np.int64)
    cdef long long[:] total = total_a
    cdef long long[:] left = left_a
    cdef long long[:] order
    cdef Py_ssize_t f_i, i, c
    cdef long long f, lab, sq_l, sq_r, r
    cdef double best, s, x0, x1, best_thr

    for i in range(n):
        total[y[i]] += 1
    for f_i in range(k):
        f = features[f_i]
        order = np.argsort(np.asarray(X[:, f]), kind="stable").astype(np.int64)
        for c in range(n_classes):
            left[c] = 0
        sq_l = 0
        sq_r = 0
        for c in range(n_classes):
            sq_r += total[c] * total[c]
        best = -INFINITY
        best_thr = 0.0
        with nogil:
            for i in range(n - 1):
                lab = y[order[i]]
                sq_l += 2 * left[lab] + 1
                r = total[lab] - left[lab]
                sq_r -= 2 * r - 1
                left[lab] += 1
                x0 = X[order[i], f]
                x1 = X[order[i + 1], f]
                if x0 == x1 or i + 1 < min_leaf or n - i - 1 < min_leaf:
                    continue
                s = <double>sq_l / <double>(i + 1) + <double>sq_r / <double>(n - i - 1)
                if s > best:
                    best = s
                    best_thr = (x0 + x1) / 2.0
        scores[f_i] = best
        if best > -INFINITY:
            thresholds[f_i] = best_thr
    return thresholds_a, scores_a


def best_splits_regression(double[:, :] X, double[:, :] Y, long long[:] features, int min_leaf):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t m = Y.shape[1]
    cdef Py_ssize_t k = features.shape[0]
    thresholds_a = np.zeros(k)
    scores_a = np.full(k, -np.inf)
    cdef double[:] thresholds = thresholds_a
    cdef double[:] scores = scores_a
    if n < 2 * min_leaf or n < 2:
        return thresholds_a, scores_a
    total_a = np.zeros(m)
    left_a = np.zeros(m)
    cdef double[:] total = total_a
    cdef double[:] left = left_a
    cdef long long[:] order
    cdef Py_ssize_t f_i, i, j
    cdef long long f
    cdef double best, s, x0, x1, best_thr, sl, sr, nl, nr

    for f_i in range(k):
        f = features[f_i]
        order = np.argsort(np.asarray(X[:, f]), kind="stable").astype(np.int64)
        best = -INFINITY
        best_thr = 0.0
        with nogil:
            for j in range(m):
                left[j] = 0.0
                total[j] = 0.0
            for i in range(n):
                for j in range(m):
                    total[j] += Y[order[i], j]
            for i in range(n - 1):
                for j in range(m):
                    left[j] += Y[order[i], j]
                x0 = X[order[i], f]
                x1 = X[order[i + 1], f]
                if x0 == x1 or i + 1 < min_leaf or n - i - 1 < min_leaf:
                    continue
                nl = <double>(i + 1)
                nr = <double>(n - i - 1)
                s = 0.0
                for j in range(m):
                    sl = left[j]
                    sr = total[j] - sl
                    s = s + (sl * sl / nl + sr * sr / nr)
                if s > best:
                    best = s
                    best_thr = (x0 + x1) / 2.0
        scores[f_i] = best
        if best > -INFINITY:
            thresholds[f_i] = best_thr
    return thresholds_a, scores_a


def apply_tree(double[:, :] X, long long[:] feature, double[:] threshold,
               long long[:] left, long long[:] right):
    cdef Py_ssize_t n = X.shape[0]
    out_a = np.zeros(n, dtype=np.int64)
    cdef long long[:] out = out_a
    cdef Py_ssize_t i
    cdef long long node
    with nogil:
        for i in range(n):
            node = 0
            while left[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] = node
    return out_a
