"""Backend selection for the split-search and routing kernels.

The compiled extension is used when it imported cleanly; set
``DELTATAB_PURE_PYTHON=1`` to force the numpy fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_compiled = None
if os.environ.get("DELTATAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def _impl(backend: str | None):
    backend = backend or BACKEND
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available in this install")
        return _compiled
    if backend == "python":
        return _kernels_py
    raise ValueError(f"unknown backend {backend!r}")


def compiled_available() -> bool:
    return _compiled is not None


def best_splits_classification(X, y, n_classes, features, min_leaf, backend=None):
    return _impl(backend).best_splits_classification(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.int64),
        int(n_classes),
        np.ascontiguousarray(features, dtype=np.int64),
        int(min_leaf),
    )


def best_splits_regression(X, Y, features, min_leaf, backend=None):
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    return _impl(backend).best_splits_regression(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(Y),
        np.ascontiguousarray(features, dtype=np.int64),
        int(min_leaf),
    )


def apply_tree(X, feature, threshold, left, right, backend=None):
    return _impl(backend).apply_tree(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(feature, dtype=np.int64),
        np.ascontiguousarray(threshold, dtype=np.float64),
        np.ascontiguousarray(left, dtype=np.int64),
        np.ascontiguousarray(right, dtype=np.int64),
    )
