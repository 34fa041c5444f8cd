"""Synthetic tabular datasets for tests, smoke runs and timing.

Numerical cells are written with six decimals and class labels and
categories carry word prefixes, so no cell string is a short token that
could collide with rule text.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .data import CATEGORICAL, NUMERICAL, Column, Dataset, Schema, Target


def _raw(X_num: np.ndarray, X_cat: np.ndarray | None, labels, schema: Schema) -> Dataset:
    n = len(labels)
    cols = [np.round(X_num[:, j], 6) for j in range(X_num.shape[1])]
    if X_cat is not None:
        cols += [X_cat[:, j] for j in range(X_cat.shape[1])]
    X = np.empty((n, len(cols)), dtype=object)
    for j, c in enumerate(cols):
        X[:, j] = list(c)
    y = np.asarray(labels, dtype=np.float64 if schema.task == "regression" else object)
    return Dataset(X, y, schema)


def two_clusters(n: int = 400, d: int = 4, sep: float = 4.0, noise: float = 0.0, seed: int = 0) -> Dataset:
    """Two Gaussian blobs split along feature 0; ``noise`` flips that share of labels."""
    rng = np.random.default_rng(seed)
    z = rng.integers(0, 2, size=n)
    X = rng.normal(size=(n, d))
    X[:, 0] += np.where(z == 1, sep / 2, -sep / 2)
    flip = rng.random(n) < noise
    y = np.where(flip, 1 - z, z)
    schema = Schema(
        tuple(Column(f"x{j}", NUMERICAL) for j in range(d)),
        Target("label", "binclass", 2),
        "two_clusters",
    )
    return _raw(X, None, np.where(y == 1, "class_pos", "class_neg"), schema)


def friedman(n: int = 500, d: int = 5, noise: float = 0.5, seed: int = 0) -> Dataset:
    """Friedman #1 regression surface over the first five of ``d`` uniform features."""
    if d < 5:
        raise ValueError("friedman needs d >= 5")
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, d))
    y = 10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2 + 10 * X[:, 3] + 5 * X[:, 4]
    y = y + noise * rng.normal(size=n)
    schema = Schema(tuple(Column(f"x{j}", NUMERICAL) for j in range(d)), Target("target", "regression"), "friedman")
    return _raw(X, None, np.round(y, 6), schema)


def mixed_binary(n: int = 26048, n_num: int = 6, n_cat: int = 8, n_levels: int = 5, seed: int = 0) -> Dataset:
    """Binary task with numerical and categorical columns (Adult-sized by default)."""
    rng = np.random.default_rng(seed)
    Xn = rng.normal(size=(n, n_num))
    codes = rng.integers(0, n_levels, size=(n, n_cat))
    w_num = rng.normal(size=n_num)
    w_cat = rng.normal(size=(n_cat, n_levels))
    logit = Xn @ w_num + w_cat[np.arange(n_cat), codes].sum(axis=1) + 0.8 * Xn[:, 0] * Xn[:, 1 % n_num]
    y = (logit + rng.logistic(size=n) > 0).astype(int)
    Xc = np.empty((n, n_cat), dtype=object)
    for j in range(n_cat):
        Xc[:, j] = [f"level_{chr(97 + j)}{k}" for k in codes[:, j]]
    cols = tuple(Column(f"num{j}", NUMERICAL) for j in range(n_num)) + tuple(
        Column(f"cat{j}", CATEGORICAL) for j in range(n_cat)
    )
    schema = Schema(cols, Target("income", "binclass", 2), "mixed_binary")
    return _raw(Xn, Xc, np.where(y == 1, "class_high", "class_low"), schema)


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6f}"
    return str(v)


def write_dataset(ds: Dataset, csv_path: str | Path, schema_path: str | Path | None = None) -> None:
    """Write a raw dataset as CSV (and optionally its schema JSON)."""
    if ds.is_preprocessed:
        raise ValueError("write the raw dataset, not a preprocessed one")
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow([c.name for c in ds.schema.columns] + [ds.schema.target.name])
        for row, label in zip(ds.features, ds.labels):
            w.writerow([_cell(v) for v in row] + [_cell(label)])
    if schema_path is not None:
        with open(schema_path, "w", encoding="utf-8") as f:
            json.dump(ds.schema.to_dict(), f, indent=2)
            f.write("\n")
