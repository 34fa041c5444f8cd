"""Tabular dataset ingestion, preprocessing, splitting and metrics."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

NUMERICAL = "numerical"
CATEGORICAL = "categorical"
TASKS = ("binclass", "multiclass", "regression")


class SchemaError(ValueError):
    pass


class DataParseError(ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class Column:
    name: str
    kind: str


@dataclass(frozen=True)
class Target:
    name: str
    task: str
    n_classes: int | None = None

    @property
    def is_classification(self) -> bool:
        return self.task != "regression"


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]
    target: Target
    name: str = "dataset"

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")
        if self.target.name in names:
            raise SchemaError(f"target {self.target.name!r} also listed as a feature column")
        for c in self.columns:
            if c.kind not in (NUMERICAL, CATEGORICAL):
                raise SchemaError(f"column {c.name!r}: unknown kind {c.kind!r}")
        if self.target.task not in TASKS:
            raise SchemaError(f"unknown task {self.target.task!r}")
        if self.target.task == "binclass" and self.target.n_classes not in (None, 2):
            raise SchemaError("binclass target must have 2 classes")
        if self.target.task == "multiclass" and (self.target.n_classes is None or self.target.n_classes < 2):
            raise SchemaError("multiclass target needs n_classes >= 2")

    @property
    def task(self) -> str:
        return self.target.task

    @property
    def n_classes(self) -> int | None:
        if self.task == "binclass":
            return 2
        return self.target.n_classes if self.task == "multiclass" else None

    @property
    def n_num(self) -> int:
        return sum(c.kind == NUMERICAL for c in self.columns)

    @property
    def n_cat(self) -> int:
        return sum(c.kind == CATEGORICAL for c in self.columns)

    def to_dict(self) -> dict:
        target = {"name": self.target.name, "task": self.target.task}
        if self.n_classes is not None:
            target["n_classes"] = self.n_classes
        return {
            "name": self.name,
            "columns": [{"name": c.name, "kind": c.kind} for c in self.columns],
            "target": target,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        try:
            cols = tuple(Column(c["name"], c["kind"]) for c in d["columns"])
            t = d["target"]
            target = Target(t["name"], t["task"], t.get("n_classes"))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema: {exc}") from exc
        return cls(cols, target, d.get("name", "dataset"))

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_schema(path: str | Path) -> Schema:
    with open(path, encoding="utf-8") as f:
        return Schema.from_dict(json.load(f))


@dataclass(frozen=True)
class PreprocessStats:
    """Statistics fitted on the training split and reused for every other split."""

    means: tuple[float, ...]
    stds: tuple[float, ...]
    category_maps: tuple[tuple[str, ...], ...]
    label_map: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "means": list(self.means),
            "stds": list(self.stds),
            "category_maps": [list(m) for m in self.category_maps],
            "label_map": list(self.label_map),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessStats":
        return cls(
            tuple(d["means"]),
            tuple(d["stds"]),
            tuple(tuple(m) for m in d["category_maps"]),
            tuple(d["label_map"]),
        )


@dataclass(frozen=True)
class Dataset:
    """Rows of a tabular dataset.

    Raw datasets (``stats is None``) keep categorical cells as strings in an
    object array; preprocessed datasets hold a float64 matrix and integer or
    real labels.
    """

    features: np.ndarray
    labels: np.ndarray
    schema: Schema
    stats: PreprocessStats | None = None
    indices: np.ndarray = field(default=None)  # original row ids
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if self.indices is None:
            object.__setattr__(self, "indices", np.arange(len(self.labels)))
        if self.features.ndim != 2 or self.features.shape[0] != len(self.labels):
            raise ValueError("features must be an N x d matrix matching the labels")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def task(self) -> str:
        return self.schema.task

    @property
    def is_preprocessed(self) -> bool:
        return self.stats is not None

    @property
    def n_classes(self) -> int | None:
        if self.schema.n_classes is None and self.stats is not None and self.schema.target.is_classification:
            return len(self.stats.label_map)
        return self.schema.n_classes

    def take(self, idx: np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, features=self.features[idx], labels=self.labels[idx], indices=self.indices[idx])


def _parse_float(cell: str, row: int, column: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DataParseError(f"row {row}, column {column!r}: cannot parse {cell!r} as a number", row, column) from None
    if not math.isfinite(v):
        raise DataParseError(f"row {row}, column {column!r}: non-finite value {cell!r}", row, column)
    return v


def load_csv(path: str | Path, schema: Schema) -> Dataset:
    """Read a header-first UTF-8 CSV into a raw Dataset ordered by the schema."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        pos = {h: i for i, h in enumerate(header)}
        wanted = [c.name for c in schema.columns] + [schema.target.name]
        missing = [w for w in wanted if w not in pos]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        feats, labels = [], []
        for rowno, rec in enumerate(reader, start=1):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            if len(rec) != len(header):
                raise DataParseError(f"row {rowno}: expected {len(header)} cells, got {len(rec)}", rowno)
            row = []
            for col in schema.columns:
                cell = rec[pos[col.name]].strip()
                if cell == "":
                    raise DataParseError(f"row {rowno}, column {col.name!r}: missing value", rowno, col.name)
                row.append(_parse_float(cell, rowno, col.name) if col.kind == NUMERICAL else cell)
            label = rec[pos[schema.target.name]].strip()
            if label == "":
                raise DataParseError(f"row {rowno}: missing target", rowno, schema.target.name)
            labels.append(_parse_float(label, rowno, schema.target.name) if schema.task == "regression" else label)
            feats.append(row)
    if not feats:
        raise DataParseError(f"{path}: no data rows")
    X = np.empty((len(feats), len(schema.columns)), dtype=object)
    for i, row in enumerate(feats):
        X[i, :] = row
    y = np.asarray(labels, dtype=np.float64 if schema.task == "regression" else object)
    return Dataset(X, y, schema)


def read_cells(path: str | Path, rows: Sequence[int] | None = None) -> list[str]:
    """Every non-header cell string of a CSV, optionally restricted to data-row positions."""
    with open(path, newline="", encoding="utf-8") as f:
        records = [r for r in list(csv.reader(f))[1:] if r and any(c.strip() for c in r)]
    if rows is not None:
        records = [records[i] for i in rows]
    return [c.strip() for r in records for c in r]


def _label_order(values) -> tuple[str, ...]:
    uniq = set(values)
    try:
        return tuple(sorted(uniq, key=float))
    except ValueError:
        return tuple(sorted(uniq))


def fit_stats(fit_on: Dataset) -> PreprocessStats:
    if fit_on.is_preprocessed:
        raise ValueError("statistics must be fitted on a raw dataset")
    if fit_on.n == 0:
        raise ValueError("cannot fit preprocessing statistics on an empty dataset")
    means, stds, maps = [], [], []
    for j, col in enumerate(fit_on.schema.columns):
        if col.kind == NUMERICAL:
            v = fit_on.features[:, j].astype(np.float64)
            means.append(float(v.mean()))
            stds.append(float(v.std()))
            maps.append(())
        else:
            seen: dict[str, None] = {}
            for cell in fit_on.features[:, j]:
                seen.setdefault(str(cell))
            means.append(0.0)
            stds.append(1.0)
            maps.append(tuple(seen))
    label_map: tuple[str, ...] = ()
    if fit_on.schema.target.is_classification:
        label_map = _label_order(str(v) for v in fit_on.labels)
        n = fit_on.schema.n_classes
        if n is not None and len(label_map) > n:
            raise SchemaError(f"found {len(label_map)} classes, schema allows {n}")
    return PreprocessStats(tuple(means), tuple(stds), tuple(maps), label_map)


def preprocess(raw: Dataset, fit_on: Dataset | PreprocessStats) -> Dataset:
    """Z-score numerical columns and ordinal-encode categoricals.

    Unseen categories get the reserved code ``len(categories)``. Passing an
    already-preprocessed dataset with the same statistics returns it unchanged.
    """
    stats = fit_on if isinstance(fit_on, PreprocessStats) else fit_stats(fit_on)
    if raw.is_preprocessed:
        if raw.stats == stats:
            return raw
        raise ValueError("dataset was preprocessed with different statistics")
    X = np.zeros(raw.features.shape, dtype=np.float64)
    for j, col in enumerate(raw.schema.columns):
        if col.kind == NUMERICAL:
            v = raw.features[:, j].astype(np.float64)
            X[:, j] = 0.0 if stats.stds[j] == 0 else (v - stats.means[j]) / stats.stds[j]
        else:
            codes = {c: i for i, c in enumerate(stats.category_maps[j])}
            reserved = len(codes)
            X[:, j] = [codes.get(str(c), reserved) for c in raw.features[:, j]]
    if raw.schema.target.is_classification:
        lm = {c: i for i, c in enumerate(stats.label_map)}
        try:
            y = np.array([lm[str(v)] for v in raw.labels], dtype=np.int64)
        except KeyError as exc:
            raise DataParseError(f"label {exc.args[0]!r} not seen in the training split") from None
    else:
        y = raw.labels.astype(np.float64)
    return replace(raw, features=X, labels=y, stats=stats)


def split(
    d: Dataset, ratios: Sequence[float] = (0.64, 0.16, 0.2), seed: int = 0
) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded train/val/test split; stratified by class for classification."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    n = d.n
    warn: tuple[str, ...] = ()
    groups: list[np.ndarray]
    if d.schema.target.is_classification:
        keys = np.asarray([str(v) for v in d.labels])
        classes = sorted(set(keys))
        groups = [np.flatnonzero(keys == c) for c in classes]
        if any(len(g) < 3 for g in groups):
            warn = ("stratification disabled: a class has fewer samples than splits",)
            groups = [np.arange(n)]
    else:
        groups = [np.arange(n)]

    totals = _allocate(n, ratios)
    quotas = _stratified_quotas([len(g) for g in groups], ratios, totals)
    parts: list[list[np.ndarray]] = [[], [], []]
    for g, q in zip(groups, quotas):
        perm = rng.permutation(g)
        for k, chunk in enumerate(np.split(perm, np.cumsum(q)[:-1])):
            parts[k].append(chunk)
    out = []
    for k in range(3):
        idx = np.sort(np.concatenate(parts[k])) if parts[k] else np.array([], dtype=np.int64)
        sub = d.take(idx)
        out.append(replace(sub, warnings=warn))
    return out[0], out[1], out[2]


def _stratified_quotas(sizes: list[int], ratios: Sequence[float], totals: list[int]) -> list[list[int]]:
    # floor per group, then hand leftover rows to the splits still short of
    # their global total, preferring the largest fractional remainder
    quotas = [[int(math.floor(s * r)) for r in ratios] for s in sizes]
    need = [totals[k] - sum(q[k] for q in quotas) for k in range(len(ratios))]
    for gi, s in enumerate(sizes):
        frac = [s * r - math.floor(s * r) for r in ratios]
        for _ in range(s - sum(quotas[gi])):
            k = max((k for k in range(len(ratios)) if need[k] > 0), key=lambda k: (frac[k], -k))
            quotas[gi][k] += 1
            need[k] -= 1
            frac[k] = -1.0
    return quotas


def _allocate(n: int, ratios: Sequence[float]) -> list[int]:
    raw = [n * r for r in ratios]
    base = [int(math.floor(x)) for x in raw]
    rem = n - sum(base)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:rem]:
        base[i] += 1
    return base


def from_arrays(X, y, task: str = "binclass", n_classes: int | None = None, name: str = "arrays") -> Dataset:
    """Wrap already-numeric arrays as a preprocessed dataset (identity statistics)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be two-dimensional")
    d = X.shape[1]
    if task == "regression":
        labels = np.asarray(y, dtype=np.float64)
        label_map: tuple[str, ...] = ()
    else:
        labels = np.asarray(y, dtype=np.int64)
        c = n_classes or (2 if task == "binclass" else int(labels.max()) + 1)
        label_map = tuple(str(i) for i in range(c))
        n_classes = c
    schema = Schema(tuple(Column(f"f{j}", NUMERICAL) for j in range(d)), Target("y", task, n_classes), name)
    stats = PreprocessStats((0.0,) * d, (1.0,) * d, ((),) * d, label_map)
    return Dataset(X, labels, schema, stats)


def subsample_fewshot(train: Dataset, n_shots: int, seed: int = 0) -> Dataset:
    """Uniform random subset of ``n_shots`` rows; original row ids are kept."""
    if not 1 <= n_shots <= train.n:
        raise ValueError(f"n_shots must be in [1, {train.n}], got {n_shots}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(train.n, size=n_shots, replace=False))
    return train.take(idx)


@dataclass(frozen=True)
class MetricReport:
    task: str
    value: float
    n_samples: int

    @property
    def name(self) -> str:
        return "nrmse" if self.task == "regression" else "accuracy"


def evaluate(pred, truth, task: str) -> MetricReport:
    """Accuracy from class-probability rows, or RMSE over the population std of the truth."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth)
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(truth)} labels")
    if len(truth) == 0:
        raise ValueError("cannot evaluate on zero samples")
    if task == "regression":
        truth = truth.astype(np.float64)
        pred = pred.reshape(len(truth), -1)[:, 0] if pred.ndim > 1 else pred
        sd = truth.std()
        if sd == 0:
            raise ValueError("NRMSE undefined: targets have zero variance")
        value = float(np.sqrt(np.mean((pred - truth) ** 2)) / sd)
    else:
        if pred.ndim != 2:
            raise ValueError("classification predictions must be probability vectors")
        # np.argmax returns the first maximum, i.e. the lowest class index
        value = float(np.mean(np.argmax(pred, axis=1) == truth.astype(np.int64)))
    return MetricReport(task, value, int(len(truth)))
