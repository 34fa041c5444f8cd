"""Bundled datasets and locators for user-supplied ones."""
from __future__ import annotations

import csv
import os
from pathlib import Path

from ..data import Dataset, load_csv, load_schema

HERE = Path(__file__).resolve().parent
BLOOD_ENV = "DELTATAB_BLOOD_CSV"
BLOOD_COLUMNS = ("recency", "frequency", "monetary", "time", "donated")


def schema_path(name: str) -> Path:
    return HERE / f"{name}.schema.json"


def csv_path(name: str) -> Path:
    return HERE / f"{name}.csv"


def bundled(name: str) -> Dataset:
    """Load a dataset shipped with the package (``credit``, ``clusters``, ``friedman``)."""
    p = csv_path(name)
    if not p.exists():
        raise FileNotFoundError(f"no bundled dataset named {name!r}")
    return load_csv(p, load_schema(schema_path(name)))


def blood_csv() -> Path | None:
    """Location of the blood-transfusion CSV, if the user has provided one."""
    env = os.environ.get(BLOOD_ENV)
    for cand in ([Path(env)] if env else []) + [csv_path("blood")]:
        if cand.is_file():
            return cand
    return None


def convert_blood(src: str | Path, dst: str | Path) -> int:
    """Rewrite the UCI ``transfusion.data`` file with the bundled schema's column names.

    Returns the number of data rows written.
    """
    with open(src, newline="", encoding="utf-8") as f:
        rows = [r for r in csv.reader(f) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{src}: empty file")
    body = rows[1:] if not rows[0][0].strip().lstrip("-").replace(".", "").isdigit() else rows
    with open(dst, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(BLOOD_COLUMNS)
        for r in body:
            if len(r) != len(BLOOD_COLUMNS):
                raise ValueError(f"{src}: expected {len(BLOOD_COLUMNS)} columns, got {len(r)}")
            w.writerow([c.strip() for c in r])
    return len(body)
