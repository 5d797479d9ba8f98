"""Delimited-matrix and JSON file helpers.

Matrices are headerless CSV, one row per signal dimension, 17 significant
digits so float64 values survive a write/read round trip bit-exactly.
JSON is written with sorted keys and a trailing newline so identical
content yields identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def save_matrix(path, M: np.ndarray) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = [",".join(f"{v:.17g}" for v in row) for row in M]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def load_matrix(path) -> np.ndarray:
    text = Path(path).read_text(encoding="ascii")
    rows = [
        [float(tok) for tok in line.split(",")]
        for line in text.splitlines()
        if line.strip()
    ]
    if not rows:
        raise ValueError(f"{path} contains no data")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path} has ragged rows")
    return np.asarray(rows, dtype=float)


def save_json(path, obj) -> None:
    Path(path).write_text(
        json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
