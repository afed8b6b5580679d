"""Synthetic datasets and CSV helpers."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

__all__ = ["SHIFT", "synthetic2d", "write_csv", "read_csv"]

# Distance of each class mean from the origin along its own axis.
SHIFT = 3.0


def synthetic2d(n: int, rng, shift: float = SHIFT):
    """Two shifted standard normals in the plane.

    Label 1 is shifted along the first axis, label 2 along the second.  The
    classes are balanced to within one sample.
    """
    if n < 2:
        raise ValueError("need at least two samples")
    labels = np.array([1] * ((n + 1) // 2) + [2] * (n // 2))
    rng.shuffle(labels)
    X = rng.standard_normal((n, 2))
    X[labels == 1, 0] += shift
    X[labels == 2, 1] += shift
    return X, labels


def write_csv(path, X, y, names=None, target="label"):
    X = np.atleast_2d(X)
    names = names or [f"x{j + 1}" for j in range(X.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + [target])
        for row, lab in zip(X, y):
            w.writerow([repr(float(v)) for v in row] + [_fmt(lab)])


def _fmt(v):
    f = float(v)
    return str(int(f)) if f.is_integer() else repr(f)


def read_csv(path):
    """Return ``(X, y, feature names, target name)``; the last column is the target."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    if len(header) < 2:
        raise ValueError(f"{path}: need at least one feature and a target column")
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from exc
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    return data[:, :-1], data[:, -1], header[:-1], header[-1]
