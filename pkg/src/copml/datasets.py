"""Dataset ingestion, normalization and synthetic data."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from copml.errors import DatasetError


def minmax_normalize(X, lo=None, hi=None):
    """Map every column affinely onto ``[-1, 1]``.

    ``lo``/``hi`` default to the column extremes of ``X``; pass the training
    extremes to normalize a test set consistently (values may then fall
    slightly outside the interval and are clipped).  Constant columns map to 0.
    """
    X = np.asarray(X, dtype=np.float64)
    lo = X.min(axis=0) if lo is None else np.asarray(lo, dtype=np.float64)
    hi = X.max(axis=0) if hi is None else np.asarray(hi, dtype=np.float64)
    span = np.where(hi > lo, hi - lo, 1.0)
    out = 2.0 * (X - lo) / span - 1.0
    out[:, hi <= lo] = 0.0
    return np.clip(out, -1.0, 1.0), lo, hi


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def read_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Raw features and labels; the last column is the 0/1 label, a header is optional."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    width = len(rows[0])
    if width < 2:
        raise DatasetError(f"{path}: need at least one feature and a label column")
    feats, labels = [], []
    for n, row in enumerate(rows, start=1):
        if len(row) != width:
            raise DatasetError(f"{path}: row {n} has {len(row)} columns, expected {width}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise DatasetError(f"{path}: row {n} is not numeric") from None
        if vals[-1] not in (0.0, 1.0):
            raise DatasetError(f"{path}: row {n} has label {row[-1].strip()!r}, expected 0 or 1")
        feats.append(vals[:-1])
        labels.append(int(vals[-1]))
    return np.array(feats), np.array(labels, dtype=np.int64)


def load_dataset(path, bounds=None):
    """Read a CSV dataset and min-max normalize its features to ``[-1, 1]``.

    Returns ``(X, y, (lo, hi))``; feed ``(lo, hi)`` back as ``bounds`` to
    normalize a test file with the training statistics.
    """
    X, y = read_csv(path)
    lo, hi = (None, None) if bounds is None else bounds
    Xn, lo, hi = minmax_normalize(X, lo, hi)
    return Xn, y, (lo, hi)


def split_among_parties(X, y, n_parties: int):
    """Even contiguous split of the rows across data owners."""
    idx = np.array_split(np.arange(len(y)), n_parties)
    return [(np.asarray(X)[i], np.asarray(y)[i]) for i in idx]


def make_separable(m: int, d: int, seed: int = 0, m_test: int = 0, margin: float = 0.05):
    """Linearly separable points in ``[-1, 1]^d`` labelled by a random hyperplane
    through the origin, keeping only points at least ``margin`` away from it."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=d)
    w /= np.linalg.norm(w)
    need = m + m_test
    Xs = []
    while sum(len(x) for x in Xs) < need:
        cand = rng.uniform(-1.0, 1.0, size=(2 * need, d))
        Xs.append(cand[np.abs(cand @ w) >= margin])
    X = np.concatenate(Xs)[:need]
    y = (X @ w > 0).astype(np.int64)
    if m_test:
        return (X[:m], y[:m]), (X[m:], y[m:])
    return X, y


def write_csv(path, X, y, header: bool = True) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"x{i}" for i in range(np.asarray(X).shape[1])] + ["label"])
        for row, lab in zip(np.asarray(X), np.asarray(y)):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])
