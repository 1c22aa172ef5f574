"""Plaintext references: floating-point logistic regression (the accuracy
yardstick) and a single-process fixed-point replica of the secure update."""

from __future__ import annotations

import numpy as np

from copml.field import FieldMatrix, phi_inv
from copml.sigmoid import PolyApprox, eval_poly_field, sigmoid

EPS = 1e-12


def cross_entropy(w, X, y) -> float:
    """Mean binary cross-entropy of the sigmoid model ``g(X w)``."""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    prob = np.clip(sigmoid(np.asarray(X) @ w), EPS, 1 - EPS)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    return float(np.mean(-y * np.log(prob) - (1 - y) * np.log(1 - prob)))


def accuracy(w, X, y) -> float:
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    pred = (np.asarray(X) @ w >= 0).astype(int)
    return float(np.mean(pred == np.asarray(y).reshape(-1)))


def gradient_descent(X, y, eta: float, iterations: int, w0=None, link=sigmoid):
    """Full-batch updates ``w <- w - eta/m * X^T (link(X w) - y)``.

    Returns the final weights and the list of weights after each step.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    m, d = X.shape
    w = np.zeros(d) if w0 is None else np.asarray(w0, dtype=np.float64).reshape(-1).copy()
    path = []
    for _ in range(iterations):
        w = w - eta / m * (X.T @ (link(X @ w) - y))
        path.append(w.copy())
    return w, path


def field_gradient(X: FieldMatrix, y: FieldMatrix, w: FieldMatrix, approx: PolyApprox) -> FieldMatrix:
    """``X^T (g(X w) - y)`` computed directly in the field."""
    return X.T @ eval_poly_field(approx, X @ w) - X.T @ y


def stochastic_round(a, k1: int, low):
    """``floor((a + low) / 2**k1)``: the secure truncation's output for mask bits ``low``.

    With ``low`` uniform on ``[0, 2**k1)`` this is ``floor(a / 2**k1) + s``
    where ``P(s = 1) = (a mod 2**k1) / 2**k1``.
    """
    return np.floor_divide(np.asarray(a, dtype=np.int64) + np.asarray(low, dtype=np.int64), 2**k1)


def fixed_point_step(w: FieldMatrix, grad: FieldMatrix, c: int, k1: int, low) -> FieldMatrix:
    """``w - round(c * grad / 2**k1)`` with the rounding pinned by ``low``."""
    p = w.p
    step = stochastic_round(phi_inv(grad.data, p) * int(c), k1, low)
    return FieldMatrix.from_signed(phi_inv(w.data, p) - step, p, w.scale)
