"""Lagrange coded computing over secret shares.

The dataset blocks ``X_1..X_K`` and ``T`` random masks are placed at the
points ``beta_1..beta_{K+T}`` of a degree ``K+T-1`` polynomial ``u``; party
``j`` works on ``u(alpha_j)``.  The model is encoded the same way with ``w``
repeated at every data point.  Applying the degree ``2r+1`` map
``f(X, w) = X^T g(X w)`` to the encodings yields evaluations of a polynomial
of degree ``(2r+1)(K+T-1)``; interpolating it from that many plus one
evaluations and reading it off at ``beta_k`` recovers ``f(X_k, w)``.

All routines here use public field constants only, so they run unchanged on
plaintext :class:`~copml.field.FieldMatrix` objects or on one party's
:class:`~copml.mpc.ShareMatrix` objects.  Indices ``k`` are zero-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from copml.errors import FieldError, SharingError, ThresholdError
from copml.field import FieldMatrix
from copml.mpc import ShareMatrix, lagrange_weights, linear_combination

Value = Union[FieldMatrix, ShareMatrix]


def recovery_threshold(r: int, K: int, T: int) -> int:
    """Number of evaluations needed to decode: ``(2r+1)(K+T-1) + 1``."""
    if r < 1 or K < 1 or T < 1:
        raise ValueError(f"need r >= 1, K >= 1, T >= 1 (got r={r}, K={K}, T={T})")
    return (2 * r + 1) * (K + T - 1) + 1


@dataclass(frozen=True)
class CodingPoints:
    betas: tuple[int, ...]
    alphas: tuple[int, ...]
    p: int

    def __post_init__(self):
        b = [x % self.p for x in self.betas]
        a = [x % self.p for x in self.alphas]
        if len(set(b)) != len(b) or len(set(a)) != len(a):
            raise FieldError("coding points must be pairwise distinct")
        if set(a) & set(b):
            raise FieldError("alpha and beta points must be disjoint")

    @classmethod
    def default(cls, K: int, T: int, N: int, p: int) -> "CodingPoints":
        """``beta_k = k`` for ``k = 1..K+T`` and ``alpha_i = K+T+i`` for ``i = 1..N``."""
        if p <= K + T + N:
            raise FieldError(f"p = {p} too small for {K + T + N} distinct coding points")
        return cls(tuple(range(1, K + T + 1)), tuple(range(K + T + 1, K + T + N + 1)), p)

    @property
    def K_plus_T(self) -> int:
        return len(self.betas)


def lagrange_basis(points: CodingPoints, k: int, z: int) -> int:
    """``prod_{l != k} (z - beta_l) / (beta_k - beta_l)`` in F_p."""
    return lagrange_weights(tuple(points.betas), int(z) % points.p, points.p)[k]


def encoding_weights(points: CodingPoints, j: int) -> tuple[int, ...]:
    """All basis polynomials evaluated at ``alpha_j``."""
    return lagrange_weights(tuple(points.betas), points.alphas[j] % points.p, points.p)


def _combine(items: Sequence[Value], coeffs: Sequence[int]) -> Value:
    if isinstance(items[0], ShareMatrix):
        return linear_combination(items, coeffs)
    first = items[0]
    p = first.p
    acc = np.zeros(first.shape, dtype=np.int64)
    for it, c in zip(items, coeffs):
        if it.scale != first.scale or it.shape != first.shape:
            raise FieldError("combined blocks must share shape and scale")
        acc = (acc + it.data * (int(c) % p)) % p
    return FieldMatrix._raw(acc, p, first.scale)


def _shape_scale(v: Value):
    return v.shape, v.scale


def encode(blocks: Sequence[Value], noise: Sequence[Value], points: CodingPoints) -> list[Value]:
    """Evaluate the interpolating polynomial through ``blocks + noise`` at every alpha."""
    items = list(blocks) + list(noise)
    if len(items) != points.K_plus_T:
        raise ValueError(f"expected {points.K_plus_T} blocks+masks, got {len(items)}")
    ref = _shape_scale(items[0])
    if any(_shape_scale(v) != ref for v in items):
        raise FieldError("all blocks and masks must have the same shape and scale")
    return [_combine(items, encoding_weights(points, j)) for j in range(len(points.alphas))]


def encode_dataset_shares(partition_shares: Sequence[Value], noise_shares: Sequence[Value],
                          points: CodingPoints) -> list[Value]:
    """``[u(alpha_j)]_i`` for every ``j`` from one party's shares of the K blocks and T masks."""
    K = points.K_plus_T - len(noise_shares)
    if len(partition_shares) != K:
        raise ValueError(f"expected {K} partitions, got {len(partition_shares)}")
    return encode(partition_shares, noise_shares, points)


def encode_model_shares(w_share: Value, noise_shares: Sequence[Value], points: CodingPoints) -> list[Value]:
    """``[v(alpha_j)]_i`` with ``v(beta_k) = w`` for every data point ``k``."""
    K = points.K_plus_T - len(noise_shares)
    return encode([w_share] * K, noise_shares, points)


def decode_weights(points: CodingPoints, used: Sequence[int], k: int) -> tuple[int, ...]:
    """Interpolation weights from ``alpha_j, j in used`` to ``beta_k``."""
    xs = tuple(points.alphas[j] % points.p for j in used)
    return lagrange_weights(xs, points.betas[k] % points.p, points.p)


def decode_gradient_shares(computation_shares: Mapping[int, Value] | Sequence[tuple[int, Value]],
                           points: CodingPoints, r: int, K: int, T: int) -> list[Value]:
    """Recover ``f(X_k, w)`` for ``k < K`` from evaluations at alpha points.

    ``computation_shares`` maps the (zero-based) encoding index ``j`` to the
    value or share of ``f(X~_j, w~_j)``; the first ``recovery_threshold``
    entries in iteration order are used.
    """
    items = list(computation_shares.items()) if isinstance(computation_shares, Mapping) \
        else list(computation_shares)
    need = recovery_threshold(r, K, T)
    if len(items) < need:
        raise ThresholdError(f"decoding needs {need} evaluations, got {len(items)}")
    items = items[:need]
    used = [j for j, _ in items]
    if len(set(used)) != len(used):
        raise SharingError("duplicate evaluation indices")
    vals = [v for _, v in items]
    return [_combine(vals, decode_weights(points, used, k)) for k in range(K)]


def aggregate_subgradients(shares: Sequence[Value], K: int | None = None) -> Value:
    """Sum the K decoded sub-gradients."""
    if K is not None and len(shares) != K:
        raise ValueError(f"expected {K} sub-gradients, got {len(shares)}")
    if not shares:
        raise ValueError("nothing to aggregate")
    return _combine(list(shares), [1] * len(shares))


def partition_rows(mat: Value, K: int) -> list[Value]:
    """Split rows into K equal blocks (rows must already be a multiple of K)."""
    rows = mat.shape[0]
    if rows % K:
        raise ValueError(f"{rows} rows do not split into {K} equal blocks")
    step = rows // K
    if isinstance(mat, ShareMatrix):
        return [ShareMatrix(mat.point, FieldMatrix._raw(mat.values.data[k * step:(k + 1) * step],
                                                        mat.p, mat.scale), mat.degree)
                for k in range(K)]
    return [FieldMatrix._raw(mat.data[k * step:(k + 1) * step], mat.p, mat.scale) for k in range(K)]


def pad_rows(mat: Value, multiple: int) -> Value:
    """Append zero rows up to the next multiple (zero rows are valid shares of zero)."""
    rows = mat.shape[0]
    extra = (-rows) % multiple
    if not extra:
        return mat
    data = mat.values.data if isinstance(mat, ShareMatrix) else mat.data
    padded = np.concatenate([data, np.zeros((extra,) + data.shape[1:], dtype=np.int64)])
    fm = FieldMatrix._raw(padded, mat.p, mat.scale)
    return ShareMatrix(mat.point, fm, mat.degree) if isinstance(mat, ShareMatrix) else fm
