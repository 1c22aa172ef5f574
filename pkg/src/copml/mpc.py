"""Shamir secret sharing and semi-honest MPC building blocks over F_p.

A sharing of a matrix uses an independent random polynomial per entry; party
``i`` holds the evaluation at its point ``lambda_i = i``.  Linear operations
are local.  Products of two degree-T sharings are reduced back to degree T
with either

* ``"bgw"``: every party re-shares its degree-2T product share and all parties
  recombine with the Lagrange weights of the degree-2T polynomial at zero;
* ``"bh08"``: parties open ``ab - rho`` from degree-2T shares and add a
  degree-T sharing of the same ``rho`` supplied by the dealer.

Truncation follows the probabilistic scheme of Catrina and Saxena: a shared
mask ``r = 2**k1 * r_hi + r_lo`` hides ``2**(k2-1) + a`` while it is opened,
and the low bits of the opened value yield ``floor(a / 2**k1) + u`` with
``P(u = 1) = (a mod 2**k1) / 2**k1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from copml.errors import SharingError, ThresholdError, WrapAroundError
from copml.field import FieldMatrix, inv, phi_inv, uniform

BGW = "bgw"
BH08 = "bh08"
SCHEMES = (BGW, BH08)


@dataclass(frozen=True, eq=False)
class ShareMatrix:
    """One party's share of a secret matrix."""

    point: int
    values: FieldMatrix
    degree: int

    @property
    def p(self) -> int:
        return self.values.p

    @property
    def scale(self) -> int:
        return self.values.scale

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        return f"ShareMatrix(point={self.point}, degree={self.degree}, {self.values!r})"


def _poly_eval(coeffs: Sequence[np.ndarray], x: int, p: int) -> np.ndarray:
    acc = np.zeros_like(coeffs[0])
    for c in reversed(coeffs):
        acc = (acc * x + c) % p
    return acc


def share(secret: FieldMatrix, T: int, points: Sequence[int], rng: np.random.Generator | None = None,
          coeffs: Sequence[np.ndarray] | None = None) -> list[ShareMatrix]:
    """Split ``secret`` into degree-``T`` Shamir shares at ``points``.

    ``coeffs`` pins the random coefficients ``R_1..R_T`` (tests only).
    """
    p = secret.p
    points = [int(x) for x in points]
    if len(points) <= T:
        raise ThresholdError(f"need more than T={T} parties to share, got {len(points)}")
    if len(set(x % p for x in points)) != len(points) or any(x % p == 0 for x in points):
        raise SharingError("evaluation points must be distinct and nonzero")
    if coeffs is None:
        coeffs = [uniform(rng, secret.shape, p) for _ in range(T)]
    else:
        coeffs = [np.broadcast_to(np.asarray(c, dtype=np.int64) % p, secret.shape) for c in coeffs]
        if len(coeffs) != T:
            raise SharingError(f"expected {T} coefficient matrices, got {len(coeffs)}")
    poly = [secret.data] + list(coeffs)
    return [ShareMatrix(x, FieldMatrix._raw(_poly_eval(poly, x, p), p, secret.scale), T)
            for x in points]


@lru_cache(maxsize=4096)
def lagrange_weights(points: tuple[int, ...], x: int, p: int) -> tuple[int, ...]:
    """Weights ``w_j`` with ``f(x) = sum_j w_j f(points[j])`` for deg f < len(points)."""
    out = []
    for j, xj in enumerate(points):
        num, den = 1, 1
        for l, xl in enumerate(points):
            if l != j:
                num = num * (x - xl) % p
                den = den * (xj - xl) % p
        out.append(num * inv(den, p) % p)
    return tuple(out)


def _check_points(points: Sequence[int], p: int):
    if len(set(x % p for x in points)) != len(points):
        raise SharingError("duplicate evaluation points")


def interpolate_at(points: Sequence[int], values: Sequence[np.ndarray], x: int, p: int) -> np.ndarray:
    _check_points(points, p)
    w = lagrange_weights(tuple(int(v) for v in points), int(x) % p, p)
    acc = np.zeros_like(np.asarray(values[0]))
    for wj, v in zip(w, values):
        acc = (acc + wj * np.asarray(v)) % p
    return acc


def reconstruct(shares: Sequence[ShareMatrix], degree: int | None = None) -> FieldMatrix:
    """Interpolate the shared secret at zero from ``degree + 1`` shares."""
    if not shares:
        raise SharingError("no shares given")
    deg = shares[0].degree if degree is None else degree
    if len(shares) < deg + 1:
        raise SharingError(f"degree-{deg} sharing needs {deg + 1} shares, got {len(shares)}")
    use = list(shares)[: deg + 1]
    p = use[0].p
    pts = [s.point for s in use]
    _check_points([s.point for s in shares], p)
    data = interpolate_at(pts, [s.values.data for s in use], 0, p)
    return FieldMatrix._raw(data, p, use[0].scale)


def is_consistent(shares: Sequence[ShareMatrix], degree: int) -> bool:
    """Whether all shares lie on a single polynomial of the given degree."""
    if len(shares) <= degree + 1:
        return True
    base = list(shares)[: degree + 1]
    p = base[0].p
    pts = [s.point for s in base]
    vals = [s.values.data for s in base]
    return all(
        np.array_equal(interpolate_at(pts, vals, s.point, p), s.values.data)
        for s in list(shares)[degree + 1:]
    )


def add_local(a: ShareMatrix, b: ShareMatrix) -> ShareMatrix:
    if a.point != b.point:
        raise SharingError("shares belong to different parties")
    if a.degree != b.degree:
        raise SharingError(f"degree mismatch: {a.degree} vs {b.degree}")
    return ShareMatrix(a.point, a.values + b.values, a.degree)


def sub_local(a: ShareMatrix, b: ShareMatrix) -> ShareMatrix:
    if a.point != b.point:
        raise SharingError("shares belong to different parties")
    if a.degree != b.degree:
        raise SharingError(f"degree mismatch: {a.degree} vs {b.degree}")
    return ShareMatrix(a.point, a.values - b.values, a.degree)


def mul_const_local(a: ShareMatrix, c: int) -> ShareMatrix:
    return ShareMatrix(a.point, a.values.scalar_mul(c), a.degree)


def add_public(a: ShareMatrix, c: FieldMatrix | int) -> ShareMatrix:
    """Shift a shared value by a public constant (same offset at every party)."""
    if isinstance(c, FieldMatrix):
        return ShareMatrix(a.point, a.values + c, a.degree)
    return ShareMatrix(a.point, a.values.add_const(c), a.degree)


def linear_combination(shares: Sequence[ShareMatrix], coeffs: Sequence[int]) -> ShareMatrix:
    """``sum_j c_j * shares[j]`` for public field constants ``c_j``."""
    first = shares[0]
    p = first.p
    acc = np.zeros(first.shape, dtype=np.int64)
    for s, c in zip(shares, coeffs):
        if s.point != first.point or s.degree != first.degree or s.scale != first.scale:
            raise SharingError("linear combination over incompatible shares")
        acc = (acc + s.values.data * (int(c) % p)) % p
    return ShareMatrix(first.point, FieldMatrix._raw(acc, p, first.scale), first.degree)


def by_point(shares: Sequence[ShareMatrix]) -> dict[int, ShareMatrix]:
    return {s.point: s for s in shares}


# --- offline randomness -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RhoPair:
    """The same uniform ``rho`` shared at degree T and at degree 2T."""

    value: FieldMatrix
    shares_T: dict
    shares_2T: dict


@dataclass(frozen=True, eq=False)
class TruncationMask:
    """Shares of ``r_lo`` (uniform below ``2**k1``) and ``r_hi``."""

    k1: int
    k2: int
    low: np.ndarray
    high: np.ndarray
    low_shares: dict
    high_shares: dict


class Dealer:
    """Trusted offline source of correlated randomness.

    Draws come from seeded generators, so a dealer rebuilt with the same seeds
    replays the same randomness in the same order.  Truncation masks use their
    own stream (``trunc_rng``, defaulting to ``rng``) so that runs differing
    only in the multiplication scheme round identically.  Masks are kept in
    ``masks`` so that reference computations can replay the rounding.
    """

    def __init__(self, p: int, T: int, points: Sequence[int], rng: np.random.Generator,
                 trunc_rng: np.random.Generator | None = None):
        self.p = p
        self.T = T
        self.points = tuple(points)
        self.rng = rng
        self.trunc_rng = rng if trunc_rng is None else trunc_rng
        self.masks: list[TruncationMask] = []
        self.rhos: list[RhoPair] = []

    def _share(self, secret: FieldMatrix, degree: int) -> dict:
        return by_point(share(secret, degree, self.points, self.rng))

    def rho_pair(self, shape, scale: int = 0) -> RhoPair:
        if len(self.points) < 2 * self.T + 1:
            raise ThresholdError("degree-2T sharing of rho needs at least 2T+1 parties")
        rho = FieldMatrix._raw(uniform(self.rng, shape, self.p), self.p, scale)
        pair = RhoPair(rho, self._share(rho, self.T), self._share(rho, 2 * self.T))
        self.rhos.append(pair)
        return pair

    def random_sharing(self, shape, scale: int = 0) -> dict:
        """Degree-T sharing of a fresh uniform field matrix (Lagrange noise)."""
        z = FieldMatrix._raw(uniform(self.rng, shape, self.p), self.p, scale)
        return self._share(z, self.T)

    def fixed_point_sharing(self, values: np.ndarray, scale: int) -> dict:
        z = FieldMatrix.from_signed(values, self.p, scale)
        return self._share(z, self.T)

    def truncation_mask(self, shape, k1: int, k2: int) -> TruncationMask:
        check_truncation_params(k1, k2, self.p)
        hi_count = (self.p - 2**k2) // 2**k1
        g = self.trunc_rng
        low = g.integers(0, 2**k1, size=shape, dtype=np.int64)
        high = g.integers(0, hi_count, size=shape, dtype=np.int64)
        lo_sh = by_point(share(FieldMatrix._raw(low, self.p, 0), self.T, self.points, g))
        hi_sh = by_point(share(FieldMatrix._raw(high, self.p, 0), self.T, self.points, g))
        mask = TruncationMask(k1, k2, low, high, lo_sh, hi_sh)
        self.masks.append(mask)
        return mask


def dealer_generate(p: int, T: int, points: Sequence[int], seed) -> Dealer:
    """A dealer whose randomness is a deterministic function of ``seed``."""
    if isinstance(seed, np.random.Generator):
        return Dealer(p, T, points, seed)
    return Dealer(p, T, points, np.random.default_rng(seed))


# --- interactive protocols --------------------------------------------------------------


_PRODUCTS: dict[str, Callable] = {
    "mul": lambda x, y: x * y,
    "matmul": lambda x, y: x @ y,
    "tmatmul": lambda x, y: x.T @ y,
}


def product_mul_count(kind: str, a_shape, b_shape) -> int:
    """Scalar multiplications performed by one local product."""
    if kind == "mul":
        return int(np.prod(np.broadcast_shapes(a_shape, b_shape)))
    return int(np.prod(a_shape) * (b_shape[1] if len(b_shape) > 1 else 1))


def local_product(a: ShareMatrix, b: ShareMatrix, kind: str = "mul") -> ShareMatrix:
    """Share-wise product; the result is a share of degree ``a.degree + b.degree``."""
    if a.point != b.point:
        raise SharingError("shares belong to different parties")
    try:
        op = _PRODUCTS[kind]
    except KeyError:
        raise ValueError(f"unknown product {kind!r}") from None
    return ShareMatrix(a.point, op(a.values, b.values), a.degree + b.degree)


def mul_secure(a_shares: Sequence[ShareMatrix], b_shares: Sequence[ShareMatrix], scheme: str,
               dealer: Dealer, net, tag: str, product: str = "mul",
               rng: np.random.Generator | None = None, count_as: str = "mpc") -> list[ShareMatrix]:
    """Degree-T sharing of ``a * b`` (element-wise), ``a @ b`` or ``a.T @ b``.

    ``a_shares`` and ``b_shares`` are the participants' shares, matched by
    point; the participants must number at least ``2T + 1``.
    """
    a_map, b_map = by_point(a_shares), by_point(b_shares)
    pts = sorted(a_map)
    if sorted(b_map) != pts:
        raise SharingError("operands are shared among different parties")
    T = a_shares[0].degree
    if any(s.degree != T for s in list(a_shares) + list(b_shares)):
        raise SharingError("mul_secure expects two degree-T sharings")
    if len(pts) < 2 * T + 1:
        raise ThresholdError(f"N = {len(pts)} < 2T+1 = {2 * T + 1}; degree-2T product is unrecoverable")
    p = a_shares[0].p
    local = {}
    for i in pts:
        local[i] = local_product(a_map[i], b_map[i], product)
        net.count_muls(i, product_mul_count(product, a_map[i].shape, b_map[i].shape), count_as)

    if scheme == BGW:
        if rng is None:
            rng = dealer.rng
        t_re = f"{tag}/bgw-reshare"
        own = {}
        for i in pts:
            pieces = by_point(share(local[i].values, T, pts, rng))
            own[i] = pieces[i]
            for j in pts:
                if j != i:
                    net.send(i, j, pieces[j], t_re)
        # one recombination set for everybody, else the outputs are not one sharing
        subset = sorted(net.fastest_subset(t_re, 2 * T + 1))
        w = lagrange_weights(tuple(subset), 0, p)
        out = []
        for j in pts:
            inbox = net.gather(j, t_re, senders=[i for i in subset if i != j])
            inbox[j] = own[j]
            acc = np.zeros(own[j].shape, dtype=np.int64)
            for wi, i in zip(w, subset):
                acc = (acc + wi * inbox[i].values.data) % p
            out.append(ShareMatrix(j, FieldMatrix._raw(acc, p, own[j].scale), T))
        return out

    if scheme == BH08:
        shape = local[pts[0]].shape
        scale = local[pts[0]].scale
        pair = dealer.rho_pair(shape, scale)
        t_open = f"{tag}/bh08-open"
        masked = {i: local[i].values - pair.shares_2T[i].values for i in pts}
        for i in pts:
            for j in pts:
                if j != i:
                    net.send(i, j, masked[i], t_open)
        out = []
        for j in pts:
            inbox = net.gather(j, t_open, need=2 * T)
            inbox[j] = masked[j]
            got = sorted(inbox)[: 2 * T + 1]
            opened = interpolate_at(got, [inbox[i].data for i in got], 0, p)
            res = pair.shares_T[j].values + FieldMatrix._raw(opened, p, scale)
            out.append(ShareMatrix(j, res, T))
        return out

    raise ValueError(f"unknown multiplication scheme {scheme!r}")


def open_value(shares: Sequence[ShareMatrix], net, tag: str) -> FieldMatrix:
    """Broadcast degree-T shares; every party interpolates the same value."""
    pts = [s.point for s in shares]
    T = shares[0].degree
    p = shares[0].p
    for s in shares:
        for j in pts:
            if j != s.point:
                net.send(s.point, j, s.values, tag)
    result = None
    for s in shares:
        inbox = net.gather(s.point, tag, need=T)
        inbox[s.point] = s.values
        got = sorted(inbox)[: T + 1]
        val = interpolate_at(got, [inbox[i].data for i in got], 0, p)
        if result is not None and not np.array_equal(val, result):
            raise SharingError("opened values disagree across parties")
        result = val
    return FieldMatrix._raw(result, p, shares[0].scale)


def check_truncation_params(k1: int, k2: int, p: int) -> None:
    if not 0 < k1 < k2:
        raise ValueError(f"truncation needs 0 < k1 < k2, got k1={k1}, k2={k2}")
    if 2**k2 + 2**k1 > p:
        raise ValueError(f"2^k2 + 2^k1 = {2**k2 + 2**k1} exceeds p = {p}; no room for the mask")


def truncate_secure(a_shares: Sequence[ShareMatrix], k1: int, k2: int, dealer: Dealer, net,
                    tag: str, guard: bool = True) -> list[ShareMatrix]:
    """Shares of ``floor(a / 2**k1) + u`` with ``u`` Bernoulli((a mod 2**k1) / 2**k1).

    ``a`` must lie in ``[-2**(k2-1), 2**(k2-1))``.  ``guard`` reconstructs ``a``
    inside the simulation to flag range violations that would otherwise
    silently corrupt the output; it plays no part in the protocol itself.
    """
    p = a_shares[0].p
    check_truncation_params(k1, k2, p)
    if guard:
        signed = phi_inv(reconstruct(a_shares).data, p)
        if np.any((signed >= 2 ** (k2 - 1)) | (signed < -(2 ** (k2 - 1)))):
            raise WrapAroundError(
                f"truncation input out of range: max |a| = {int(np.max(np.abs(signed)))} "
                f">= 2^(k2-1) = {2 ** (k2 - 1)}")
    shape = a_shares[0].shape
    mask = dealer.truncation_mask(shape, k1, k2)
    two_k1 = 2**k1
    offset = 2 ** (k2 - 1)
    masked = []
    for s in a_shares:
        r = (mask.high_shares[s.point].values.data * two_k1 + mask.low_shares[s.point].values.data) % p
        c = (s.values.data + offset + r) % p
        masked.append(ShareMatrix(s.point, FieldMatrix._raw(c, p, 0), s.degree))
    c = open_value(masked, net, f"{tag}/trunc-open").data
    c_low = c % two_k1
    inv2 = inv(two_k1, p)
    out = []
    for s in a_shares:
        # a' = c_low - r_lo ; result = (a - a') / 2^k1
        a_low = (c_low - mask.low_shares[s.point].values.data) % p
        d = (s.values.data - a_low) % p * inv2 % p
        out.append(ShareMatrix(s.point, FieldMatrix._raw(d, p, s.scale - k1), s.degree))
        net.count_muls(s.point, int(np.prod(shape)), "truncation")
    return out
