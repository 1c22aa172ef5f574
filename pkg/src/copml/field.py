"""Prime-field arithmetic with fixed-point bookkeeping.

Real numbers enter the field through ``quantize``: scale by ``2**l_x``, round
half-up, then embed signed integers with a two's-complement style map
(negatives live in the upper half of ``[0, p)``).  Every :class:`FieldMatrix`
remembers the power-of-two exponent it is scaled by, so products and sums can
be checked for consistency at runtime.

Storage is ``int64``; products of two reduced elements fit because ``p < 2**31``.
Matrix products accumulate in ``uint64`` and reduce once per inner product
whenever ``inner * (p - 1)**2 <= 2**64 - 1``; longer inner dimensions are
split into chunks that individually respect that bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from sympy import isprime

from copml.errors import FieldError, ScaleMismatchError, WrapAroundError

DEFAULT_PRIME = 2**26 - 5
UINT64_MAX = 2**64 - 1


@lru_cache(maxsize=None)
def _checked_prime(p: int) -> int:
    if not isinstance(p, (int, np.integer)) or p < 3:
        raise FieldError(f"modulus must be an integer >= 3, got {p!r}")
    p = int(p)
    if p >= 2**31:
        raise FieldError(f"modulus {p} must be below 2**31")
    if not isprime(p):
        raise FieldError(f"modulus {p} is not prime")
    return p


def max_inner_dim(p: int) -> int:
    """Longest inner product that can be accumulated in uint64 before reduction."""
    return UINT64_MAX // (p - 1) ** 2


@dataclass(frozen=True)
class FieldPrime:
    """A prime modulus below ``2**31``.

    ``dim`` optionally pins the feature dimension so that the single-reduction
    inner-product bound ``dim * (p-1)**2 <= 2**64 - 1`` can be validated up front.
    """

    p: int = DEFAULT_PRIME
    dim: int | None = None

    def __post_init__(self):
        _checked_prime(self.p)
        if self.dim is not None and self.dim * (self.p - 1) ** 2 > UINT64_MAX:
            raise FieldError(
                f"d*(p-1)^2 = {self.dim}*({self.p}-1)^2 exceeds 2^64-1; "
                "inner products would overflow before reduction"
            )

    @property
    def half(self) -> int:
        return (self.p - 1) // 2

    def __int__(self):
        return self.p


def _as_int(p) -> int:
    return int(p.p) if isinstance(p, FieldPrime) else int(p)


@dataclass(frozen=True)
class QuantParams:
    """Fractional bit count and modulus used to quantize one dataset."""

    l_x: int
    p: int = DEFAULT_PRIME

    def __post_init__(self):
        if self.l_x < 0:
            raise FieldError("l_x must be non-negative")
        _checked_prime(_as_int(self.p))

    def check_range(self, max_abs: float) -> None:
        """Enforce ``p >= 2**(l_x+1) * max|x| + 1`` for the data being quantized."""
        p = _as_int(self.p)
        need = 2 ** (self.l_x + 1) * max_abs + 1
        if p < need:
            raise WrapAroundError(
                f"p = {p} < 2^(l_x+1)*max|x|+1 = {need:g}; quantization would wrap around"
            )


def round_half_up(x):
    """Round to nearest integer; exact halves go up (``2.5 -> 3``, ``-2.5 -> -2``)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise FieldError("cannot round non-finite values")
    fl = np.floor(x)
    out = np.where(x - fl < 0.5, fl, fl + 1).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def phi(x, p):
    """Embed signed integers in ``[0, p)``: non-negatives map to themselves,
    negatives to ``p + x``."""
    p = _as_int(p)
    arr = np.asarray(x, dtype=np.int64)
    if np.any(np.abs(arr) > (p - 1) // 2):
        raise WrapAroundError(f"value of magnitude > (p-1)/2 = {(p - 1) // 2} cannot be embedded")
    out = np.where(arr >= 0, arr, arr + p)
    return int(out) if out.ndim == 0 else out


def phi_inv(a, p):
    """Inverse of :func:`phi` on ``[0, p)``."""
    p = _as_int(p)
    arr = np.asarray(a, dtype=np.int64)
    if np.any((arr < 0) | (arr >= p)):
        raise FieldError("field elements must lie in [0, p)")
    out = np.where(arr <= (p - 1) // 2, arr, arr - p)
    return int(out) if out.ndim == 0 else out


def inv(a: int, p: int) -> int:
    a %= p
    if a == 0:
        raise FieldError("zero has no inverse")
    return pow(a, -1, p)


def _mod_matmul(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    inner = a.shape[-1]
    step = max_inner_dim(p)
    au = a.astype(np.uint64, copy=False)
    bu = b.astype(np.uint64, copy=False)
    if inner <= step:
        return (au @ bu % np.uint64(p)).astype(np.int64)
    acc = None
    for lo in range(0, inner, step):
        part = au[..., lo:lo + step] @ bu[lo:lo + step] % np.uint64(p)
        acc = part if acc is None else (acc + part) % np.uint64(p)
    return acc.astype(np.int64)


@dataclass(frozen=True, eq=False)
class FieldMatrix:
    """Array of elements of F_p tagged with a fixed-point scale exponent.

    An entry ``a`` at scale ``e`` stands for the real ``phi_inv(a) / 2**e``.
    Addition requires matching scales, multiplication adds them.  Pure field
    constants (Lagrange weights, public coefficients) carry scale 0.
    """

    data: np.ndarray
    p: int
    scale: int = 0

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.int64)
        if np.any((arr < 0) | (arr >= self.p)):
            raise FieldError("entries must lie in [0, p)")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "p", _as_int(self.p))

    @classmethod
    def zeros(cls, shape, p: int, scale: int = 0) -> "FieldMatrix":
        return cls(np.zeros(shape, dtype=np.int64), p, scale)

    @classmethod
    def from_signed(cls, values, p: int, scale: int = 0) -> "FieldMatrix":
        return cls(phi(np.asarray(values), p), p, scale)

    @classmethod
    def _raw(cls, data: np.ndarray, p: int, scale: int) -> "FieldMatrix":
        # skips the range check for arrays already reduced mod p
        obj = object.__new__(cls)
        data = np.ascontiguousarray(data, dtype=np.int64)
        data.setflags(write=False)
        object.__setattr__(obj, "data", data)
        object.__setattr__(obj, "p", p)
        object.__setattr__(obj, "scale", scale)
        return obj

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "FieldMatrix":
        return FieldMatrix._raw(self.data.T, self.p, self.scale)

    def _check(self, other: "FieldMatrix", *, same_scale: bool):
        if not isinstance(other, FieldMatrix):
            raise TypeError(f"expected FieldMatrix, got {type(other).__name__}")
        if other.p != self.p:
            raise FieldError(f"moduli differ: {self.p} vs {other.p}")
        if same_scale and other.scale != self.scale:
            raise ScaleMismatchError(f"cannot add scale {self.scale} to scale {other.scale}")

    def __add__(self, other: "FieldMatrix") -> "FieldMatrix":
        self._check(other, same_scale=True)
        return FieldMatrix._raw((self.data + other.data) % self.p, self.p, self.scale)

    def __sub__(self, other: "FieldMatrix") -> "FieldMatrix":
        self._check(other, same_scale=True)
        return FieldMatrix._raw((self.data - other.data) % self.p, self.p, self.scale)

    def __neg__(self) -> "FieldMatrix":
        return FieldMatrix._raw((-self.data) % self.p, self.p, self.scale)

    def __mul__(self, other: "FieldMatrix") -> "FieldMatrix":
        """Element-wise (broadcasting) product; scales add."""
        self._check(other, same_scale=False)
        return FieldMatrix._raw(self.data * other.data % self.p, self.p, self.scale + other.scale)

    def __matmul__(self, other: "FieldMatrix") -> "FieldMatrix":
        return matmul(self, other)

    def scalar_mul(self, c: int) -> "FieldMatrix":
        """Multiply by a public field constant (scale unchanged)."""
        return FieldMatrix._raw(self.data * (int(c) % self.p) % self.p, self.p, self.scale)

    def add_const(self, c: int) -> "FieldMatrix":
        """Add a public field constant assumed to be at this matrix's scale."""
        return FieldMatrix._raw((self.data + int(c) % self.p) % self.p, self.p, self.scale)

    def with_scale(self, scale: int) -> "FieldMatrix":
        return FieldMatrix._raw(self.data, self.p, scale)

    def reshape(self, *shape) -> "FieldMatrix":
        return FieldMatrix._raw(self.data.reshape(*shape), self.p, self.scale)

    def signed(self) -> np.ndarray:
        return phi_inv(self.data, self.p)

    def __eq__(self, other):
        if not isinstance(other, FieldMatrix):
            return NotImplemented
        return (
            self.p == other.p
            and self.scale == other.scale
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )

    __hash__ = None

    def __repr__(self):
        return f"FieldMatrix(shape={self.shape}, p={self.p}, scale={self.scale})"


def matmul(a: FieldMatrix, b: FieldMatrix) -> FieldMatrix:
    """Matrix product mod p; the result scale is ``a.scale + b.scale``."""
    a._check(b, same_scale=False)
    if a.data.ndim == 0 or b.data.ndim == 0 or a.shape[-1] != b.shape[0]:
        raise FieldError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return FieldMatrix._raw(_mod_matmul(a.data, b.data, a.p), a.p, a.scale + b.scale)


def quantize(x, q: QuantParams, *, check: bool = True) -> FieldMatrix:
    """Map reals to F_p as ``phi(round_half_up(2**l_x * x))`` at scale ``l_x``."""
    x = np.asarray(x, dtype=np.float64)
    p = _as_int(q.p)
    if check and x.size:
        q.check_range(float(np.max(np.abs(x))))
    ints = np.asarray(round_half_up(np.ldexp(x, q.l_x)))
    return FieldMatrix._raw(np.asarray(phi(ints, p)), p, q.l_x)


def dequantize(a: FieldMatrix) -> np.ndarray:
    """Real values ``phi_inv(a) / 2**scale``."""
    return np.ldexp(np.asarray(a.signed(), dtype=np.float64), -a.scale)


def encode_constant(value: float, scale: int, p: int) -> int:
    """Field encoding of one real at a given scale."""
    return int(phi(round_half_up(math.ldexp(value, scale)), p))


def uniform(rng: np.random.Generator, shape, p: int) -> np.ndarray:
    return rng.integers(0, p, size=shape, dtype=np.int64)
