"""Polynomial stand-in for the logistic sigmoid.

The coefficients come from an ordinary least-squares fit on a uniform grid
over ``[-B, B]``.  In the field, the polynomial is evaluated with Horner's
rule; coefficient ``c_i`` is quantized at scale ``l_c + (r - i) * s`` where
``s`` is the scale of the argument, so every partial sum lines up and the
result sits at scale ``l_c + r * s``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from copml.errors import ApproximationError
from copml.field import FieldMatrix, encode_constant

sigmoid = expit

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class PolyApprox:
    degree: int
    real_coeffs: tuple[float, ...]
    fit_interval: float
    grid_points: int
    l_c: int = 8

    def __call__(self, z):
        """Real-valued evaluation."""
        return np.polynomial.polynomial.polyval(np.asarray(z, dtype=np.float64), self.real_coeffs)

    def field_coeffs(self, z_scale: int, p: int) -> list[int]:
        r = self.degree
        return [encode_constant(c, self.l_c + (r - i) * z_scale, p)
                for i, c in enumerate(self.real_coeffs)]

    def output_scale(self, z_scale: int) -> int:
        return self.l_c + self.degree * z_scale

    def max_error(self, lo: float = -5.0, hi: float = 5.0, samples: int = 100_001) -> float:
        z = np.linspace(lo, hi, samples)
        return float(np.max(np.abs(self(z) - sigmoid(z))))


def fit_sigmoid(r: int = 1, B: float = 10.0, grid: int = 1000, l_c: int = 8) -> PolyApprox:
    """Least-squares fit of a degree-``r`` polynomial to the sigmoid on ``[-B, B]``."""
    if r < 1:
        raise ApproximationError("degree must be at least 1")
    if not B > 0:
        raise ApproximationError("fit interval half-width must be positive")
    if grid < 10 * (r + 1):
        raise ApproximationError(f"grid of {grid} points is too coarse for degree {r}")
    z = np.linspace(-B, B, grid)
    V = np.vander(z, r + 1, increasing=True)
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise ApproximationError(f"ill-conditioned fit (condition number {cond:.3g})")
    coeffs, *_ = np.linalg.lstsq(V, sigmoid(z), rcond=None)
    return PolyApprox(r, tuple(float(c) for c in coeffs), float(B), int(grid), l_c)


def eval_poly_field(approx: PolyApprox, z: FieldMatrix) -> FieldMatrix:
    """Horner evaluation of the polynomial on field values at ``z.scale``."""
    p = z.p
    cs = approx.field_coeffs(z.scale, p)
    acc = FieldMatrix._raw(np.full(z.shape, cs[-1], dtype=np.int64), p, approx.l_c)
    for c in reversed(cs[:-1]):
        acc = (acc * z).add_const(c)
    return acc


def fit_report(approx: PolyApprox, lo: float = -5.0, hi: float = 5.0) -> dict:
    return {
        "degree": approx.degree,
        "interval": [-approx.fit_interval, approx.fit_interval],
        "grid_points": approx.grid_points,
        "coefficients": list(approx.real_coeffs),
        "coefficient_scale_bits": approx.l_c,
        "max_abs_error": {"interval": [lo, hi], "value": approx.max_error(lo, hi)},
    }
