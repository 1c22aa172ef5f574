from fractions import Fraction

import numpy as np
import pytest
from scipy.special import expit

from copml.errors import ApproximationError
from copml.field import FieldMatrix, QuantParams, dequantize, encode_constant, quantize
from copml.mpc import ShareMatrix, reconstruct, share
from copml.sigmoid import eval_poly_field, fit_report, fit_sigmoid

P = 2**26 - 5


def closed_form_slope(B=10.0, grid=1000):
    z = np.linspace(-B, B, grid)
    return float(np.sum(z * (expit(z) - 0.5)) / np.sum(z * z))


def test_degree_one_coefficients():
    a = fit_sigmoid(1, 10.0, 1000)
    assert a.real_coeffs[0] == pytest.approx(0.5, abs=1e-12)
    assert a.real_coeffs[1] > 0
    assert a.real_coeffs[1] == pytest.approx(closed_form_slope(), rel=1e-12)


def test_degree_one_max_error_matches_independent_oracle():
    a = fit_sigmoid()
    z = np.linspace(-5, 5, 100_001)
    oracle = np.max(np.abs(0.5 + closed_form_slope() * z - expit(z)))
    assert a.max_error(-5, 5) == pytest.approx(oracle, abs=1e-12)
    assert a.max_error(-5, 5) == pytest.approx(0.2430, abs=5e-4)


@pytest.mark.xfail(strict=True, reason="a degree-1 least-squares fit on [-10, 10] errs by ~0.243 on [-5, 5]")
def test_degree_one_error_within_0_12():
    assert fit_sigmoid().max_error(-5, 5) <= 0.12


def test_higher_degrees_fit_better():
    errs = [fit_sigmoid(r).max_error() for r in (1, 3, 5)]
    assert errs == sorted(errs, reverse=True)


def test_fit_preconditions():
    with pytest.raises(ApproximationError):
        fit_sigmoid(0)
    with pytest.raises(ApproximationError):
        fit_sigmoid(1, B=0)
    with pytest.raises(ApproximationError):
        fit_sigmoid(3, grid=39)
    with pytest.raises(ApproximationError):
        fit_sigmoid(15)


def test_eval_at_zero_is_constant_term():
    a = fit_sigmoid(1, l_c=6)
    z = FieldMatrix.zeros((2, 1), P, 4)
    out = eval_poly_field(a, z)
    assert out.scale == 6 + 4
    assert out.data.ravel().tolist() == [encode_constant(a.real_coeffs[0], 10, P)] * 2
    assert abs(dequantize(out)[0, 0] - 0.5) <= 2.0 ** -6


def test_degree_one_matches_scalar_fixed_point():
    a = fit_sigmoid(1, l_c=5)
    zq = np.array([-37, -1, 0, 4, 100])
    out = eval_poly_field(a, FieldMatrix.from_signed(zq, P, 3))
    c0 = round(0.5 * 2**8)
    c1 = int(np.floor(a.real_coeffs[1] * 2**5 + 0.5))
    assert out.signed().tolist() == (c0 + c1 * zq).tolist()


@pytest.mark.parametrize("r, l_c, l_x, B", [(1, 8, 8, 10.0), (3, 4, 4, 3.0)])
def test_field_eval_equals_quantized_polynomial_exactly(r, l_c, l_x, B):
    a = fit_sigmoid(r, l_c=l_c)
    zq = quantize(np.random.default_rng(r).uniform(-B, B, 50), QuantParams(l_x, P))
    got = dequantize(eval_poly_field(a, zq))
    cs = [Fraction(int(c if c <= P // 2 else c - P), 2 ** (l_c + (r - i) * l_x))
          for i, c in enumerate(a.field_coeffs(l_x, P))]
    for g, z in zip(got, zq.signed()):
        zf = Fraction(int(z), 2**l_x)
        assert g == float(sum(c * zf**i for i, c in enumerate(cs)))


def test_field_eval_close_to_real_polynomial_near_zero():
    l = 8
    a = fit_sigmoid(1, l_c=l)
    z0 = np.random.default_rng(0).uniform(-3, 3, 500)
    got = dequantize(eval_poly_field(a, quantize(z0, QuantParams(l, P))))
    assert np.max(np.abs(got - a(z0))) <= 2.0 ** (-l + 1)


@pytest.mark.xfail(strict=True, reason="the top coefficient carries only l_c fractional bits, "
                   "so the error grows like |z| * 2^-(l_c+1) and exceeds 2^-(l_c-1) beyond |z| ~ 4")
def test_field_eval_close_to_real_polynomial_on_full_interval():
    l = 8
    a = fit_sigmoid(1, l_c=l)
    z0 = np.random.default_rng(1).uniform(-10, 10, 500)
    got = dequantize(eval_poly_field(a, quantize(z0, QuantParams(l, P))))
    assert np.max(np.abs(got - a(z0))) <= 2.0 ** (-l + 1)


@pytest.mark.parametrize("r, T, N", [(1, 1, 3), (3, 1, 4), (1, 2, 5)])
def test_eval_commutes_with_reconstruction(r, T, N):
    rng = np.random.default_rng(0)
    a = fit_sigmoid(r, l_c=3)
    z = FieldMatrix.from_signed(rng.integers(-20, 20, (4, 1)), P, 2)
    shares = share(z, T, range(1, N + 1), rng)
    local = [eval_poly_field(a, s.values) for s in shares]
    deg = r * T
    got = reconstruct([ShareMatrix(s.point, v, deg) for s, v in zip(shares, local)])
    assert got == eval_poly_field(a, z)


def test_fit_report_fields():
    rep = fit_report(fit_sigmoid())
    assert rep["degree"] == 1
    assert rep["interval"] == [-10.0, 10.0]
    assert rep["max_abs_error"]["value"] == pytest.approx(0.2430, abs=5e-4)
