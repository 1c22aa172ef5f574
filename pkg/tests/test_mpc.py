import itertools
from collections import Counter

import numpy as np
import pytest

from copml.errors import SharingError, ThresholdError, WrapAroundError
from copml.field import FieldMatrix
from copml.mpc import (BGW, BH08, Dealer, ShareMatrix, add_local, dealer_generate, is_consistent,
                       mul_const_local, mul_secure, reconstruct, share, truncate_secure)
from copml.reference import stochastic_round
from copml.simulator import Network


def fm(values, p, scale=0):
    return FieldMatrix(np.asarray(values, dtype=np.int64), p, scale)


def scalar_shares(secret, p, T, N, rng):
    return share(fm([secret], p), T, range(1, N + 1), rng)


def test_share_example():
    shares = share(fm(5, 11), 1, [1, 2, 3], coeffs=[2])
    assert [s.values.data.item() for s in shares] == [7, 9, 0]
    assert all(s.degree == 1 for s in shares)


def test_share_zero_with_zero_coefficients():
    shares = share(fm([0, 0], 11), 2, [1, 2, 3, 4], coeffs=[0, 0])
    assert all(s.values.data.tolist() == [0, 0] for s in shares)


def test_share_preconditions():
    with pytest.raises(ThresholdError):
        share(fm(1, 11), 2, [1, 2], np.random.default_rng(0))
    with pytest.raises(SharingError):
        share(fm(1, 11), 1, [1, 1, 2], np.random.default_rng(0))
    with pytest.raises(SharingError):
        share(fm(1, 11), 1, [0, 1, 2], np.random.default_rng(0))


def test_reconstruct_examples():
    pair = [ShareMatrix(1, fm(7, 11), 1), ShareMatrix(3, fm(0, 11), 1)]
    assert reconstruct(pair).data.item() == 5
    assert reconstruct([ShareMatrix(4, fm(9, 11), 0)]).data.item() == 9
    with pytest.raises(SharingError):
        reconstruct(pair[:1])
    with pytest.raises(SharingError):
        reconstruct([pair[0], pair[0]])


@pytest.mark.parametrize("T, N", [(1, 3), (2, 5), (3, 7)])
def test_reconstruct_every_subset(T, N):
    rng = np.random.default_rng(T)
    A = fm(rng.integers(0, 101, (3, 2)), 101, 4)
    shares = share(A, T, range(1, N + 1), rng)
    for subset in itertools.combinations(shares, T + 1):
        assert reconstruct(list(subset)) == A


def test_local_ops_examples():
    rng = np.random.default_rng(0)
    a = scalar_shares(3, 11, 1, 3, rng)
    b = scalar_shares(4, 11, 1, 3, rng)
    neg = scalar_shares(8, 11, 1, 3, rng)
    zero = scalar_shares(0, 11, 1, 3, rng)
    assert reconstruct([add_local(x, y) for x, y in zip(a, b)]).data.tolist() == [7]
    assert reconstruct([add_local(x, y) for x, y in zip(a, neg)]).data.tolist() == [0]
    assert reconstruct([add_local(x, y) for x, y in zip(a, zero)]).data.tolist() == [3]
    five = scalar_shares(5, 11, 1, 3, rng)
    assert reconstruct([mul_const_local(x, 3) for x in five]).data.tolist() == [4]
    assert reconstruct([mul_const_local(x, 1) for x in five]).data.tolist() == [5]
    assert reconstruct([mul_const_local(x, 0) for x in five]).data.tolist() == [0]


def test_add_local_rejects_mismatches():
    a = ShareMatrix(1, fm(1, 11), 1)
    with pytest.raises(SharingError):
        add_local(a, ShareMatrix(2, fm(1, 11), 1))
    with pytest.raises(SharingError):
        add_local(a, ShareMatrix(1, fm(1, 11), 2))


def test_linearity_1000_trials():
    rng = np.random.default_rng(7)
    a, b = rng.integers(0, 101, 1000), rng.integers(0, 101, 1000)
    sa = share(fm(a, 101), 2, range(1, 6), rng)
    sb = share(fm(b, 101), 2, range(1, 6), rng)
    total = reconstruct([add_local(x, y) for x, y in zip(sa, sb)][2:])
    assert total.data.tolist() == ((a + b) % 101).tolist()


def _privacy_histograms(p, N, T):
    """For each secret, the joint histogram of every T-subset of shares over all coefficient choices."""
    grid = np.array(list(itertools.product(range(p), repeat=T)), dtype=np.int64)
    out = {}
    for secret in range(p):
        s = fm(np.full(len(grid), secret), p)
        shares = share(s, T, range(1, N + 1), coeffs=[grid[:, t] for t in range(T)])
        out[secret] = {
            sub: Counter(zip(*(shares[i - 1].values.data.tolist() for i in sub)))
            for sub in itertools.combinations(range(1, N + 1), T)
        }
    return out


@pytest.mark.parametrize("p, N, T", [(11, 3, 1), (13, 5, 2)])
def test_any_T_shares_are_uniform_and_secret_independent(p, N, T):
    hist = _privacy_histograms(p, N, T)
    uniform = Counter({v: 1 for v in itertools.product(range(p), repeat=T)})
    for secret, per_subset in hist.items():
        for sub, h in per_subset.items():
            assert h == uniform, (secret, sub)


@pytest.mark.parametrize("scheme", [BGW, BH08])
def test_mul_secure_examples(scheme):
    rng = np.random.default_rng(1)
    pts = [1, 2, 3]
    dealer = Dealer(11, 1, pts, rng)
    net = Network(pts, 11)
    a, b = scalar_shares(3, 11, 1, 3, rng), scalar_shares(4, 11, 1, 3, rng)
    out = mul_secure(a, b, scheme, dealer, net, "m1")
    assert reconstruct(out).data.tolist() == [1]
    assert all(s.degree == 1 for s in out)
    z = scalar_shares(0, 11, 1, 3, rng)
    assert reconstruct(mul_secure(a, z, scheme, dealer, net, "m2")).data.tolist() == [0]


@pytest.mark.parametrize("scheme", [BGW, BH08])
def test_mul_secure_output_has_degree_T(scheme):
    rng = np.random.default_rng(2)
    pts = list(range(1, 6))
    p, T = 65537, 2
    dealer = Dealer(p, T, pts, rng)
    a = share(fm(rng.integers(0, p, (2, 3)), p, 1), T, pts, rng)
    b = share(fm(rng.integers(0, p, (3, 2)), p, 2), T, pts, rng)
    out = mul_secure(a, b, scheme, dealer, Network(pts, p), "mm", product="matmul")
    expect = reconstruct(a) @ reconstruct(b)
    assert out[0].scale == 3
    for subset in itertools.combinations(out, T + 1):
        assert reconstruct(list(subset)) == expect
    assert is_consistent(out, T)
    bad = list(out)
    bad[-1] = ShareMatrix(bad[-1].point, bad[-1].values.add_const(1), T)
    assert not is_consistent(bad, T)


def test_mul_secure_needs_2T_plus_1_parties():
    rng = np.random.default_rng(3)
    pts = [1, 2, 3, 4]
    a = share(fm([1], 11), 2, pts, rng)
    with pytest.raises(ThresholdError):
        mul_secure(a, a, BH08, Dealer(11, 2, pts, rng), Network(pts, 11), "x")


def test_bgw_and_bh08_agree():
    rng = np.random.default_rng(4)
    pts = list(range(1, 8))
    p = 2**26 - 5
    a = share(fm(rng.integers(0, p, 200), p), 3, pts, rng)
    b = share(fm(rng.integers(0, p, 200), p), 3, pts, rng)
    res = {s: reconstruct(mul_secure(a, b, s, Dealer(p, 3, pts, rng), Network(pts, p), "t")) for s in (BGW, BH08)}
    assert res[BGW] == res[BH08] == reconstruct(a) * reconstruct(b)


def _truncate(values, k1, k2, p=2**26 - 5, seed=0, T=1, N=3):
    rng = np.random.default_rng(seed)
    pts = list(range(1, N + 1))
    dealer = Dealer(p, T, pts, rng)
    a = share(FieldMatrix.from_signed(np.asarray(values, dtype=np.int64), p, k1 + 2), T, pts, rng)
    out = truncate_secure(a, k1, k2, dealer, Network(pts, p), "tr")
    return reconstruct(out).signed(), out, dealer


def test_truncate_exact_multiple():
    z, out, _ = _truncate(np.full(2000, 8), 3, 10)
    assert set(z.tolist()) == {1}
    assert out[0].scale == 2


def test_truncate_distribution_13_over_4():
    z, _, _ = _truncate(np.full(100_000, 13), 2, 10, seed=5)
    assert set(z.tolist()) <= {3, 4}
    assert abs(z.mean() - 3.25) < 0.01


def test_truncate_matches_stochastic_rounding_with_dealer_bits():
    vals = np.random.default_rng(9).integers(-2**20, 2**20, 500)
    z, _, dealer = _truncate(vals, 7, 23, seed=9)
    np.testing.assert_array_equal(z, stochastic_round(vals, 7, dealer.masks[-1].low))


def test_truncate_range_and_parameter_errors():
    with pytest.raises(WrapAroundError):
        _truncate([2**9], 2, 10)
    with pytest.raises(ValueError):
        _truncate([1], 5, 5)
    with pytest.raises(ValueError):
        _truncate([1], 2, 4, p=11)


def test_dealer_consistency_and_determinism():
    pts = [1, 2, 3, 4, 5]
    d1, d2 = dealer_generate(101, 2, pts, 42), dealer_generate(101, 2, pts, 42)
    r1, r2 = d1.rho_pair((50,)), d2.rho_pair((50,))
    assert reconstruct(list(r1.shares_T.values())) == reconstruct(list(r1.shares_2T.values())) == r1.value
    assert r1.value == r2.value
    m1, m2 = d1.truncation_mask((4,), 3, 5), d2.truncation_mask((4,), 3, 5)
    assert m1.low.tolist() == m2.low.tolist()
    big = dealer_generate(2**26 - 5, 1, [1, 2, 3], 0)
    rhos = [int(big.rho_pair((1,)).value.data[0]) for _ in range(200)]
    assert len(set(rhos)) == len(rhos)
