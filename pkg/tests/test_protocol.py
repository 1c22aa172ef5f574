from dataclasses import replace

import numpy as np
import pytest

from copml.datasets import make_separable, split_among_parties
from copml.errors import ThresholdError
from copml.field import FieldMatrix
from copml.lagrange import recovery_threshold
from copml.mpc import ShareMatrix, is_consistent, reconstruct
from copml.protocol import (BASELINE_BGW, BASELINE_BH08, COPML, EncodedShard, ProtocolConfig, Session,
                            baseline_T, case_params, setup, train)
from copml.reference import accuracy, field_gradient, fixed_point_step, gradient_descent
from copml.simulator import LatencyModel


def data(m=40, d=3, seed=0):
    return make_separable(m, d, seed=seed)


def session(cfg, X, y, **kw):
    return setup(cfg, split_among_parties(X, y, cfg.n_parties), keep_trace=True, **kw)


@pytest.mark.parametrize("N, case, expected", [(50, 1, (16, 1)), (50, 2, (10, 7)), (4, 1, (1, 1)), (13, 1, (4, 1)),
                                               (9, 2, (2, 1))])
def test_case_params(N, case, expected):
    K, T = case_params(N, case)
    assert (K, T) == expected
    assert N >= recovery_threshold(1, K, T)


def test_case_params_errors():
    with pytest.raises(ThresholdError):
        case_params(3, 1)
    with pytest.raises(ThresholdError):
        case_params(7, 2)  # T = 0
    with pytest.raises(ValueError):
        case_params(10, 3)


def test_baseline_T_matches_three_group_formula():
    for N in range(3, 60):
        assert baseline_T(N) == (N - 3) // 6


def test_config_invariants_report_inequality():
    with pytest.raises(ThresholdError, match=r"N >= \(2r\+1\)\(K\+T-1\)\+1"):
        ProtocolConfig(n_parties=6, K=2, T=1)
    with pytest.raises(ThresholdError, match=r"G\*\(2T\+1\) <= N"):
        ProtocolConfig(n_parties=8, T=1, scheme=BASELINE_BH08)
    with pytest.raises(ValueError):
        ProtocolConfig(n_parties=4, scheme="spdz")
    ProtocolConfig(n_parties=4)


def test_truncation_defaults():
    cfg = ProtocolConfig(n_parties=4, l_x=3, l_c=3, eta=1.0)
    k1, k2, c = cfg.truncation(1000)
    assert cfg.grad_scale == 3 + 2 * 3 + 3
    assert k2 == 24
    assert k1 == cfg.grad_scale - 3 + 10
    assert c == 1
    assert replace(cfg, eta=0.0).truncation(1000)[2] == 0


def test_setup_xty_matches_field_product():
    X, y = data()
    cfg = ProtocolConfig(n_parties=4, K=1, T=1, iterations=0)
    s = session(cfg, X, y)
    Xq, yq = s._prepare(X, y)
    assert reconstruct([p.xty for p in s.parties][:2]) == Xq.T @ yq
    assert s.reveal_model_field() == FieldMatrix.zeros((3, 1), cfg.p, cfg.l_x)


def test_setup_is_deterministic():
    X, y = data()
    cfg = ProtocolConfig(n_parties=7, K=2, T=1, init="uniform", seed=11)
    a, b = session(cfg, X, y), session(cfg, X, y)
    for pa, pb in zip(a.parties, b.parties):
        assert pa.shard.data == pb.shard.data
        assert pa.w.values == pb.w.values
        assert pa.xty.values == pb.xty.values
    assert np.any(a.reveal_model() != 0)


def test_shards_have_one_Kth_of_the_rows():
    X, y = data(m=41)
    cfg = ProtocolConfig(n_parties=10, K=3, T=1)
    s = session(cfg, X, y)
    assert {p.shard.data.shape for p in s.parties} == {(14, 3)}


def test_zero_learning_rate_keeps_model():
    X, y = data()
    cfg = ProtocolConfig(n_parties=4, eta=0.0, init="uniform", seed=3)
    s = session(cfg, X, y)
    w0 = s.reveal_model_field()
    s.run(2)
    assert s.reveal_model_field() == w0


@pytest.mark.parametrize("scheme, N, K, T, r", [
    (COPML, 4, 1, 1, 1),
    (COPML, 7, 2, 1, 1),
    (COPML, 10, 2, 2, 1),
    (COPML, 8, 1, 1, 3),
    (BASELINE_BH08, 9, 1, 1, 1),
    (BASELINE_BGW, 9, 1, 1, 1),
    (BASELINE_BH08, 15, 1, 2, 1),
    (BASELINE_BGW, 9, 1, 1, 3),
])
def test_iterations_match_fixed_point_oracle(scheme, N, K, T, r):
    X, y = data(m=8, d=3, seed=N + r)
    lx = 3 if r == 1 else 2
    cfg = ProtocolConfig(n_parties=N, K=K, T=T, r=r, l_x=lx, scheme=scheme, seed=7)
    s = session(cfg, X, y)
    Xq, yq = s._prepare(X, y)
    for _ in range(3):
        w = s.reveal_model_field()
        s.step()
        grad = field_gradient(Xq, yq, w, s.approx)
        assert reconstruct(s.trace["gradient"][: T + 1]) == grad
        assert s.reveal_model_field() == fixed_point_step(w, grad, s.eta_const, s.k1, s.dealer.masks[-1].low)


def test_all_parties_hold_consistent_model_shares():
    X, y = data()
    s = session(ProtocolConfig(n_parties=10, K=2, T=2), X, y)
    s.run(2)
    assert is_consistent([p.w for p in s.parties], 2)


def test_stragglers_do_not_change_the_update():
    X, y = data(m=30)
    cfg = ProtocolConfig(n_parties=9, K=2, T=1, seed=2, iterations=3)  # threshold 7
    runs = []
    for slow in ([], [8, 9], [1, 4]):
        s = session(cfg, X, y, latency=LatencyModel.stragglers(slow) if slow else None)
        s.run()
        runs.append((s.reveal_model_field(), s.trace["decoding_set"]))
    assert runs[0][0] == runs[1][0] == runs[2][0]
    assert sorted(runs[1][1]) == [1, 2, 3, 4, 5, 6, 7]
    assert sorted(runs[2][1]) == [2, 3, 5, 6, 7, 8, 9]


def test_bgw_and_bh08_baselines_agree():
    X, y = data(m=30)
    models = []
    for scheme in (BASELINE_BGW, BASELINE_BH08):
        r = train(ProtocolConfig(n_parties=9, T=1, scheme=scheme, iterations=4, seed=1), (X, y))
        models.append(r.model)
    assert models[0] == models[1]


def test_single_group_baseline_matches_oracle():
    X, y = data(m=12)
    cfg = ProtocolConfig(n_parties=3, T=1, groups=1, scheme=BASELINE_BH08, seed=4)
    s = session(cfg, X, y)
    Xq, yq = s._prepare(X, y)
    w = s.reveal_model_field()
    s.step()
    grad = field_gradient(Xq, yq, w, s.approx)
    assert s.reveal_model_field() == fixed_point_step(w, grad, s.eta_const, s.k1, s.dealer.masks[-1].low)


def test_baseline_work_is_one_Gth_of_the_plaintext_gradient():
    m, d = 90, 5
    X, y = data(m=m, d=d)
    s = session(ProtocolConfig(n_parties=9, T=1, scheme=BASELINE_BH08), X, y)
    s.step()
    snap = s.net.snapshot()
    plaintext = 2 * m * d + m
    for i in s.points:
        assert snap[i]["muls"]["gradient"] == pytest.approx(plaintext / 3, rel=0.10)


def test_doubling_K_halves_gradient_work():
    X, y = data(m=120, d=6)
    counts = {}
    for K in (2, 4):
        s = session(ProtocolConfig(n_parties=13, K=K, T=1), X, y)
        s.step()
        counts[K] = np.mean([v["muls"]["gradient"] for v in s.net.snapshot().values()])
    assert counts[4] == pytest.approx(counts[2] / 2, rel=0.10)


def test_parties_hold_only_shares_and_shards():
    X, y = data()
    s = session(ProtocolConfig(n_parties=7, K=2, T=1), X, y)
    s.run(2)
    assert s._inputs is None
    for p in s.parties:
        for name, value in vars(p).items():
            if name in ("index", "group", "rng"):
                continue
            items = value.values() if isinstance(value, dict) else [value]
            for v in items:
                assert isinstance(v, (ShareMatrix, EncodedShard)), (name, type(v))


def test_subgroup_encoding_saves_bytes_without_changing_results():
    X, y = data(m=40)
    cfg = ProtocolConfig(n_parties=10, K=2, T=2, iterations=2, seed=5)
    full, sub = session(cfg, X, y), session(replace(cfg, subgroup_encoding=True), X, y)
    for s in (full, sub):
        s.run()
    assert full.reveal_model_field() == sub.reveal_model_field()
    enc = lambda s: sum(m.nbytes for m in s.net.transcript if m.tag == "setup/encode-data")
    assert enc(sub) < enc(full)


def test_train_small_separable_problem():
    (X, y), test = make_separable(200, 2, seed=3, m_test=100)
    cfg = ProtocolConfig(n_parties=7, K=2, T=1, iterations=50, seed=0)
    res = train(cfg, (X, y), test=test)
    assert len(res.metrics) == 50
    w_ref, _ = gradient_descent(X, y, cfg.eta, 50)
    assert res.metrics[-1].train_acc >= 0.95
    assert res.metrics[-1].train_acc >= accuracy(w_ref, X, y) - 0.02
    assert res.metrics[-1].loss < res.initial_loss
    bytes_total = [m.bytes_total for m in res.metrics]
    assert bytes_total == sorted(bytes_total)


def test_zero_iterations_return_initial_model():
    X, y = data()
    res = train(ProtocolConfig(n_parties=4, iterations=0, init="uniform", seed=8), (X, y))
    assert res.metrics == []
    s = session(ProtocolConfig(n_parties=4, iterations=0, init="uniform", seed=8), X, y)
    assert res.model == s.reveal_model_field()


def test_train_accepts_per_party_lists():
    X, y = data(m=20)
    parts = split_among_parties(X, y, 4)
    a = train(ProtocolConfig(n_parties=4, iterations=2), parts)
    b = train(ProtocolConfig(n_parties=4, iterations=2), (X, y))
    assert a.model == b.model


def test_session_rejects_wrong_party_count():
    X, y = data()
    with pytest.raises(ValueError):
        Session(ProtocolConfig(n_parties=4), split_among_parties(X, y, 3))
