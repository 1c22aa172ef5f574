"""End-to-end training: COPML and the subgroup MPC baselines.

Fixed-point scales (``s`` = scale exponent, r = polynomial degree):

=====================  ==============================
features ``X``         ``l_x``
model ``w``            ``l_x``
``X w``                ``2 l_x``
``g(X w)``, labels     ``l_c + 2 r l_x``
gradient               ``l_c + 2 r l_x + l_x``
=====================  ==============================

The update multiplies the shared gradient by the public integer
``c = round(eta/m * 2**(k1 + l_x - s_grad))`` and truncates ``k1`` bits,
which lands the step back at scale ``l_x``.  When not given, ``k1`` is
``s_grad - l_x + ceil(log2(m/eta)) + eta_bits`` and ``k2`` is
``bitlen(p) - 2``.

A :class:`Session` drives every party through the rounds in lock-step on a
shared :class:`~copml.simulator.Network`.  Party objects hold nothing but
shares and encoded shards; reconstructing the model for metrics happens in
:meth:`Session.reveal_model`, outside the protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from copml import lagrange
from copml.errors import ThresholdError
from copml.field import (DEFAULT_PRIME, FieldMatrix, FieldPrime, QuantParams, dequantize,
                         encode_constant, quantize, round_half_up)
from copml.lagrange import CodingPoints, recovery_threshold
from copml.mpc import (BGW, BH08, Dealer, ShareMatrix, add_public, by_point, check_truncation_params,
                       lagrange_weights, linear_combination, mul_const_local, mul_secure, reconstruct,
                       share, sub_local, truncate_secure)
from copml.reference import accuracy, cross_entropy
from copml.sigmoid import PolyApprox, eval_poly_field, fit_sigmoid
from copml.simulator import LatencyModel, Network

COPML = "copml"
BASELINE_BGW = "baseline_bgw"
BASELINE_BH08 = "baseline_bh08"
SCHEMES = (COPML, BASELINE_BGW, BASELINE_BH08)


def case_params(N: int, case: int) -> tuple[int, int]:
    """(K, T) for the two experimental set-ups with r = 1.

    Case 1 spends every extra party on parallelization, case 2 splits them
    roughly evenly between parallelization and privacy.
    """
    if N < 4:
        raise ThresholdError(f"need N >= 4, got {N}")
    if case == 1:
        K, T = (N - 1) // 3, 1
    elif case == 2:
        T = (N - 3) // 6
        K = (N + 2) // 3 - T
    else:
        raise ValueError(f"case must be 1 or 2, got {case}")
    if K < 1 or T < 1 or N < recovery_threshold(1, K, T):
        raise ThresholdError(f"N={N}, case {case} gives K={K}, T={T}, which is not a legal configuration")
    return K, T


def baseline_T(N: int, groups: int = 3) -> int:
    """Largest T with ``groups`` subgroups of size ``2T+1`` inside N parties."""
    return (N // groups - 1) // 2


def _as_rows(X, y) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X.reshape(len(np.ravel(y)), -1) if X.ndim != 2 else X


@dataclass(frozen=True)
class ProtocolConfig:
    n_parties: int
    K: int = 1
    T: int = 1
    r: int = 1
    p: int = DEFAULT_PRIME
    l_x: int = 3
    l_c: int | None = None
    k1: int | None = None
    k2: int | None = None
    eta: float = 1.0
    iterations: int = 50
    seed: int = 0
    scheme: str = COPML
    mpc: str = BH08
    groups: int = 3
    fit_interval: float = 10.0
    grid_points: int = 1000
    init: str = "zero"
    eta_bits: int = 0
    subgroup_encoding: bool = False

    def __post_init__(self):
        FieldPrime(self.p)
        if self.l_c is None:
            object.__setattr__(self, "l_c", self.l_x)
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.mpc not in (BGW, BH08):
            raise ValueError(f"mpc must be {BGW!r} or {BH08!r}, got {self.mpc!r}")
        if self.init not in ("zero", "uniform"):
            raise ValueError("init must be 'zero' or 'uniform'")
        if self.T < 1 or self.K < 1 or self.r < 1:
            raise ThresholdError("T, K and r must all be at least 1")
        if self.eta < 0 or self.iterations < 0:
            raise ValueError("eta and iterations must be non-negative")
        N = self.n_parties
        if self.scheme == COPML:
            need = recovery_threshold(self.r, self.K, self.T)
            if N < need:
                raise ThresholdError(
                    f"N >= (2r+1)(K+T-1)+1 violated: N = {N} < {need} for r={self.r}, K={self.K}, T={self.T}")
            if self.mpc and N < 2 * self.T + 1:
                raise ThresholdError(f"secure multiplication needs N >= 2T+1 = {2 * self.T + 1}")
        else:
            if self.groups < 1 or self.groups * (2 * self.T + 1) > N:
                raise ThresholdError(
                    f"G*(2T+1) <= N violated: {self.groups}*{2 * self.T + 1} > {N}")

    @property
    def threshold(self) -> int:
        return recovery_threshold(self.r, self.K, self.T)

    @property
    def label_scale(self) -> int:
        return self.l_c + 2 * self.r * self.l_x

    @property
    def grad_scale(self) -> int:
        return self.label_scale + self.l_x

    def truncation(self, m: int) -> tuple[int, int, int]:
        """``(k1, k2, c)`` for a training set of ``m`` samples."""
        k2 = self.k2 if self.k2 is not None else self.p.bit_length() - 2
        if self.k1 is not None:
            k1 = self.k1
        elif self.eta > 0:
            k1 = self.grad_scale - self.l_x + math.ceil(math.log2(m / self.eta)) + self.eta_bits
        else:
            k1 = max(1, self.grad_scale - self.l_x)
        check_truncation_params(k1, k2, self.p)
        c = int(round_half_up(math.ldexp(self.eta / m, k1 + self.l_x - self.grad_scale)))
        if self.eta > 0 and c < 1:
            raise ValueError(f"k1 = {k1} too small to represent eta/m = {self.eta / m:g}")
        return k1, k2, c

    @property
    def coding_points(self) -> CodingPoints:
        return CodingPoints.default(self.K, self.T, self.n_parties, self.p)

    @property
    def group_members(self) -> list[list[int]]:
        size = 2 * self.T + 1
        return [list(range(g * size + 1, (g + 1) * size + 1)) for g in range(self.groups)]


@dataclass(frozen=True, eq=False)
class EncodedShard:
    """A party's Lagrange-encoded block (masked, safe to hold in the clear)."""

    party: int
    data: FieldMatrix
    kind: str = "dataset"


class Party:
    """Local state of one participant; only shares and encoded shards live here."""

    def __init__(self, index: int, rng: np.random.Generator):
        self.index = index
        self.rng = rng
        self.data_shares: dict[int, ShareMatrix] = {}
        self.label_shares: dict[int, ShareMatrix] = {}
        self.shard: EncodedShard | None = None
        self.model_shard: EncodedShard | None = None
        self.xty: ShareMatrix | None = None
        self.w: ShareMatrix | None = None
        self.group: int | None = None

    def __repr__(self):
        return f"Party({self.index})"


@dataclass
class IterationMetrics:
    t: int
    loss: float
    train_acc: float
    test_acc: float | None
    bytes: int
    messages: int
    field_muls: int
    bytes_total: int
    muls_total: int
    per_party: dict = field(default_factory=dict, repr=False)

    def row(self) -> dict:
        return {
            "t": self.t,
            "loss": self.loss,
            "train_acc": self.train_acc,
            "test_acc": "" if self.test_acc is None else self.test_acc,
            "bytes": self.bytes,
            "field_muls": self.field_muls,
        }


class Session:
    """State of one simulated training run."""

    def __init__(self, config: ProtocolConfig, datasets: Sequence[tuple], latency: LatencyModel | None = None,
                 test=None, keep_trace: bool = False, guard: bool = True):
        datasets = list(datasets)
        if len(datasets) != config.n_parties:
            raise ValueError(f"expected {config.n_parties} per-party datasets, got {len(datasets)}")
        self.config = config
        cfg = config
        self.points = list(range(1, cfg.n_parties + 1))
        inputs = [self._prepare(X, y) for X, y in datasets]
        real = [(_as_rows(X, y), np.ravel(y))
                if not isinstance(X, FieldMatrix) else (dequantize(X), dequantize(y).reshape(-1))
                for X, y in datasets]
        dims = {X.shape[1] for X, _ in inputs if X.shape[0]}
        if len(dims) != 1:
            raise ValueError("all parties need the same non-zero feature dimension")
        self.d = dims.pop()
        self.m = sum(y.shape[0] for _, y in inputs)
        if cfg.scheme != COPML and self.m < cfg.groups:
            raise ValueError(f"{self.m} samples cannot fill {cfg.groups} subgroups")
        ss = np.random.SeedSequence(cfg.seed)
        dealer_ss, trunc_ss, reshare_ss, *party_ss = ss.spawn(cfg.n_parties + 3)
        self.dealer = Dealer(cfg.p, cfg.T, self.points, np.random.default_rng(dealer_ss),
                             np.random.default_rng(trunc_ss))
        # randomness of BGW re-sharing, kept apart so BH08 runs see the same dealer stream
        self.reshare_rng = np.random.default_rng(reshare_ss)
        self.parties = [Party(i, np.random.default_rng(s)) for i, s in zip(self.points, party_ss)]
        self.net = Network(self.points, cfg.p, latency)
        self.approx: PolyApprox = fit_sigmoid(cfg.r, cfg.fit_interval, cfg.grid_points, cfg.l_c)
        self.guard = guard
        self.keep_trace = keep_trace
        self.trace: dict = {}
        self.t = 0
        self.history: list[IterationMetrics] = []
        self._truncation = None
        # plaintext inputs are consumed by setup and dropped
        self._inputs = inputs
        self._observer = {"X": np.concatenate([X for X, _ in real]),
                          "y": np.concatenate([y for _, y in real]), "test": test}

    def _prepare(self, X, y) -> tuple[FieldMatrix, FieldMatrix]:
        """Quantize one owner's data; field inputs are taken as already encoded
        (``X`` at ``l_x``, ``y`` at the label scale)."""
        cfg = self.config
        if isinstance(X, FieldMatrix):
            if X.p != cfg.p or X.scale != cfg.l_x or y.p != cfg.p or y.scale != cfg.label_scale:
                raise ValueError("pre-encoded inputs must match the configured prime and scales")
            return X, y.reshape(-1, 1)
        y = np.asarray(y).reshape(-1)
        X = _as_rows(X, y)
        Xq = quantize(X, QuantParams(cfg.l_x, cfg.p))
        yq = FieldMatrix.from_signed(y.astype(np.int64).reshape(-1, 1) << cfg.label_scale,
                                     cfg.p, cfg.label_scale)
        return Xq, yq

    @property
    def truncation(self) -> tuple[int, int, int]:
        """``(k1, k2, c)``; validated on first use so that tiny test fields can
        still run the gradient phase."""
        if self._truncation is None:
            self._truncation = self.config.truncation(self.m)
        return self._truncation

    @property
    def k1(self) -> int:
        return self.truncation[0]

    @property
    def k2(self) -> int:
        return self.truncation[1]

    @property
    def eta_const(self) -> int:
        return self.truncation[2]

    def party(self, i: int) -> Party:
        return self.parties[i - 1]

    # --- observer (metrics only) ---------------------------------------------------

    def reveal_model_field(self) -> FieldMatrix:
        return reconstruct([p.w for p in self.parties][: self.config.T + 1])

    def reveal_model(self) -> np.ndarray:
        return dequantize(self.reveal_model_field()).reshape(-1)

    def reveal(self, shares: Sequence[ShareMatrix]) -> FieldMatrix:
        return reconstruct(list(shares))

    def _metrics(self, t: int, before: dict) -> IterationMetrics:
        w = self.reveal_model()
        X, y, test = self._observer["X"], self._observer["y"], self._observer["test"]
        snap = self.net.snapshot()
        nbytes = sum(v["bytes_sent"] for v in snap.values())
        msgs = sum(v["messages_sent"] for v in snap.values())
        muls = sum(sum(v["muls"].values()) for v in snap.values())
        return IterationMetrics(
            t=t,
            loss=cross_entropy(w, X, y),
            train_acc=accuracy(w, X, y),
            test_acc=None if test is None else accuracy(w, *test),
            bytes=nbytes - before["bytes"],
            messages=msgs - before["messages"],
            field_muls=muls - before["muls"],
            bytes_total=nbytes,
            muls_total=muls,
            per_party=snap,
        )

    def _totals(self) -> dict:
        snap = self.net.snapshot()
        return {
            "bytes": sum(v["bytes_sent"] for v in snap.values()),
            "messages": sum(v["messages_sent"] for v in snap.values()),
            "muls": sum(sum(v["muls"].values()) for v in snap.values()),
        }

    def initial_loss(self) -> float:
        return cross_entropy(self.reveal_model(), self._observer["X"], self._observer["y"])

    # --- protocol ------------------------------------------------------------------

    def _init_model(self):
        cfg = self.config
        if cfg.init == "zero":
            for p in self.parties:
                p.w = ShareMatrix(p.index, FieldMatrix.zeros((self.d, 1), cfg.p, cfg.l_x), cfg.T)
            return
        init = self.dealer.rng.uniform(-0.5, 0.5, size=(self.d, 1))
        shares = self.dealer.fixed_point_sharing(round_half_up(np.ldexp(init, cfg.l_x)), cfg.l_x)
        for p in self.parties:
            p.w = shares[p.index]

    def _reshare_to(self, shares_of: dict, senders, receivers, tag: str, need=None):
        """Each sender ships piece ``shares_of[sender][receiver]``; returns inbox per receiver."""
        for i in senders:
            for j in receivers:
                if i != j:
                    self.net.send(i, j, shares_of[i][j], tag)
        out = {}
        for j in receivers:
            if need is None:
                inbox = self.net.gather(j, tag, senders=[i for i in senders if i != j])
            else:
                own = 1 if j in senders else 0
                inbox = self.net.gather(j, tag, need=need - own)
            if j in senders:
                inbox[j] = shares_of[j][j]
            out[j] = inbox
        return out

    def setup(self) -> "Session":
        cfg = self.config
        if cfg.scheme == COPML:
            self._setup_copml()
        else:
            self._setup_baseline()
        self._inputs = None
        return self

    def _share_inputs(self, quantized, destinations):
        """Owners secret-share row slices of their data; ``destinations[j]`` lists
        ``(key, row_slice, member_points)`` for owner ``j``."""
        cfg = self.config
        tag = "setup/share-data"
        for j, (Xq, yq) in enumerate(quantized, start=1):
            owner = self.party(j)
            for key, rows, members in destinations[j]:
                xs = by_point(share(FieldMatrix._raw(Xq.data[rows], cfg.p, Xq.scale), cfg.T, members, owner.rng))
                ys = by_point(share(FieldMatrix._raw(yq.data[rows], cfg.p, yq.scale), cfg.T, members, owner.rng))
                for i in members:
                    if i == j:
                        owner.data_shares[(j, key)] = xs[i]
                        owner.label_shares[(j, key)] = ys[i]
                    else:
                        self.net.send(j, i, (xs[i], ys[i]), f"{tag}/{key}")
        for j in range(1, cfg.n_parties + 1):
            for key, rows, members in destinations[j]:
                for i in members:
                    if i != j:
                        xs_i, ys_i = self.net.recv(i, f"{tag}/{key}", j)
                        self.party(i).data_shares[(j, key)] = xs_i
                        self.party(i).label_shares[(j, key)] = ys_i

    def _stack(self, party: Party, key, store: dict, cols: int, scale: int) -> ShareMatrix:
        keys = sorted(k for k in store if k[1] == key)
        cfg = self.config
        data = [store[k].values.data for k in keys]
        data = np.concatenate(data) if data else np.zeros((0, cols), dtype=np.int64)
        return ShareMatrix(party.index, FieldMatrix._raw(data, cfg.p, scale), cfg.T)

    def _setup_copml(self):
        cfg = self.config
        K, T = cfg.K, cfg.T
        quantized = self._inputs
        everyone = self.points
        self._share_inputs(quantized, {j: [("all", slice(None), everyone)] for j in everyone})
        self._init_model()

        rows = self.m + (-self.m) % K
        block = (rows // K, self.d)
        pts = cfg.coding_points
        noise = [self.dealer.random_sharing(block, cfg.l_x) for _ in range(T)]
        encoded = {}
        for p in self.parties:
            Xi = self._stack(p, "all", p.data_shares, self.d, cfg.l_x)
            blocks = lagrange.partition_rows(lagrange.pad_rows(Xi, K), K)
            targets = self._encode_targets(p.index)
            enc = lagrange.encode_dataset_shares(blocks, [z[p.index] for z in noise], pts)
            encoded[p.index] = {j: enc[j - 1] for j in targets}
            self.net.count_muls(p.index, (K + T) * len(targets) * block[0] * block[1], "encode")
        tag = "setup/encode-data"
        for i in everyone:
            for j, piece in encoded[i].items():
                if j != i:
                    self.net.send(i, j, piece, tag)
        for j in everyone:
            own = 1 if j in encoded[j] else 0
            inbox = self.net.gather(j, tag, need=T + 1 - own)
            if own:
                inbox[j] = encoded[j][j]
            got = [inbox[i] for i in sorted(inbox)]
            self.party(j).shard = EncodedShard(j, reconstruct(got, T), "dataset")

        a = [self._stack(p, "all", p.data_shares, self.d, cfg.l_x) for p in self.parties]
        b = [self._stack(p, "all", p.label_shares, 1, cfg.label_scale) for p in self.parties]
        xty = mul_secure(a, b, cfg.mpc, self.dealer, self.net, "setup/xty", product="tmatmul",
                         rng=self.reshare_rng)
        for s in xty:
            self.party(s.point).xty = s
        if self.keep_trace:
            self.trace["xty"] = xty

    def _encode_targets(self, i: int) -> list[int]:
        """Encoded blocks party ``i`` computes: all of them, or a cyclic window of
        ``T+1`` receivers when subgroup encoding is on."""
        cfg = self.config
        N = cfg.n_parties
        if not cfg.subgroup_encoding:
            return list(self.points)
        return [((i - 1 - s) % N) + 1 for s in range(cfg.T + 1)]

    def _setup_baseline(self):
        cfg = self.config
        G = cfg.groups
        quantized = self._inputs
        rows = self.m + (-self.m) % G
        per = rows // G
        self.group_rows = per
        starts = np.cumsum([0] + [y.shape[0] for _, y in self._inputs])
        members = cfg.group_members
        dest = {}
        for j in self.points:
            lo, hi = starts[j - 1], starts[j]
            dest[j] = []
            for g in range(G):
                a, b = max(lo, g * per), min(hi, (g + 1) * per)
                if a < b:
                    dest[j].append((f"g{g}", slice(a - lo, b - lo), members[g]))
        self._share_inputs(quantized, dest)
        self._init_model()
        self.xty_groups = []
        for g, mem in enumerate(members):
            for i in mem:
                self.party(i).group = g
            Xg = [lagrange.pad_rows(self._stack(self.party(i), f"g{g}", self.party(i).data_shares,
                                                self.d, cfg.l_x), per) for i in mem]
            yg = [lagrange.pad_rows(self._stack(self.party(i), f"g{g}", self.party(i).label_shares,
                                                1, cfg.label_scale), per) for i in mem]
            xty = mul_secure(Xg, yg, self._baseline_mpc, self.dealer, self.net, f"setup/xty-g{g}",
                             product="tmatmul", rng=self.reshare_rng)
            for s in xty:
                self.party(s.point).xty = s

    @property
    def _baseline_mpc(self) -> str:
        return BGW if self.config.scheme == BASELINE_BGW else BH08

    # --- iterations ------------------------------------------------------------------

    def step(self) -> IterationMetrics:
        before = self._totals()
        if self.config.scheme == COPML:
            grads = copml_gradient(self, self.t)
        else:
            grads = baseline_gradient(self, self.t)
        update_model(self, grads, self.t)
        metrics = self._metrics(self.t, before)
        self.history.append(metrics)
        self.t += 1
        return metrics

    def run(self, iterations: int | None = None) -> list[IterationMetrics]:
        J = self.config.iterations if iterations is None else iterations
        for _ in range(J):
            self.step()
        return self.history


def copml_gradient(s: Session, t: int) -> list[ShareMatrix]:
    """Shares of ``X^T (g(X w) - y)`` computed over the encoded data."""
    cfg = s.config
    K, T, N = cfg.K, cfg.T, cfg.n_parties
    pts = cfg.coding_points
    tag = f"it{t}"
    noise = [s.dealer.random_sharing((s.d, 1), cfg.l_x) for _ in range(T)]
    enc = {}
    for p in s.parties:
        e = lagrange.encode_model_shares(p.w, [v[p.index] for v in noise], pts)
        enc[p.index] = {j: e[j - 1] for j in s.points}
        s.net.count_muls(p.index, (K + T) * N * s.d, "encode")
    inbox = s._reshare_to(enc, s.points, s.points, f"{tag}/encode-model", need=T + 1)
    results = {}
    for p in s.parties:
        got = [inbox[p.index][i] for i in sorted(inbox[p.index])]
        w_enc = reconstruct(got, T)
        p.model_shard = EncodedShard(p.index, w_enc, "model")
        Xe = p.shard.data
        z = Xe @ w_enc
        gz = eval_poly_field(s.approx, z)
        f = Xe.T @ gz
        s.net.count_muls(p.index, 2 * Xe.size + cfg.r * z.size, "gradient")
        results[p.index] = by_point(share(f, T, s.points, p.rng))
    res_tag = f"{tag}/local-result"
    for i in s.points:
        for j in s.points:
            if i != j:
                s.net.send(i, j, results[i][j], res_tag)
    fastest = s.net.fastest_subset(res_tag, cfg.threshold)
    if s.keep_trace:
        s.trace["decoding_set"] = fastest
    grads = []
    for p in s.parties:
        got = s.net.gather(p.index, res_tag, senders=[j for j in fastest if j != p.index])
        if p.index in fastest:
            got[p.index] = results[p.index][p.index]
        items = [(j - 1, got[j]) for j in fastest]
        sub = lagrange.decode_gradient_shares(items, pts, cfg.r, K, T)
        s.net.count_muls(p.index, K * len(items) * s.d, "decode")
        total = lagrange.aggregate_subgradients(sub, K)
        grads.append(sub_local(total, p.xty))
    if s.keep_trace:
        s.trace["gradient"] = grads
    return grads


def _poly_on_shares(s: Session, z: list[ShareMatrix], members, tag: str) -> list[ShareMatrix]:
    cfg = s.config
    cs = s.approx.field_coeffs(z[0].scale, cfg.p)
    r = len(cs) - 1
    acc = [ShareMatrix(x.point, x.values.scalar_mul(cs[r]).with_scale(s.approx.l_c + x.scale), x.degree)
           for x in z]
    acc = [add_public(a, cs[r - 1]) for a in acc]
    for x in z:
        s.net.count_muls(x.point, x.values.size, "gradient")
    for i in range(r - 2, -1, -1):
        acc = mul_secure(acc, z, s._baseline_mpc, s.dealer, s.net, f"{tag}/horner{i}",
                         product="mul", rng=s.reshare_rng, count_as="gradient")
        acc = [add_public(a, cs[i]) for a in acc]
    return acc


def baseline_gradient(s: Session, t: int) -> list[ShareMatrix]:
    """Each subgroup computes its sub-gradient under MPC; results are re-shared to all."""
    cfg = s.config
    T = cfg.T
    scheme = s._baseline_mpc
    tag = f"it{t}"
    total = {i: None for i in s.points}
    for g, mem in enumerate(cfg.group_members):
        gt = f"{tag}/g{g}"
        Xg = [s._stack(s.party(i), f"g{g}", s.party(i).data_shares, s.d, cfg.l_x) for i in mem]
        Xg = [lagrange.pad_rows(x, s.group_rows) for x in Xg]
        wg = [s.party(i).w for i in mem]
        z = mul_secure(Xg, wg, scheme, s.dealer, s.net, f"{gt}/xw", product="matmul",
                       rng=s.reshare_rng, count_as="gradient")
        gz = _poly_on_shares(s, z, mem, gt)
        xg = mul_secure(Xg, gz, scheme, s.dealer, s.net, f"{gt}/xtg", product="tmatmul",
                        rng=s.reshare_rng, count_as="gradient")
        sub = {x.point: sub_local(x, s.party(x.point).xty) for x in xg}
        pieces = {i: by_point(share(sub[i].values, T, s.points, s.party(i).rng)) for i in mem}
        rt = f"{gt}/reshare"
        for i in mem:
            for j in s.points:
                if i != j:
                    s.net.send(i, j, pieces[i][j], rt)
        use = sorted(s.net.fastest_subset(rt, T + 1))
        wts = lagrange_weights(tuple(use), 0, cfg.p)
        for j in s.points:
            got = s.net.gather(j, rt, senders=[i for i in use if i != j])
            if j in use:
                got[j] = pieces[j][j]
            part = linear_combination([got[i] for i in use], wts)
            total[j] = part if total[j] is None else ShareMatrix(j, total[j].values + part.values, T)
    grads = [total[i] for i in s.points]
    if s.keep_trace:
        s.trace["gradient"] = grads
    return grads


def update_model(s: Session, grads: list[ShareMatrix], t: int) -> None:
    """``w <- w - trunc(c * grad, k1)`` on shares."""
    cfg = s.config
    scaled = []
    for g in grads:
        x = mul_const_local(g, s.eta_const)
        # c stands for eta/m at scale k1 + l_x - s_grad
        scaled.append(ShareMatrix(x.point, x.values.with_scale(s.k1 + cfg.l_x), x.degree))
        s.net.count_muls(g.point, g.values.size, "update")
    step = truncate_secure(scaled, s.k1, s.k2, s.dealer, s.net, f"it{t}", guard=s.guard)
    for st in step:
        p = s.party(st.point)
        p.w = sub_local(p.w, st)


def setup(config: ProtocolConfig, datasets, latency: LatencyModel | None = None, test=None,
          **kw) -> Session:
    """Secret-share, encode and prepare all parties; returns the live session."""
    return Session(config, datasets, latency, test, **kw).setup()


def copml_iteration(session: Session) -> IterationMetrics:
    if session.config.scheme != COPML:
        raise ValueError("session is not configured for copml")
    return session.step()


def baseline_iteration(session: Session) -> IterationMetrics:
    if session.config.scheme == COPML:
        raise ValueError("session is not configured for a baseline")
    return session.step()


@dataclass
class TrainResult:
    weights: np.ndarray
    model: FieldMatrix
    initial_loss: float
    metrics: list[IterationMetrics]
    session: Session = field(repr=False)
    k1: int = 0
    k2: int = 0


def train(config: ProtocolConfig, dataset, test=None, latency: LatencyModel | None = None,
          **kw) -> TrainResult:
    """Run ``config.iterations`` rounds and recover the final model.

    ``dataset`` is either ``(X, y)``, split evenly across the parties, or a
    list of per-party ``(X_j, y_j)``.
    """
    from copml.datasets import split_among_parties

    if isinstance(dataset, tuple) and len(dataset) == 2 and np.ndim(dataset[1]) == 1:
        parts = split_among_parties(dataset[0], dataset[1], config.n_parties)
    else:
        parts = list(dataset)
    s = setup(config, parts, latency, test, **kw)
    loss0 = s.initial_loss()
    s.run()
    return TrainResult(s.reveal_model(), s.reveal_model_field(), loss0, s.history, s, s.k1, s.k2)


def with_case(config: ProtocolConfig, case: int) -> ProtocolConfig:
    K, T = case_params(config.n_parties, case)
    return replace(config, K=K, T=T)
