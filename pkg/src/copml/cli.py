"""Command-line driver: ``copml {fit-sigmoid,train,baseline,bench,replay-transcript}``.

Every run writes its artifacts into ``--out`` through temporary files that are
renamed only once the run has succeeded, so a failed run never leaves partial
metrics behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from copml import __version__
from copml.datasets import load_dataset, make_separable, split_among_parties
from copml.errors import CopmlError
from copml.field import DEFAULT_PRIME
from copml.protocol import (BASELINE_BGW, BASELINE_BH08, COPML, ProtocolConfig, baseline_T, case_params,
                            setup, train)
from copml.reference import accuracy, cross_entropy, gradient_descent
from copml.sigmoid import fit_report, fit_sigmoid
from copml.simulator import LatencyModel, load_transcript, summarize_transcript

METRICS_SCHEMA = 1
METRICS_FIELDS = ("t", "loss", "train_acc", "test_acc", "bytes", "field_muls")


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _commit(out: Path, files: dict[str, str]) -> None:
    """Write every artifact to a temp file first, then rename them all."""
    out.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=out, prefix=f".{name}.", suffix=".tmp")
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, out / name))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, dest in staged:
        os.replace(tmp, dest)


def metrics_csv(metrics) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=METRICS_FIELDS, lineterminator="\n")
    w.writeheader()
    for m in metrics:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in m.row().items()})
    return buf.getvalue()


def model_csv(weights, field_values) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "weight", "field_value"])
    for i, (x, f) in enumerate(zip(weights, field_values)):
        w.writerow([i, repr(float(x)), int(f)])
    return buf.getvalue()


# --- argument parsing -------------------------------------------------------------------


def _config_flags(parser: argparse.ArgumentParser, baseline: bool) -> None:
    g = parser.add_argument_group("protocol")
    g.add_argument("--n", type=int, required=True, help="number of parties N")
    g.add_argument("--T", type=int, help="privacy threshold")
    if not baseline:
        g.add_argument("--K", type=int, help="parallelization parameter")
        g.add_argument("--case", type=int, choices=(1, 2), help="derive (K, T) from N")
        g.add_argument("--mpc", choices=("bgw", "bh08"), default="bh08",
                       help="multiplication protocol for the X^T y product (default bh08)")
        g.add_argument("--subgroup-encoding", action="store_true",
                       help="send each encoded block to a window of T+1 parties only")
    else:
        g.add_argument("--scheme", choices=("bgw", "bh08"), default="bh08")
        g.add_argument("--groups", type=int, default=3, help="number of subgroups G")
    g.add_argument("--r", type=int, default=1, help="sigmoid polynomial degree")
    g.add_argument("--p", type=int, default=DEFAULT_PRIME, help="field prime")
    g.add_argument("--lx", type=int, default=3, help="fractional bits of data and model")
    g.add_argument("--lc", type=int, help="fractional bits of the polynomial coefficients (default lx)")
    g.add_argument("--k1", type=int, help="truncation shift (default from the scale pipeline)")
    g.add_argument("--k2", type=int, help="truncation range bits (default bitlen(p)-2)")
    g.add_argument("--eta", type=float, default=1.0, help="learning rate")
    g.add_argument("--eta-bits", type=int, default=0, help="extra precision bits for eta/m")
    g.add_argument("--iterations", "-J", type=int, default=50)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--init", choices=("zero", "uniform"), default="zero")
    g.add_argument("--fit-interval", type=float, default=10.0)
    g.add_argument("--grid-points", type=int, default=1000)
    g.add_argument("--straggler", type=int, action="append", default=[],
                   help="party index given a huge network delay (repeatable)")
    d = parser.add_argument_group("data and output")
    d.add_argument("--data", type=Path, help="training CSV (features..., label)")
    d.add_argument("--test", type=Path, help="test CSV, normalized with the training bounds")
    d.add_argument("--synthetic", metavar="M,D", help="use a separable synthetic set instead of --data")
    d.add_argument("--synthetic-test", type=int, default=0, metavar="M", help="held-out synthetic samples")
    d.add_argument("--out", type=Path, help="output directory")
    d.add_argument("--transcript", action="store_true", help="also dump the message transcript")
    d.add_argument("--reference", action="store_true", help="also run plaintext float logistic regression")
    d.add_argument("--dry-run", action="store_true", help="print the resolved configuration and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="copml", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fs = sub.add_parser("fit-sigmoid", help="fit the polynomial sigmoid and report its error")
    fs.add_argument("--r", type=int, default=1)
    fs.add_argument("--interval", type=float, default=10.0, help="half-width B of the fit interval")
    fs.add_argument("--grid", type=int, default=1000)
    fs.add_argument("--lc", type=int, default=8)
    fs.add_argument("--error-range", type=float, default=5.0, help="report max error on [-R, R]")
    fs.add_argument("--out", type=Path, help="write the report here instead of stdout")

    _config_flags(sub.add_parser("train", help="train with coded secret-shared logistic regression"), False)
    _config_flags(sub.add_parser("baseline", help="train with a subgroup MPC baseline"), True)

    b = sub.add_parser("bench", help="per-party cost of one iteration, coded vs baseline")
    b.add_argument("--n", type=int, nargs="+", default=[13, 25])
    b.add_argument("--case", type=int, choices=(1, 2), default=1)
    b.add_argument("--m", type=int, default=600)
    b.add_argument("--d", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--lx", type=int, default=3)
    b.add_argument("--out", type=Path, help="write the CSV table here instead of stdout")

    rt = sub.add_parser("replay-transcript", help="re-aggregate counters from a transcript dump")
    rt.add_argument("transcript", type=Path)
    rt.add_argument("--check", type=Path, help="summary.json whose per-party counters must match")
    return parser


def _resolve_config(args, baseline: bool) -> ProtocolConfig:
    common = dict(
        n_parties=args.n, r=args.r, p=args.p, l_x=args.lx, l_c=args.lc, k1=args.k1, k2=args.k2,
        eta=args.eta, eta_bits=args.eta_bits, iterations=args.iterations, seed=args.seed, init=args.init,
        fit_interval=args.fit_interval, grid_points=args.grid_points,
    )
    if baseline:
        T = args.T if args.T is not None else baseline_T(args.n, args.groups)
        scheme = BASELINE_BGW if args.scheme == "bgw" else BASELINE_BH08
        return ProtocolConfig(T=T, scheme=scheme, groups=args.groups, **common)
    if args.case is not None:
        if args.K is not None or args.T is not None:
            raise ValueError("--case derives K and T; do not pass them as well")
        K, T = case_params(args.n, args.case)
    else:
        K = 1 if args.K is None else args.K
        T = 1 if args.T is None else args.T
    return ProtocolConfig(K=K, T=T, scheme=COPML, mpc=args.mpc,
                          subgroup_encoding=args.subgroup_encoding, **common)


def _load_data(args):
    if args.synthetic:
        try:
            m, d = (int(v) for v in args.synthetic.split(","))
        except ValueError:
            raise ValueError("--synthetic expects M,D") from None
        if args.synthetic_test:
            (X, y), test = make_separable(m, d, seed=args.seed, m_test=args.synthetic_test)
        else:
            (X, y), test = make_separable(m, d, seed=args.seed), None
        return X, y, test, {"synthetic": [m, d], "synthetic_test": args.synthetic_test}
    if args.data is None:
        raise ValueError("give --data or --synthetic")
    X, y, bounds = load_dataset(args.data)
    test = None
    if args.test is not None:
        Xt, yt, _ = load_dataset(args.test, bounds)
        test = (Xt, yt)
    return X, y, test, {"data": str(args.data), "test": None if args.test is None else str(args.test)}


def _run_training(args, baseline: bool) -> int:
    cfg = _resolve_config(args, baseline)
    echo = f"N={cfg.n_parties} K={cfg.K} T={cfg.T} r={cfg.r} scheme={cfg.scheme}"
    if cfg.scheme == COPML:
        echo += f" threshold={cfg.threshold}"
    print(echo)
    if args.dry_run:
        print(json.dumps(asdict(cfg), sort_keys=True))
        return 0
    if args.out is None:
        raise ValueError("--out is required")
    X, y, test, source = _load_data(args)
    latency = LatencyModel.stragglers(args.straggler) if args.straggler else None
    result = train(cfg, (np.asarray(X), np.asarray(y)), test=test, latency=latency)
    session = result.session
    snap = session.net.snapshot()
    final = result.metrics[-1] if result.metrics else None
    summary = {
        "metrics_schema": METRICS_SCHEMA,
        "version": __version__,
        "config": asdict(cfg),
        "seed": cfg.seed,
        "source": source,
        "m": session.m,
        "d": session.d,
        "k1": session.k1,
        "k2": session.k2,
        "eta_constant": session.eta_const,
        "initial_loss": result.initial_loss,
        "final": None if final is None else final.row(),
        "total_bytes": sum(v["bytes_sent"] for v in snap.values()),
        "per_party": {str(k): v for k, v in snap.items()},
        "transcript_sha256": session.net.transcript_hash(),
    }
    if args.reference:
        w_ref, _ = gradient_descent(X, y, cfg.eta, cfg.iterations)
        summary["reference"] = {
            "loss": cross_entropy(w_ref, X, y),
            "train_acc": accuracy(w_ref, X, y),
            "test_acc": None if test is None else accuracy(w_ref, *test),
        }
    files = {
        "metrics.csv": metrics_csv(result.metrics),
        "model.csv": model_csv(result.weights, result.model.data.reshape(-1)),
        "summary.json": json.dumps(summary, indent=2, sort_keys=True) + "\n",
    }
    if args.transcript:
        buf = io.StringIO()
        session.net.dump_transcript(buf)
        files["transcript.jsonl"] = buf.getvalue()
    _commit(args.out, files)
    if final is not None:
        test_part = "" if final.test_acc is None else f" test_acc={final.test_acc:.4f}"
        print(f"t={final.t} loss={final.loss:.4f} train_acc={final.train_acc:.4f}{test_part}")
    print(f"wrote {', '.join(sorted(files))} to {args.out}")
    return 0


def _run_fit(args) -> int:
    approx = fit_sigmoid(args.r, args.interval, args.grid, args.lc)
    text = json.dumps(fit_report(approx, -args.error_range, args.error_range), indent=2) + "\n"
    if args.out:
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def _per_party_gradient_muls(session, members) -> float:
    snap = session.net.snapshot()
    return float(np.mean([snap[i]["muls"].get("gradient", 0) for i in members]))


def _run_bench(args) -> int:
    X, y = make_separable(args.m, args.d, seed=args.seed)
    rows = []
    for n in args.n:
        K, T = case_params(n, args.case)
        parts = split_among_parties(X, y, n)
        coded = setup(ProtocolConfig(n_parties=n, K=K, T=T, l_x=args.lx, seed=args.seed), parts)
        setup_bytes = coded.net.snapshot()
        m1 = coded.step()
        rows.append({
            "scheme": COPML, "N": n, "K": K, "T": T,
            "setup_bytes_per_party": np.mean([v["bytes_sent"] for v in setup_bytes.values()]),
            "iteration_bytes": m1.bytes,
            "gradient_muls_per_party": _per_party_gradient_muls(coded, coded.points),
        })
        Tb = baseline_T(n)
        if Tb < 1:
            continue
        for scheme in (BASELINE_BGW, BASELINE_BH08):
            base = setup(ProtocolConfig(n_parties=n, T=Tb, l_x=args.lx, seed=args.seed, scheme=scheme), parts)
            setup_bytes = base.net.snapshot()
            m1 = base.step()
            members = [i for g in base.config.group_members for i in g]
            rows.append({
                "scheme": scheme, "N": n, "K": "", "T": Tb,
                "setup_bytes_per_party": np.mean([v["bytes_sent"] for v in setup_bytes.values()]),
                "iteration_bytes": m1.bytes,
                "gradient_muls_per_party": _per_party_gradient_muls(base, members),
            })
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: f"{v:.1f}" if isinstance(v, float) else v for k, v in r.items()})
    if args.out:
        _write_atomic(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def _run_replay(args) -> int:
    with args.transcript.open() as fh:
        summary = summarize_transcript(load_transcript(fh))
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.check:
        expected = json.loads(args.check.read_text())["per_party"]
        bad = []
        for k, v in expected.items():
            got = summary["parties"].get(int(k), {})
            for key in ("messages_sent", "bytes_sent", "messages_received", "bytes_received"):
                if got.get(key, 0) != v[key]:
                    bad.append(f"party {k} {key}: transcript {got.get(key, 0)} != summary {v[key]}")
        if bad:
            print("\n".join(bad), file=sys.stderr)
            return 1
        print("counters match", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fit-sigmoid":
            return _run_fit(args)
        if args.command in ("train", "baseline"):
            return _run_training(args, args.command == "baseline")
        if args.command == "bench":
            return _run_bench(args)
        return _run_replay(args)
    except (CopmlError, ValueError, OSError) as exc:
        print(f"copml: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
