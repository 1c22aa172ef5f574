import csv
import json

import pytest

from copml.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_case_flag_echoes_K_and_T(capsys):
    code, out, _ = run(capsys, "train", "--case", "1", "--n", "50", "--dry-run")
    assert code == 0
    assert "K=16 T=1" in out
    code, out, _ = run(capsys, "train", "--case", "2", "--n", "50", "--dry-run")
    assert "K=10 T=7" in out


def test_train_writes_artifacts_deterministically(tmp_path, capsys):
    args = ["train", "--n", "7", "--K", "2", "--T", "1", "--synthetic", "120,4", "--synthetic-test", "40",
            "-J", "50", "--transcript", "--reference"]
    assert run(capsys, *args, "--out", tmp_path / "a")[0] == 0
    assert run(capsys, *args, "--out", tmp_path / "b")[0] == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    rows = list(csv.DictReader((a / "metrics.csv").open()))
    assert len(rows) == 50
    assert list(rows[0]) == ["t", "loss", "train_acc", "test_acc", "bytes", "field_muls"]
    summary = json.loads((a / "summary.json").read_text())
    assert summary["seed"] == 0 and summary["config"]["K"] == 2
    assert "reference" in summary
    assert sorted(p.name for p in a.iterdir()) == ["metrics.csv", "model.csv", "summary.json", "transcript.jsonl"]


def test_replay_transcript_matches_summary(tmp_path, capsys):
    out = tmp_path / "o"
    run(capsys, "train", "--n", "4", "--synthetic", "30,3", "-J", "2", "--transcript", "--out", out)
    code, text, err = run(capsys, "replay-transcript", out / "transcript.jsonl", "--check", out / "summary.json")
    assert code == 0
    assert "counters match" in err
    assert json.loads(text)["total_bytes"] == json.loads((out / "summary.json").read_text())["total_bytes"]


def test_invariant_violation_reports_inequality_and_writes_nothing(tmp_path, capsys):
    out = tmp_path / "o"
    code, _, err = run(capsys, "train", "--n", "6", "--K", "2", "--T", "1", "--synthetic", "30,3", "--out", out)
    assert code == 2
    assert "N >= (2r+1)(K+T-1)+1 violated" in err
    assert not out.exists()


def test_failed_run_leaves_no_partial_files(tmp_path, capsys):
    out = tmp_path / "o"
    out.mkdir()
    # eta so large that the first update overflows the truncation range
    code, _, err = run(capsys, "train", "--n", "4", "--synthetic", "30,3", "--eta", "1e6", "--k1", "3",
                       "--out", out)
    assert code == 2
    assert list(out.iterdir()) == []


def test_baseline_and_csv_input(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("x0,x1,label\n" + "".join(f"{i},{(i * 7) % 5},{int(i > 9)}\n" for i in range(20)))
    code, out, _ = run(capsys, "baseline", "--n", "9", "--scheme", "bgw", "--data", data, "-J", "3",
                       "--out", tmp_path / "o")
    assert code == 0
    assert "scheme=baseline_bgw" in out
    assert len(list(csv.DictReader((tmp_path / "o" / "metrics.csv").open()))) == 3


def test_bad_dataset_is_reported(tmp_path, capsys):
    data = tmp_path / "d.csv"
    data.write_text("1,2,0\n3,4,2\n")
    code, _, err = run(capsys, "train", "--n", "4", "--data", data, "--out", tmp_path / "o")
    assert code == 2 and "row 2" in err


def test_fit_sigmoid_and_bench(tmp_path, capsys):
    code, out, _ = run(capsys, "fit-sigmoid")
    report = json.loads(out)
    assert report["coefficients"][0] == pytest.approx(0.5)
    code, out, _ = run(capsys, "bench", "--n", "13", "--m", "120", "--d", "4")
    rows = list(csv.DictReader(out.splitlines()))
    ratio = float(rows[0]["gradient_muls_per_party"]) / float(rows[1]["gradient_muls_per_party"])
    assert ratio == pytest.approx(3 / 4, rel=0.1)
