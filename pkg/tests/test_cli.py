import csv
import shutil
import subprocess
import sys

import numpy as np
import pytest

from atskd.cli import main
from atskd.data import LogitDataset, write_logit_file

SMOKE = "configs/smoke.yaml"


@pytest.fixture
def logit_file(tmp_path):
    f = np.array([[3.0, 1.0, 0.0], [0.5, 2.0, 1.0], [0.0, 4.0, 1.0], [1.0, 1.0, -1.0]])
    path = tmp_path / "a.logits"
    write_logit_file(LogitDataset.from_arrays(f, [0, 1, 2, 0]), path)
    return path


def test_analyze_single_file(tmp_path, logit_file, capsys):
    assert main(["analyze", str(logit_file), "--temps", "1", "--out", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "DA=" in out and "DV=" in out and "IV=" in out
    # row 3 has label 2 but logit 4.0 on class 1; row 4 ties at the max
    assert "1 rows violate" in out
    rows = list(csv.DictReader(open(tmp_path / "o" / "analysis.csv")))
    assert len(rows) == 1 and rows[0]["assumption_violations"] == "1"


def test_analyze_two_identical_files(tmp_path, logit_file, capsys):
    code = main(["analyze", str(logit_file), str(logit_file), "--temps", "1,4", "--ats", "4,2",
                 "--topk", "2", "--out", str(tmp_path)])
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "agreement.csv")))
    assert len(rows) == 3
    for r in rows:
        assert (float(r["spearman"]), float(r["kendall"]), float(r["topk_overlap"]), float(r["l1_distance"])) == (1, 1, 1, 0)
    assert len(list(csv.DictReader(open(tmp_path / "analysis.csv")))) == 6


def test_analyze_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.logits"
    bad.write_text("#logits v1 classes=3\n0,1,2,3\n0,1,2\n")
    assert main(["analyze", str(bad), "--out", str(tmp_path)]) == 2
    assert "bad.logits:3:" in capsys.readouterr().err


def test_analyze_missing_file(tmp_path):
    assert main(["analyze", str(tmp_path / "nope.logits"), "--out", str(tmp_path)]) == 2


def test_bad_flags():
    with pytest.raises(SystemExit):
        main(["analyze", "x", "--ats", "4"])
    with pytest.raises(SystemExit):
        main(["analyze", "x", "--temps", "-1"])
    with pytest.raises(SystemExit):
        main([])


def test_verify_writes_ledger(tmp_path, capsys):
    assert main(["verify", "--samples", "50", "--seed", "7", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "ledger.csv").read_text().splitlines()
    assert lines[0] == "check_name,passed,total,max_violation"
    assert all(line.split(",")[1] == "50" for line in lines[1:])
    assert "FAIL" not in capsys.readouterr().out


def test_verify_strict_exit(tmp_path, monkeypatch):
    from atskd import harness

    real = harness.verify_propositions

    def broken(n, seed):
        rows = real(n, seed)
        rows[0] = harness.LedgerRow(rows[0].check_name, 0, n, 1.0)
        return rows

    monkeypatch.setattr(harness, "verify_propositions", broken)
    assert main(["verify", "--samples", "5", "--out", str(tmp_path)]) == 0
    assert main(["verify", "--samples", "5", "--out", str(tmp_path), "--strict"]) == 1


def test_sweep_cli(tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["sweep", "--config", SMOKE, "--out", str(out), "--temps", "1,2,4,8,12,16"]) == 0
    rows = list(csv.DictReader(open(out / "results.csv")))
    # nokd + 6 TS + 1 ATS + 6 ILS grid points, two seeds each
    assert len(rows) == 2 * (1 + 6 + 1 + 6)
    assert (out / "summary.json").exists() and (out / "decomposition_vs_tau.svg").exists()
    assert "rows ->" in capsys.readouterr().out


def test_distill_twice_is_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["distill", "--config", SMOKE, "--out", str(a), "--ats", "4,2"]) == 0
    assert main(["distill", "--config", SMOKE, "--out", str(b), "--ats", "4,2"]) == 0
    for name in ("results.csv", "summary.json", "accuracy_vs_tau.svg", "teacher_seed0.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    conds = [r["condition"] for r in csv.DictReader(open(a / "results.csv"))]
    assert conds == ["nokd", "nokd", "kd_ats", "kd_ats"]


def test_distill_seed_override(tmp_path):
    assert main(["distill", "--config", SMOKE, "--out", str(tmp_path), "--temps", "2", "--seed", "9"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "results.csv")))
    assert {r["seed"] for r in rows} == {"9"}


def test_config_error_exit(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("student:\n  train:\n    epochz: 3\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "student.train.epochz" in capsys.readouterr().err


def test_gen_data(tmp_path):
    assert main(["gen-data", "--config", SMOKE, "--out", str(tmp_path), "--seed", "3"]) == 0
    rows = list(csv.reader(open(tmp_path / "train.csv")))
    assert rows[0][:2] == ["label", "x0"] and len(rows) == 1 + 300
    assert "seed: 3" in (tmp_path / "data_spec.yaml").read_text()


@pytest.mark.skipif(shutil.which("atskd") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["atskd", "verify", "--samples", "3", "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and (tmp_path / "ledger.csv").exists()


def test_module_entry(tmp_path):
    res = subprocess.run([sys.executable, "-m", "atskd.cli", "verify", "--samples", "2", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0
