from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from factories import random_tn, random_tprime
from tnconv import cli


def _run(capsys, *argv):
    status = cli.main(list(argv))
    return status, capsys.readouterr()


@pytest.fixture(autouse=True)
def _no_report_dir(monkeypatch):
    monkeypatch.delenv(cli.REPORT_DIR_ENV, raising=False)


def test_verify_counterexample_exits_zero(capsys):
    status, out = _run(capsys, "verify-counterexample")
    assert status == 0
    rep = json.loads(out.out)
    assert rep["tool"] == "tnconv" and rep["report"]["passed"]
    neg = rep["report"]["negativity"]["negative_entries"]
    assert len(neg) == 20 and all(e["i"] != e["j"] for e in neg)


def test_w_matrix_example_reports_trivial_kernel(capsys):
    status, out = _run(capsys, "w-lemma", "--example", "e1", "--mu", "2", "--trials", "5")
    assert status == 0
    text = out.out
    rep = json.loads(text)["report"]
    assert rep["kernel_trivial"] and rep["family"] == "e1"
    assert rep["certificate"]["exact_verdict"] == rep["certificate"]["h_verdict"]
    assert "h" in rep["certificate"]


def test_check_config_valid_witness(tmp_path, capsys):
    rng = np.random.default_rng(3)
    for i, conf in enumerate([random_tn(rng), random_tprime(rng)]):
        p = tmp_path / f"cfg{i}.json"
        p.write_text(json.dumps(conf.to_json()))
        status, out = _run(capsys, "check-config", "--input", str(p))
        assert status == 0, out.out
        assert json.loads(out.out)["report"]["identities"]["passed"]


def test_check_config_rejects_k_at_most_one(tmp_path, capsys):
    data = random_tn(np.random.default_rng(4)).to_json()
    data["k"][1] = "1"
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(data))
    status, out = _run(capsys, "check-config", "--input", str(p))
    assert status == 1
    assert "k_2 not > 1" in out.out


def test_check_config_detects_from_matrices(tmp_path, capsys, data):
    from tnconv.exact_core import matrix_to_json

    p = tmp_path / "xs.json"
    p.write_text(json.dumps({"X": [matrix_to_json(data.X[q - 1]) for q in data.permutations[0]]}))
    status, out = _run(capsys, "check-config", "--input", str(p))
    assert status == 0 and json.loads(out.out)["report"]["found"]


def test_unknown_config_key_exits_two(tmp_path, capsys):
    p = tmp_path / "run.json"
    p.write_text(json.dumps({"depth": 1, "bogus": 3}))
    status, out = _run(capsys, "build-map", "--config", str(p))
    assert status == 2
    assert "bogus" in out.err


def test_missing_input_exits_two(capsys):
    status, out = _run(capsys, "check-config")
    assert status == 2
    assert "needs --input" in out.out


def test_unknown_flag_exits_two():
    with pytest.raises(SystemExit) as exc:
        cli.main(["verify-counterexample", "--frobnicate"])
    assert exc.value.code == 2


def test_reports_are_byte_identical_on_rerun(tmp_path):
    p = tmp_path / "w.json"
    runs = []
    for _ in range(2):
        assert cli.main(["w-lemma", "--example", "e2", "--mu", "3", "--trials", "20", "--seed", "7", "--output", str(p)]) == 0
        runs.append(p.read_bytes())
    assert runs[0] == runs[1]


def test_csv_format(capsys):
    status, out = _run(capsys, "verify-counterexample", "--format", "csv")
    lines = out.out.strip().splitlines()
    assert status == 0 and lines[0] == "key,value"
    assert any(line.startswith("report.passed,") for line in lines)


def test_report_directory_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.REPORT_DIR_ENV, str(tmp_path))
    status, out = _run(capsys, "verify-counterexample")
    assert status == 0 and out.out == ""
    rep = json.loads((tmp_path / "verify-counterexample.json").read_text())
    assert rep["report"]["passed"]


def test_build_map_small_depth(capsys):
    status, out = _run(capsys, "build-map", "--depth", "1")
    rep = json.loads(out.out)["report"]
    assert status == 0 and rep["continuity"]["continuous"]


def test_console_script_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "tnconv.cli", "verify-counterexample", "--format", "csv"],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0 and "report.passed,True" in out.stdout
