import csv
import json
from pathlib import Path

import pytest

from covbell.cli import EXIT_DOMAIN, EXIT_INPUT, EXIT_OK, main

DATA = Path(__file__).resolve().parents[1] / "data"


def run(capsys, *argv):
    code = main([*argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_eval_p_opt(capsys):
    code, out, _ = run(capsys, "eval", str(DATA / "p_opt.json"), "--expression", "covchsh")
    assert code == EXIT_OK
    assert "covchsh = 16/7 ≈ 2.285714" in out
    assert "exceeds" not in out


def test_eval_pr_box_is_flagged(capsys):
    code, out, _ = run(capsys, "eval", str(DATA / "pr_box.json"))
    assert code == EXIT_OK
    line = next(l for l in out.splitlines() if l.startswith("covchsh ="))
    assert line.startswith("covchsh = 4") and "exceeds local bound 16/7" in line
    assert "rchsh = 4" in out


def test_eval_json(capsys):
    code, out, _ = run(capsys, "eval", str(DATA / "p_opt.json"), "--format", "json")
    doc = json.loads(out)
    assert code == 0
    assert doc["expressions"]["covchsh"] == "16/7"
    assert doc["expressions"]["covchsh_prime"] == "16/49"
    assert doc["covariances"][0][0] == "48/49"


def test_eval_malformed(tmp_path, capsys):
    doc = json.loads((DATA / "pr_box.json").read_text())
    doc["table"]["1,1"] = [["0.5", "0.5"]]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, _, err = run(capsys, "eval", str(bad))
    assert code == EXIT_INPUT and "block (x=1, y=1)" in err
    code, _, err = run(capsys, "eval", str(tmp_path / "missing.json"))
    assert code == EXIT_INPUT


def test_eval_signalling(tmp_path, capsys):
    doc = json.loads((DATA / "pr_box.json").read_text())
    doc["table"]["0,1"] = [["0.5", "0"], ["0", "0.5"]]
    doc["table"]["0,0"] = [["0.75", "0"], ["0", "0.25"]]
    bad = tmp_path / "sig.json"
    bad.write_text(json.dumps(doc))
    code, _, err = run(capsys, "eval", str(bad))
    assert code == EXIT_DOMAIN and "domain violation" in err


def test_eval_custom_expression(tmp_path, capsys):
    e = tmp_path / "e.json"
    e.write_text(json.dumps({"name": "mine", "kind": "covariance", "signs": [[1, 0], [0, 1]]}))
    code, out, _ = run(capsys, "eval", str(DATA / "p_opt.json"), "--expression-file", str(e))
    assert code == 0 and "mine = " in out
    code, _, err = run(capsys, "eval", str(DATA / "p_opt.json"), "--expression", "cov3322")
    assert code == EXIT_INPUT and "3x3" in err


def test_certify_restricted(tmp_path, capsys):
    report = tmp_path / "t2.csv"
    sols = tmp_path / "t1.json"
    code, out, _ = run(capsys, "certify", "--d-max", "3", "--report", str(report), "--solutions", str(sols), "--jobs", "1")
    assert code == 0
    assert "covCHSH local bound = 16/7" in out
    rows = list(csv.reader(report.open()))
    assert rows[0] == ["d", "systems", "consistent_eq", "consistent_full", "local_max"]
    assert rows[1:] == [["2", "120", "120", "4", "2"], ["3", "560", "560", "8", "16/7"]]
    assert len(json.loads(sols.read_text())) == 8


def test_local_bound(capsys):
    code, out, _ = run(capsys, "local-bound", "--expression", "covchsh", "--restarts", "20", "--jobs", "1", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and abs(doc["bound"] - 16 / 7) < 1e-9


def test_quantum_reference_and_optimize(capsys):
    code, out, _ = run(capsys, "quantum", "--state", "phi+")
    assert code == 0 and out.startswith("covchsh = 2.82842712475")
    code, out, _ = run(capsys, "quantum", "--state", "rho", "--theta", "0.7", "--format", "json")
    assert abs(json.loads(out)["value"] - 2 * (1 + 0.6442176872376911**2) ** 0.5) < 1e-9
    code, out, _ = run(capsys, "quantum", "--state", "phi", "--theta", "0.7", "--optimize", "--restarts", "5", "--jobs", "1")
    assert code == 0
    code, _, err = run(capsys, "quantum", "--state", "phi")
    assert code == EXIT_INPUT and "--theta" in err
    code, _, err = run(capsys, "quantum", "--expression", "cov3322")
    assert code == EXIT_INPUT and "--optimize" in err
    code, _, _ = run(capsys, "quantum", "--state", "phi", "--theta", "2")
    assert code == EXIT_INPUT


def test_quantum_curve(tmp_path, capsys):
    out = tmp_path / "fig3.csv"
    code, _, _ = run(capsys, "quantum", "--curve", "0.5,1.5,3", "--restarts", "4", "--jobs", "1", "--out", str(out))
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["theta", "pure_opt", "mixed_opt", "pure_ref", "mixed_ref"] and len(rows) == 4
    for r in rows[1:]:
        assert abs(float(r[1]) - float(r[3])) < 1e-5 and abs(float(r[2]) - float(r[4])) < 1e-5
    assert (tmp_path / "fig3.csv.manifest.json").exists()
    code, _, _ = run(capsys, "quantum", "--curve", "bad")
    assert code == EXIT_INPUT


def test_witness(capsys):
    code, out, _ = run(capsys, "witness", "--value", "2")
    assert code == 0 and "H = 1 bits" in out and "d >= 2" in out
    code, out, _ = run(capsys, "witness", "--value", "2.2857142857142856", "--format", "json")
    doc = json.loads(out)
    assert abs(doc["min_shannon"] - 1.556656707) < 1e-8
    assert sorted(doc["decomposition"].values()) == pytest.approx([2 / 7, 2 / 7, 3 / 7])
    code, _, err = run(capsys, "witness", "--value", "3")
    assert code == EXIT_INPUT and "16/7" in err


def test_witness_curve(tmp_path, capsys):
    out = tmp_path / "fig2.csv"
    code, _, _ = run(capsys, "witness-curve", "--from", "0", "--to", "2.2857", "--steps", "11", "--out", str(out), "--jobs", "1")
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["c", "min_shannon", "min_max_entropy"] and len(rows) == 12
    code, text, _ = run(capsys, "witness-curve", "--steps", "3", "--jobs", "1")
    assert text.splitlines()[0] == "c,min_shannon,min_max_entropy"


def test_localset_scan(capsys):
    code, out, _ = run(capsys, "localset-scan", "--directions", "8", "--restarts", "5", "--jobs", "1")
    rows = list(csv.reader(out.splitlines()))
    assert code == 0 and rows[0] == ["theta", "covchsh", "covchsh_prime"] and len(rows) == 9
    code, _, _ = run(capsys, "localset-scan", "--directions", "7")
    assert code == EXIT_INPUT


def test_same_seed_gives_identical_bytes(tmp_path, capsys):
    outs = []
    for jobs in ("1", "2", "1"):
        path = tmp_path / f"scan{len(outs)}.csv"
        assert main(["localset-scan", "--directions", "8", "--restarts", "6", "--seed", "7", "--jobs", jobs, "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    capsys.readouterr()


def test_manifest(tmp_path, capsys):
    path = tmp_path / "w.json"
    assert main(["witness", "--value", "1.5", "--format", "json", "--out", str(path)]) == 0
    man = json.loads((tmp_path / "w.json.manifest.json").read_text())
    assert man["command"] == "witness" and man["exit_code"] == 0
    assert man["config"]["seed"] == 42 and man["config"]["value"] == 1.5
    assert set(man["versions"]) == {"covbell", "numpy", "scipy", "python"}
    capsys.readouterr()


def test_missing_output_directory(tmp_path, capsys):
    code, _, err = run(capsys, "witness", "--value", "1", "--out", str(tmp_path / "no" / "x.json"))
    assert code == EXIT_INPUT and "does not exist" in err


def test_reproduce_table1(tmp_path, capsys):
    code, out, _ = run(capsys, "reproduce", "table1", "--out", str(tmp_path / "r"), "--jobs", "2")
    assert code == 0
    assert "[FAIL]" not in out
    assert (tmp_path / "r" / "manifest.json").exists()
    assert len(json.loads((tmp_path / "r" / "table1.json").read_text())) == 8
    assert json.loads((tmp_path / "r" / "manifest.json").read_text())["reproduce"]["table1"]["passed"]


def test_global_flags_after_subcommand(capsys):
    code, out, _ = run(capsys, "witness", "--value", "0", "--format", "json", "--seed", "1")
    assert code == 0 and json.loads(out)["min_shannon"] == 0
    code, out, _ = run(capsys, "--format", "json", "witness", "--value", "0")
    assert code == 0 and json.loads(out)["min_shannon"] == 0
