import csv
import json
import math
from pathlib import Path

import pytest

from barylab.cli import KINDS, dumps, main, run, verify_report
from oracles import binomial_tail

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"
DATA = Path(__file__).resolve().parent / "data"


def _run(kind, tmp_path, *extra, config=None):
    code = main([kind, "--config", str(config or CONFIGS / f"{kind}.json"), "--out", str(tmp_path), *extra])
    return code, tmp_path / f"{kind}_report.json"


@pytest.mark.parametrize("kind", KINDS)
def test_every_kind_runs_and_verifies(kind, tmp_path, capsys):
    code, path = _run(kind, tmp_path)
    assert code == 0
    assert capsys.readouterr().out.strip() == str(path)
    report = json.loads(path.read_text())
    assert report["kind"] == kind and report["checks"]["passed"], report["checks"]
    assert main(["verify", str(path)]) == 0
    assert capsys.readouterr().out.strip() == "OK"


def test_ldp_table_matches_binomial_oracle(tmp_path):
    code, path = _run("ldp", tmp_path)
    assert code == 0
    rows = json.loads(path.read_text())["result"]["rows"]
    for row in rows:
        exact = binomial_tail(row["n"], math.ceil(0.75 * row["n"]))
        assert row["P_n"] == pytest.approx(exact, rel=1e-12)
        assert row["a_n"] == pytest.approx(-math.log(exact) / row["n"], rel=1e-12)
    with open(tmp_path / "ldp_report.csv", newline="") as fh:
        table = list(csv.reader(fh))
    assert table[0] == ["n", "P_n", "a_n", "gap"]
    assert [int(r[0]) for r in table[1:]] == [10, 20, 40]
    assert [float(r[1]) for r in table[1:]] == [r["P_n"] for r in rows]
    assert (tmp_path / "ldp_report.csv").read_bytes().count(b"\r\n") == len(table)


def test_malformed_config_writes_nothing(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"space": {"geometry": "euclidean", "dim": 1}, "p": 1}))
    out = tmp_path / "out"
    code, _ = _run("wasserstein", out, config=bad)
    assert code == 2 and not out.exists()
    assert "invalid config" in capsys.readouterr().err
    bad.write_text("{not json")
    assert _run("wasserstein", out, config=bad)[0] == 2
    assert _run("wasserstein", out, config=tmp_path / "missing.json")[0] == 2


def test_convergence_and_capacity_exit_codes(tmp_path):
    cfg = json.loads((CONFIGS / "barycenter.json").read_text())
    cfg["map"] = {"variant": "karcher", "max_iter": 1, "tol": 1e-15}
    path = tmp_path / "slow.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    assert _run("barycenter", out, config=path)[0] == 3 and not out.exists()
    cfg = json.loads((CONFIGS / "ldp.json").read_text())
    cfg["n"] = [61]
    path.write_text(json.dumps(cfg))
    assert _run("ldp", out, config=path)[0] == 4 and not out.exists()


def test_audit_report(tmp_path):
    code, path = _run("audit", tmp_path)
    result = json.loads(path.read_text())["result"]
    assert code == 0 and result["passed"] and result["trials"] == 200
    assert result["max_violation"] <= 1e-8


def test_tampered_report_fails_verify(tmp_path, capsys):
    code, path = _run("ldp", tmp_path)
    report = json.loads(path.read_text())
    report["result"]["rows"][1]["P_n"] *= 1.01
    path.write_text(dumps(report))
    assert main(["verify", str(path)]) == 1
    assert "FAIL" in capsys.readouterr().err
    path.write_text("[")
    assert main(["verify", str(path)]) == 2


@pytest.mark.parametrize("kind", ["ldp", "barycenter"])
def test_golden_reports(kind, tmp_path):
    golden = (DATA / f"{kind}_golden.json").read_text()
    assert verify_report(json.loads(golden)) == []
    code, path = _run(kind, tmp_path)
    report = json.loads(path.read_text())
    report.pop("timing")
    assert code == 0 and dumps(report) == golden


def test_reruns_identical_except_timing(tmp_path, monkeypatch):
    a, pa = _run("mapdist", tmp_path / "a")
    monkeypatch.setenv("BARYLAB_THREADS", "3")
    b, pb = _run("mapdist", tmp_path / "b")
    ra, rb = json.loads(pa.read_text()), json.loads(pb.read_text())
    assert rb["timing"]["threads"] == 3 and ra["timing"]["threads"] == 1
    ra.pop("timing"), rb.pop("timing")
    assert a == b == 0 and ra == rb
    # the stored config reproduces the same report
    c, pc = _run("mapdist", tmp_path / "c", config=_dump(tmp_path / "cfg.json", ra["config"]))
    rc = json.loads(pc.read_text())
    rc.pop("timing")
    assert c == 0 and rc == ra
    monkeypatch.setenv("BARYLAB_THREADS", "many")
    assert _run("mapdist", tmp_path / "d")[0] == 2


def test_seed_flag_overrides_config(tmp_path):
    cfg = json.loads((CONFIGS / "audit.json").read_text())
    rep, _ = run("audit", cfg, seed=99)
    assert rep["config"]["seed"] == 99


def _dump(path, obj):
    path.write_text(json.dumps(obj))
    return path
