import json

import pytest

from fatgraph.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_verify_supersym_theta(capsys):
    code, out, _ = _run(capsys, "verify", "supersym", "builtin:theta")
    assert code == 0
    rep = json.loads(out)["reports"][0]
    assert rep["pass"] and rep["terms"]["kernel_dims"] == [1, 2]


@pytest.mark.parametrize("suite", ["gaffney", "kato", "scaling"])
def test_verify_suites(capsys, suite):
    code, out, _ = _run(capsys, "verify", suite)
    assert code == 0 and all(r["pass"] for r in json.loads(out)["reports"])


def test_mgspec_csv(capsys):
    code, out, _ = _run(capsys, "mgspec", "builtin:star3", "--k", "4", "--h", "0.01", "--csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "index,eigenvalue,multiplicity_cluster_id,source"
    assert sum(l.endswith("secular") for l in lines) == 4


def test_constants_convex(capsys):
    code, out, _ = _run(capsys, "constants", "builtin:single_edge", "--eps", "0.1")
    assert code == 0
    d = json.loads(out)
    assert d["constants"]["C_Gaffney"]["value"] == 1.0 and len(d["rates"]) == 1


def test_femspec_and_mesh(capsys, tmp_path):
    code, out, _ = _run(capsys, "femspec", "builtin:single_edge", "--eps", "0.2", "--k", "3")
    assert code == 0 and len(json.loads(out)["spectrum"]) == 3
    code, out, _ = _run(capsys, "mesh", "builtin:single_edge", "--eps", "0.2", "--out", "m.txt",
                        "--out-dir", str(tmp_path))
    assert code == 0 and (tmp_path / "m.txt").read_text().startswith("nodes ")


def test_sweep_csv_header(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"graph": "builtin:single_edge", "eps": [0.4, 0.2], "k": 2}))
    code, out, _ = _run(capsys, "sweep", str(cfg), "--out-dir", str(tmp_path / "o"))
    assert code == 0
    assert out.splitlines()[0] == "eps,lambda_idx,mg_value,tube_value,abs_err,d1,d2,d3,delta_eps,pass"


def test_operational_failure(capsys):
    code, _, err = _run(capsys, "femspec", "missing.json", "--eps", "0.2")
    assert code == 1
    assert json.loads(err)["error"] == "FileNotFoundError"


def test_bound_violation_exit_code(capsys, monkeypatch):
    import fatgraph.analysis as analysis

    failing = analysis.CheckReport(name="kato inequality", terms={}, residual=1.0, passed=False)
    monkeypatch.setattr(analysis, "verify_kato", lambda **kw: failing)
    code, out, _ = _run(capsys, "verify", "kato")
    assert code == 2 and json.loads(out)["reports"][0]["pass"] is False
