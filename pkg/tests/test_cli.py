import csv
import io
import json
import subprocess
import sys

import pytest

from dynamos import __version__
from dynamos.cli import main


def data_lines(text):
    return [l for l in text.splitlines() if not l.startswith("#")]


def run_cli(args, capsys):
    code = main(args)
    return code, capsys.readouterr()


def test_torus_sweep_p_one(capsys):
    code, out = run_cli(["torus-sweep", "--n", "16", "24", "--p-grid", "1.0", "--trials", "5"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO("\n".join(data_lines(out.out)))))
    assert len(rows) == 2 and all(r["point"] == "1" for r in rows)
    assert f'# version: "{__version__}"' in out.out
    assert "# master_seed: 0" in out.out
    assert "# wall_clock:" in out.out and "# config:" in out.out


def test_torus_threshold_table(capsys, tmp_path):
    out = tmp_path / "thr.csv"
    code, _ = run_cli(["torus-sweep", "--n", "16,24", "--z", "0.05", "0.5", "0.95",
                       "--budget", "64", "--tol", "0.5", "--out", str(out), "--plot"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO("\n".join(data_lines(out.read_text())))))
    assert len(rows) == 6
    for n in ("16", "24"):
        vals = [float(r["p_z"]) for r in rows if r["n"] == n]
        assert vals == sorted(vals)
    assert (tmp_path / "thr.png").stat().st_size > 0


def test_rerun_is_byte_identical(tmp_path, capsys):
    args = ["regular-sweep", "--n", "300", "--p-grid", "0.1:0.12:3", "--trials", "8", "--seed", "4"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b), "--workers", "2"]) == 0
    assert data_lines(a.read_text()) == data_lines(b.read_text())


def test_json_mirrors_csv(tmp_path):
    base = ["regular-sweep", "--n", "200", "--p-grid", "0.11", "--trials", "6", "--engine", "sc"]
    c, j = tmp_path / "o.csv", tmp_path / "o.json"
    assert main(base + ["--out", str(c)]) == 0
    assert main(base + ["--out", str(j), "--format", "json"]) == 0
    doc = json.loads(j.read_text())
    rows = list(csv.DictReader(io.StringIO("\n".join(data_lines(c.read_text())))))
    assert doc["meta"]["master_seed"] == 0 and doc["meta"]["version"] == __version__
    assert doc["columns"] == list(rows[0])
    for r, d in zip(rows, doc["rows"]):
        assert {k: float(v) if k not in ("family",) else v for k, v in r.items()} == \
            {k: float(v) if k not in ("family",) else v for k, v in d.items()}


def test_env_overrides(monkeypatch, capsys):
    monkeypatch.setenv("DYNAMOS_SEED", "17")
    monkeypatch.setenv("DYNAMOS_WORKERS", "2")
    code, out = run_cli(["torus-sweep", "--n", "8", "--p-grid", "0.2", "--trials", "3"], capsys)
    assert code == 0
    assert "# master_seed: 17" in out.out and '"workers": 2' in out.out
    code, out = run_cli(["torus-sweep", "--n", "8", "--p-grid", "0.2", "--trials", "3",
                         "--seed", "3"], capsys)
    assert "# master_seed: 3" in out.out
    monkeypatch.setenv("DYNAMOS_SEED", "abc")
    assert main(["torus-sweep", "--n", "8", "--p-grid", "0.2"]) == 2


@pytest.mark.parametrize("args", [
    ["torus-sweep", "--n", "8"],
    ["torus-sweep", "--bogus"],
    ["torus-sweep", "--n", "2", "--p-grid", "0.1"],
    ["torus-sweep", "--n", "8", "--p-grid", "1.5"],
    ["torus-sweep", "--n", "8", "--p-grid", "0.1", "--trials", "0"],
    ["torus-sweep", "--n", "8", "--p-grid", "0.1", "--plot"],
    ["regular-sweep", "--n", "7", "--p-grid", "0.1", "--engine", "sc", "--simple"],
    ["threshold", "--n", "8", "--z", "1.0"],
    ["certify", "--n", "31", "--p", "0.1"],
    ["sc-trace", "--n", "100"],
    [],
])
def test_usage_errors(args, capsys):
    assert main(args) == 2


def test_threshold_budget_exhausted(capsys):
    code, _ = run_cli(["threshold", "--n", "12", "--z", "0.5", "--tol", "1e-9", "--budget", "8"], capsys)
    assert code == 4


def test_bounds_defaults(capsys):
    code, out = run_cli(["bounds", "--format", "json"], capsys)
    assert code == 0
    rows = json.loads(out.out)["rows"]
    got = {(r["quantity"], r["parameter"]): r["value"] for r in rows}
    assert abs(got[("beta", "closed_form")] - 0.012117) < 1e-4
    assert got[("sc_recurrence", "p=0.1:m_60")] < 0.36
    assert 0 <= got[("tree", "p=0.12:exact:escape_step")] <= 100
    assert abs(got[("pi2_over_6", "value")] - 1.644934) < 1e-6


def test_bounds_selection(capsys):
    code, out = run_cli(["bounds", "--beta"], capsys)
    lines = data_lines(out.out)
    assert lines[0] == "quantity,parameter,value"
    assert all(l.startswith("beta,") for l in lines[1:])


def test_certify_codes_and_files(tmp_path, capsys):
    code, out = run_cli(["certify", "--n", "32", "--p", "0", "--cert-dir", str(tmp_path)], capsys)
    assert code == 0
    files = list(tmp_path.glob("cert_*.json"))
    assert len(files) == 1
    doc = json.loads(files[0].read_text())
    assert doc["seeds"] == [] and doc["cover"]["cages"]
    code, out = run_cli(["certify", "--n", "32", "--p", "0.9"], capsys)
    assert code == 1
    assert "# violations: 0" in out.out


def test_certify_batch_sound(capsys):
    code, out = run_cli(["certify", "--n", "24", "--p-grid", "0.0,0.005,0.02,0.2",
                         "--trials", "10", "--format", "json"], capsys)
    doc = json.loads(out.out)
    assert code in (0, 1) and doc["violations"] == 0
    assert len(doc["rows"]) == 40 and doc["certified"] > 0


def test_sc_trace(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    assert main(["sc-trace", "--n", "5000", "--p", "0.1", "--audit", "--out", str(out),
                 "--plot"]) == 0
    text = out.read_text()
    rows = data_lines(text)
    assert rows[0] == "step,b,m,r"
    assert "# verdict: not-dynamo" in text or "# verdict: dynamo" in text
    assert (tmp_path / "trace.png").exists()


def test_gw_sim(capsys):
    code, out = run_cli(["gw-sim", "--trials", "500", "--format", "json"], capsys)
    assert code == 0
    vals = {r["quantity"]: r["value"] for r in json.loads(out.out)["rows"]}
    assert abs(vals["relative_error"]) < 0.05
    assert vals["truncated_runs"] == 0


def test_gw_sim_truncation_is_budget(capsys):
    assert main(["gw-sim", "--trials", "10", "--max-generations", "1"]) == 4


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "dynamos.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
