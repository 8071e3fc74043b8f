from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from thermocascade.cli import main
from thermocascade.engine import CascadeTrace
from thermocascade.grid import bundled_case_path
from thermocascade.montecarlo import read_records_csv

CASE = str(bundled_case_path())


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("CASCADE_SIM_WORKERS", raising=False)
    runner = CliRunner()

    def invoke(*args):
        return runner.invoke(main, [str(a) for a in args])

    return invoke


def test_simulate_heated_area(run, tmp_path):
    r = run("simulate", "--case", CASE, "--center-bus", 207, "--gamma", 0.05, "--delta-t", 10, "--seed", 1,
            "--no-redispatch", "--out", "t.json")
    assert r.exit_code == 0, r.output
    assert "termination=" in r.output
    tr = CascadeTrace.from_dict(json.loads((tmp_path / "t.json").read_text()))
    assert tr.center_bus == 207 and tr.events
    first = next(e for e in tr.events if e.kind == "line-trip")
    assert first.elements == [49]  # branch 207-208


def test_simulate_identity_is_empty(run, tmp_path):
    r = run("simulate", "--case", "rts96", "--delta-t", 0, "--p-floor", 0, "--out", "e.json")
    assert r.exit_code == 0
    doc = json.loads((tmp_path / "e.json").read_text())
    assert doc["events"] == [] and doc["termination"] == "no-event"


@pytest.mark.parametrize("args, needle", [
    (["simulate", "--delta-t", 3], "--case"),
    (["simulate", "--case", "nope.json"], "--case"),
    (["simulate", "--case", "rts96", "--gamma", 4], "gamma"),
    (["simulate", "--case", "rts96", "--center-bus", 999], "center_bus"),
    (["batch", "--case", "rts96", "--runs", 0], "--runs"),
    (["sweep", "--case", "rts96", "--param", "delta-t", "--values", "5,3"], "--values"),
    (["sweep", "--case", "rts96", "--param", "delta-t", "--values", "5,x"], "--values"),
    (["sweep", "--case", "rts96", "--param", "gamma", "--values", "0.05,2"], "gamma"),
    (["rank", "--case", "rts96", "--dt", ""], "--dt"),
    (["print-config", "--config", "missing.json"], "--config"),
])
def test_config_errors_exit_2(run, args, needle):
    r = run(*args)
    assert r.exit_code == 2
    assert needle in r.output


def test_bad_config_key_named(run, tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"gamma": 0.05, "bogus": 1}))
    r = run("simulate", "--case", "rts96", "--config", "c.json")
    assert r.exit_code == 2 and "bogus" in r.output


def test_precedence_flags_over_file_over_defaults(run, tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"gamma": 0.05, "delta_t": 12.0}))
    r = run("simulate", "--config", "c.json", "--delta-t", 8, "--print-config")
    cfg = json.loads(r.output)
    assert (cfg["gamma"], cfg["delta_t"], cfg["eta"]) == (0.05, 8.0, 1.05)
    r = run("print-config", "--config", "c.json")
    assert json.loads(r.output)["delta_t"] == 12.0
    assert json.loads(run("print-config").output)["gamma"] == 0.07


def test_batch_bytes_identical_across_workers(run, tmp_path):
    a = run("batch", "--case", "rts96", "--runs", 16, "--seed", 7, "--workers", 1, "--delta-t", 12, "--out", "a.csv")
    b = run("batch", "--case", "rts96", "--runs", 16, "--seed", 7, "--workers", 2, "--delta-t", 12, "--out", "b.csv")
    assert a.exit_code == b.exit_code == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert len(read_records_csv(tmp_path / "a.csv")) == 16
    summary = json.loads((tmp_path / "a.summary.json").read_text())
    assert summary["stats"]["n"] == 16 and summary["master_seed"] == 7


def test_sweep_outputs(run, tmp_path):
    r = run("sweep", "--case", "rts96", "--param", "delta-t", "--values", "0,12", "--runs", 3, "--out-dir", "sw")
    assert r.exit_code == 0, r.output
    doc = json.loads((tmp_path / "sw" / "summary.json").read_text())
    assert doc["values"] == [0.0, 12.0] and len(doc["stats"]) == 2
    assert len(read_records_csv(tmp_path / "sw" / "runs.csv")) == 6


def test_rank_table(run, tmp_path):
    r = run("rank", "--case", "rts96", "--dt", "11", "--gamma", "0.07", "--runs", 1, "--out", "rank.json",
            "--runs-csv", "rank.csv")
    assert r.exit_code == 0, r.output
    doc = json.loads((tmp_path / "rank.json").read_text())
    assert len(doc["rows"]) == 51
    assert 0.0 <= doc["top_overlap"] <= 1.0
    assert len(read_records_csv(tmp_path / "rank.csv")) == 51


def test_validate_case(run):
    r = run("validate-case", "--case", "rts96")
    assert r.exit_code == 0
    assert "buses=73 branches=120" in r.output and "served_load_mw=8550.00" in r.output


def test_workers_env_default(run, tmp_path, monkeypatch):
    monkeypatch.setenv("CASCADE_SIM_WORKERS", "2")
    r = run("batch", "--case", "rts96", "--runs", 4, "--delta-t", 0, "--out", "w.csv")
    assert r.exit_code == 0


def test_interrupt_keeps_partial_csv(tmp_path):
    import signal
    import subprocess
    import sys
    import time

    out = tmp_path / "int.csv"
    proc = subprocess.Popen(
        [sys.executable, "-m", "thermocascade.cli", "batch", "--case", "rts96", "--runs", "100000",
         "--seed", "3", "--workers", "1", "--out", str(out)],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
    )
    deadline = time.time() + 120
    while time.time() < deadline and (not out.exists() or out.stat().st_size < 2000):
        time.sleep(0.2)
    proc.send_signal(signal.SIGINT)
    assert proc.wait(timeout=60) == 130
    rows = read_records_csv(out)
    assert 0 < len(rows) < 100000
