from __future__ import annotations

import json
import subprocess
import sys

import pytest
import yaml

from psaclab.bench import synthetic_points
from psaclab.cli import main
from psaclab.sim import run_scenario
from psaclab.sim.metrics import CSV_HEADER
from psaclab.sim.scripted import interleaving_scenario, overlap_scenario

CONFIG = {
    "name": "tiny",
    "engines": ["psac:8", "2pl"],
    "nodes": [1, 2],
    "seeds": [1, 2, 3],
    "scenarios": [{"name": "synchot", "warmup": 10, "measure": 60,
                   "workload": {"kind": "synchot", "users": 4, "hot_accounts": 2}}],
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "grid.yaml"
    path.write_text(yaml.safe_dump(CONFIG), encoding="utf-8")
    return path


def test_run_writes_csv_report_and_traces(config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(config), "--out", str(out), "--traces"]) == 0
    csv = (out / "results.csv").read_text(encoding="utf-8").splitlines()
    assert csv[0] == CSV_HEADER and len(csv) == 13
    report = (out / "report.md").read_text(encoding="utf-8")
    assert report.startswith("# tiny") and "ratio vs 2pl" in report
    traces = sorted(p.name for p in (out / "traces").iterdir())
    assert len(traces) == 12 and "synchot-psac8-N1-s1.jsonl" in traces


def test_run_overrides_and_stdout(config, capsys):
    assert main(["run", str(config), "--seed", "7", "--engine", "2pl", "--nodes", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == CSV_HEADER
    assert [ln.split(",")[1:4] for ln in lines[1:]] == [["2pl", "3", "7"]]


def test_run_is_deterministic(config, capsys):
    main(["run", str(config), "--seed", "4"])
    first = capsys.readouterr().out
    main(["run", str(config), "--seed", "4"])
    assert capsys.readouterr().out == first


def test_run_rejects_bad_input(tmp_path, config, capsys):
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2
    assert main(["run", str(config), "--engine", "mvcc"]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("nodes: 0\n", encoding="utf-8")
    assert main(["run", str(bad)]) == 2
    assert "error:" in capsys.readouterr().err


def _csv(tmp_path, rows, partial=False):
    path = tmp_path / "r.csv"
    text = CSV_HEADER + "\n" + "".join(r + "\n" for r in rows)
    if partial:
        text += "# partial: boom\n"
    path.write_text(text, encoding="utf-8")
    return path


def _rows(lam, sigma, engine="psac:8"):
    return [f"s,{engine},{int(n)},1,{x:.6f},1,2,3,1,0,0"
            for n, x in synthetic_points(lam, sigma, [1, 2, 4, 8])]


def test_fit_prints_parameters(tmp_path, capsys):
    path = _csv(tmp_path, _rows(1000, 0.01) + _rows(500, 0.0, "2pl"))
    assert main(["fit", str(path)]) == 0
    out = [json.loads(ln) for ln in capsys.readouterr().out.splitlines()]
    assert out[0]["engine"] == "psac:8"
    assert out[0]["lambda"] == pytest.approx(1000, rel=1e-3)
    assert out[0]["sigma"] == pytest.approx(0.01, rel=1e-3)
    assert out[1]["a_inf"] == "inf"


def test_fit_fails_on_partial_or_degenerate(tmp_path, capsys):
    assert main(["fit", str(_csv(tmp_path, _rows(1000, 0.01), partial=True))]) == 1
    assert main(["fit", str(_csv(tmp_path, ["s,2pl,1,1,10,1,2,3,1,0,0"]))]) == 1
    assert "error" in capsys.readouterr().out


def test_report_command(tmp_path, capsys):
    path = _csv(tmp_path, _rows(1000, 0.01) + _rows(500, 0.02, "2pl"))
    out = tmp_path / "report.md"
    assert main(["report", str(path), "--title", "demo", "--out", str(out)]) == 0
    text = out.read_text(encoding="utf-8")
    assert text.startswith("# demo")
    assert main(["report", str(_csv(tmp_path, [], partial=False))]) == 1


def test_check_passes_and_fails(tmp_path, capsys):
    ok = tmp_path / "ok.jsonl"
    run_scenario(overlap_scenario())[0].write(ok)
    assert main(["check", str(ok), "--serializability"]) == 0
    lines = [json.loads(ln) for ln in capsys.readouterr().out.splitlines()]
    assert [ln["check"] for ln in lines] == ["atomicity", "linearizability", "serializability"]

    anomaly = tmp_path / "anomaly.jsonl"
    run_scenario(interleaving_scenario())[0].write(anomaly)
    assert main(["check", str(anomaly)]) == 0
    assert main(["check", str(anomaly), "--serializability"]) == 1
    assert main(["check", str(anomaly), "--serializability", "--bound", "1"]) == 1

    garbage = tmp_path / "bad.jsonl"
    garbage.write_text("{not json\n", encoding="utf-8")
    assert main(["check", str(garbage)]) == 2


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "psaclab.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "run" in proc.stdout and "check" in proc.stdout


def test_shipped_configs_load():
    import pathlib

    from psaclab.bench import load_config
    from psaclab.sim.scenario import load_scenario

    root = pathlib.Path(__file__).resolve().parent.parent / "configs"
    cfgs = {p.name: load_config(p) for p in sorted(root.glob("*.yaml"))}
    assert len(cfgs["synchot-grid.yaml"].cells()) == 40
    assert len(cfgs["low-contention.yaml"].cells()) == 40
    assert load_scenario(root / "interleaving.yaml") == interleaving_scenario()


def test_interleaving_config_end_to_end(tmp_path):
    import pathlib
    cfg = pathlib.Path(__file__).resolve().parent.parent / "configs" / "interleaving.yaml"
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out), "--traces"]) == 0
    trace = next((out / "traces").iterdir())
    assert main(["check", str(trace), "--serializability"]) == 1
    out2 = tmp_path / "out2"
    assert main(["run", str(cfg), "--engine", "2pl", "--out", str(out2), "--traces"]) == 0
    assert main(["check", str(next((out2 / "traces").iterdir())), "--serializability"]) == 0
