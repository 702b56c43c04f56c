from __future__ import annotations

import json
import zlib
from dataclasses import replace

import pytest
import yaml

from psaclab.bench.experiment import conserves_money, run_cell
from psaclab.entity import Money
from psaclab.sim import (
    Cluster, CoordinatorCrash, Latency, NodeCrash, Scenario, ScenarioError, Trace,
    TraceFormatError, Workload, run_scenario,
)
from psaclab.sim.metrics import CSV_HEADER, nearest_rank
from psaclab.sim.scenario import (
    ScriptedAction, ScriptedTxn, inject_failure, load_scenario, scenario_from_dict,
    scenario_to_dict,
)
from psaclab.sim.scripted import overlap_scenario


def hot(**kw) -> Scenario:
    base = dict(name="hot", nodes=2, engine="psac:8", seed=42, warmup=50, measure=300,
                workload=Workload(kind="synchot", hot_accounts=2, users=4))
    base.update(kw)
    return Scenario(**base)


def test_same_scenario_same_trace_bytes():
    t1, m1 = run_scenario(hot())
    t2, m2 = run_scenario(hot())
    assert t1.to_lines() == t2.to_lines()
    assert m1.csv_row() == m2.csv_row()
    assert len(t1) > 100


def test_different_seed_changes_trace():
    assert run_scenario(hot())[0].to_lines() != run_scenario(hot(seed=43))[0].to_lines()


def test_cluster_runs_once():
    c = Cluster(hot())
    c.run()
    with pytest.raises(Exception):
        c.run()


@pytest.mark.parametrize("engine", ["psac:8", "2pl"])
@pytest.mark.parametrize("kind", ["sync", "synchot"])
def test_money_is_conserved(engine, kind):
    sc = hot(engine=engine, nodes=3, measure=1500,
             workload=Workload(kind=kind, users=16, hot_accounts=3, accounts=50))
    cluster = Cluster(sc)
    trace, _ = cluster.run()
    assert conserves_money(cluster)
    commits = [e for e in trace.of("global_decision") if e["decision"] == "commit"]
    if kind == "sync":
        assert commits


@pytest.mark.parametrize("engine", ["psac:8", "2pl"])
def test_closed_system_and_cpu_bounds(engine):
    sc = hot(engine=engine, nodes=4, workload=Workload(kind="synchot", users=24, hot_accounts=4))
    _, m = run_scenario(sc)
    assert 0 < m.max_in_flight <= 24
    assert all(b <= m.end_time for b in m.busy_ms)


def test_trace_requests_never_exceed_users():
    trace, _ = run_scenario(hot(workload=Workload(kind="synchot", users=6, hot_accounts=2)))
    live = peak = 0
    for e in trace:
        if e["ev"] == "request_start":
            live += 1
        elif e["ev"] == "request_end":
            live -= 1
        peak = max(peak, live)
    assert peak <= 6


def test_nosync_makes_one_participant_per_request():
    trace, m = run_scenario(hot(workload=Workload(kind="nosync", users=8, accounts=100)))
    begins = trace.of("begin")
    assert begins and all(len(b["targets"]) == 1 for b in begins)


def test_sync_book_has_three_participants():
    trace, _ = run_scenario(hot(workload=Workload(kind="sync", users=4, accounts=100)))
    for b in trace.of("begin"):
        specs = [t["spec"] for t in b["targets"]]
        assert specs == ["MoneyTransfer", "Account", "Account"]


# -- micro-scenarios ---------------------------------------------------------

def _decisions(trace):
    return [(e["txn"], e["decision"]) for e in trace.of("decision")]


def test_overlap_psac_accepts_both_before_either_resolves():
    trace, _ = run_scenario(overlap_scenario("psac:8"))
    assert _decisions(trace)[:2] == [("C1", "accept"), ("C2", "accept")]
    first_resolution = trace.of("resolution")[0]["t"]
    assert all(e["t"] < first_resolution for e in trace.of("decision"))
    final = trace.of("final")[0]
    assert final["state"]["data"]["balance"] == {"money": 2000}


def test_overlap_two_phase_locking_delays_second():
    trace, _ = run_scenario(overlap_scenario("2pl"))
    assert _decisions(trace) == [("C1", "accept"), ("C2", "delay"), ("C2", "accept")]
    c1_applied = next(e["t"] for e in trace.of("applied") if e["txn"] == "C1")
    c2_accept = [e["t"] for e in trace.of("decision") if e["txn"] == "C2"][-1]
    assert c2_accept >= c1_applied
    assert trace.of("final")[0]["state"]["data"]["balance"] == {"money": 2000}


# -- failures ----------------------------------------------------------------

def transfer(nodes: int = 3, crashes=()) -> Scenario:
    txn = ScriptedTxn("T", 1.0, (
        ScriptedAction("Account", "A", "Withdraw", (Money.eur(30),)),
        ScriptedAction("Account", "B", "Deposit", (Money.eur(30),)),
    ))
    return Scenario(
        name="transfer", nodes=nodes, seed=1, workload=Workload(kind="scripted"),
        latency=Latency(kind="constant", min=1.0, max=1.0), warmup=0.0, measure=20_000.0,
        population=(("A", "Account", "opened", (("balance", Money.eur(100)),)),
                    ("B", "Account", "opened", (("balance", Money.eur(100)),))),
        script=(txn,), crashes=tuple(crashes))


def _balances(trace):
    return {e["entity"]: e["state"]["data"]["balance"]["money"] for e in trace.of("final")}


def test_coordinator_crash_after_decision_still_commits():
    trace, _ = run_scenario(transfer(crashes=[CoordinatorCrash("T", "after_decision")]))
    assert trace.of("crash")
    assert [e["decision"] for e in trace.of("global_decision")] == ["commit"]
    assert any(e.get("txn") == "T" and "phase" in e for e in trace.of("recovered"))
    assert {e["entity"] for e in trace.of("applied")} == {"A", "B"}
    assert _balances(trace) == {"A": 7000, "B": 13000}


def test_coordinator_crash_before_votes_aborts_everywhere():
    trace, _ = run_scenario(transfer(crashes=[CoordinatorCrash("T", "before_votes")]))
    assert [e["decision"] for e in trace.of("global_decision")] == ["abort"]
    assert not trace.of("applied")
    assert all(e["resolution"] == "abort" for e in trace.of("resolution"))
    assert _balances(trace) in ({}, {"A": 10_000, "B": 10_000})


def test_crash_of_idle_node_leaves_metrics_unchanged():
    sc = transfer(nodes=8)
    used = {zlib.crc32(k.encode()) % 8 for k in ("coord:T", "A", "B")}
    idle = min(set(range(8)) - used)
    _, base = run_scenario(sc)
    trace, crashed = run_scenario(inject_failure(sc, NodeCrash(idle, 0.5)))
    assert trace.of("crash")
    assert crashed.csv_row() == base.csv_row()
    assert crashed.latencies == base.latencies


@pytest.mark.parametrize("engine", ["psac:8", "2pl"])
@pytest.mark.parametrize("seed", [1, 2, 3, 4])
def test_crash_runs_keep_checks_green(engine, seed):
    sc = hot(engine=engine, nodes=3, seed=seed,
             workload=Workload(kind="synchot", users=16, hot_accounts=4),
             crashes=(NodeCrash(seed % 3, 40.0 * seed), CoordinatorCrash("t5", "before_votes"),
                      CoordinatorCrash("t40", "after_decision")))
    cell = run_cell(sc)
    assert cell.violations == []


# -- scenario files ----------------------------------------------------------

def test_scenario_round_trips_through_yaml_and_json(tmp_path):
    sc = inject_failure(transfer(), CoordinatorCrash("T", "after_decision"))
    raw = scenario_to_dict(sc)
    assert scenario_from_dict(yaml.safe_load(yaml.safe_dump(raw))) == sc
    path = tmp_path / "s.json"
    path.write_text(json.dumps(raw), encoding="utf-8")
    assert load_scenario(path) == sc


def test_scenario_yaml_with_euro_literals(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("""
name: tiny
warmup: 0
workload: {kind: scripted}
population:
  - {entity: acc, spec: Account, lifecycle: opened, data: {balance: "€100"}}
script:
  - txn: C1
    at: 1
    actions: [{spec: Account, entity: acc, action: Withdraw, args: ["€30"]}]
""", encoding="utf-8")
    sc = load_scenario(path)
    assert sc.population[0][3] == (("balance", Money.eur(100)),)
    trace, m = run_scenario(sc)
    assert m.successes == 1


@pytest.mark.parametrize("bad", [
    {"nodes": 0},
    {"engine": "psac:0"},
    {"engine": "mvcc"},
    {"measure": 0},
    {"seed": -1},
    {"latency": {"kind": "normal"}},
    {"latency": {"min": 5, "max": 1}},
    {"workload": {"kind": "sync", "accounts": 1}},
    {"workload": {"kind": "scripted"}},
    {"workload": {"users": 0}},
    {"crashes": [{"node": 3, "at": 1.0}]},
    {"crashes": [{"txn": "t1", "phase": "sometime"}]},
    {"colour": "blue"},
    {"workload": {"speed": 3}},
])
def test_invalid_scenarios_rejected(bad):
    with pytest.raises(ScenarioError):
        scenario_from_dict(bad)


def test_inject_failure_validates():
    with pytest.raises(ScenarioError):
        inject_failure(hot(), NodeCrash(5, 10.0))
    with pytest.raises(ScenarioError):
        inject_failure(hot(), NodeCrash(0, 10_000.0))


def test_trace_reader_rejects_garbage():
    with pytest.raises(TraceFormatError):
        Trace.from_lines('{"ev": "x", "t": 0}\nnot json\n')
    with pytest.raises(TraceFormatError):
        Trace.from_lines('{"t": 0}\n')
    text = run_scenario(overlap_scenario())[0].to_lines()
    assert Trace.from_lines(text).to_lines() == text


# -- metrics -----------------------------------------------------------------

def test_nearest_rank():
    assert nearest_rank([1, 2, 3, 4], 50) == 2
    assert nearest_rank([4, 3, 2, 1], 95) == 4
    assert nearest_rank([7], 99) == 7
    with pytest.raises(ValueError):
        nearest_rank([1], 0)


def test_csv_row_matches_header():
    _, m = run_scenario(hot())
    row = m.csv_row().split(",")
    assert len(row) == len(CSV_HEADER.split(","))
    assert row[:4] == ["hot", "psac:8", "2", "42"]


def test_only_measurement_window_counts():
    _, m = run_scenario(hot(warmup=0.0))
    _, m2 = run_scenario(replace(hot(), warmup=200.0))
    assert m.measure_ms == m2.measure_ms == 300
    assert m.throughput == m.successes / 0.3
