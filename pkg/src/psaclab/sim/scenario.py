"""Scenario description: cluster size, workload, latencies, costs, failures.

Scenarios are plain dataclasses and round-trip through YAML or JSON::

    name: synchot
    nodes: 4
    engine: psac:8          # or 2pl
    workload: {kind: synchot, hot_accounts: 10, users: 64}
    latency: {kind: uniform, min: 1.0, max: 5.0, intra: 0.0}
    seed: 7
    crashes:
      - {node: 1, at: 400.0}
      - {txn: t12, phase: after_decision}
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Optional, Union

import yaml

from ..commit import CommitConfig
from ..entity.values import Money


class ScenarioError(ValueError):
    pass


def parse_engine(text: str) -> int:
    """``psac:<k>`` gives max_parallel k; ``2pl`` is PSAC with max_parallel 1."""
    t = text.strip().lower()
    if t in ("2pl", "twopl"):
        return 1
    if t.startswith("psac:"):
        try:
            k = int(t[5:])
        except ValueError:
            k = 0
        if k >= 1:
            return k
    raise ScenarioError(f"bad engine {text!r}; expected psac:<k> or 2pl")


@dataclass(frozen=True)
class Latency:
    kind: str = "uniform"      # uniform | constant
    min: float = 1.0
    max: float = 5.0
    intra: float = 0.0         # same-node delivery

    def validate(self) -> None:
        if self.kind not in ("uniform", "constant"):
            raise ScenarioError(f"unknown latency kind {self.kind!r}")
        if self.min < 0 or self.max < self.min or self.intra < 0:
            raise ScenarioError("latency bounds must satisfy 0 <= min <= max, intra >= 0")


@dataclass(frozen=True)
class Costs:
    """Simulated CPU time in ms."""
    message: float = 0.1       # per handled message or timer
    journal: float = 0.01      # per journal append (the store has its own CPU)
    work: float = 0.0005       # per guard evaluation or effect application
    # wall time of a durable journal write; the CPU is free meanwhile, but the
    # handler's messages leave only once its writes are durable
    journal_latency: float = 3.0


@dataclass(frozen=True)
class Workload:
    kind: str = "synchot"      # nosync | sync | synchot | scripted
    users: int = 64
    accounts: int = 10_000
    hot_accounts: int = 10
    initial_balance: int = 1_000_000      # cents
    amount_min: int = 100
    amount_max: int = 10_000
    think_time: float = 1.0


@dataclass(frozen=True)
class ScriptedAction:
    spec: str
    entity: str
    action: str
    args: tuple = ()


@dataclass(frozen=True)
class ScriptedTxn:
    txn: str
    at: float
    actions: tuple[ScriptedAction, ...]
    # per-entity latency of this transaction's vote request
    latency: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class NodeCrash:
    node: int
    at: float


@dataclass(frozen=True)
class CoordinatorCrash:
    txn: str
    phase: str                 # before_votes | after_decision


Crash = Union[NodeCrash, CoordinatorCrash]
CRASH_PHASES = ("before_votes", "after_decision")


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    nodes: int = 1
    engine: str = "psac:8"
    workload: Workload = Workload()
    latency: Latency = Latency()
    costs: Costs = Costs()
    commit: CommitConfig = CommitConfig()
    warmup: float = 200.0
    measure: float = 1000.0
    seed: int = 0
    user_timeout: float = 5000.0
    detection_delay: float = 100.0
    max_delays: Optional[int] = None
    trace: bool = True
    crashes: tuple[Crash, ...] = ()
    # scripted workloads: explicit population and transactions
    # (entity, spec, lifecycle, ((field, value), ...))
    population: tuple[tuple[str, str, str, tuple[tuple[str, Any], ...]], ...] = ()
    script: tuple[ScriptedTxn, ...] = ()

    @property
    def max_parallel(self) -> int:
        return parse_engine(self.engine)

    @property
    def engine_label(self) -> str:
        k = self.max_parallel
        return "2pl" if k == 1 else f"psac:{k}"

    def validate(self) -> None:
        parse_engine(self.engine)
        if self.nodes < 1:
            raise ScenarioError("nodes must be >= 1")
        if self.warmup < 0 or self.measure <= 0:
            raise ScenarioError("warmup must be >= 0 and measure > 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ScenarioError("seed must be a 64-bit unsigned integer")
        self.latency.validate()
        w = self.workload
        if w.kind not in ("nosync", "sync", "synchot", "scripted"):
            raise ScenarioError(f"unknown workload {w.kind!r}")
        if w.kind == "scripted":
            if not self.script:
                raise ScenarioError("scripted workload without transactions")
        else:
            if w.users < 1:
                raise ScenarioError("users must be >= 1")
            n = w.hot_accounts if w.kind == "synchot" else w.accounts
            if w.kind != "nosync" and n < 2:
                raise ScenarioError("transfers need at least two accounts")
            if not 0 < w.amount_min <= w.amount_max:
                raise ScenarioError("amount range must be positive and ordered")
        for c in self.crashes:
            if isinstance(c, NodeCrash) and not 0 <= c.node < self.nodes:
                raise ScenarioError(f"invalid node id {c.node}")
            if isinstance(c, CoordinatorCrash) and c.phase not in CRASH_PHASES:
                raise ScenarioError(f"unknown crash phase {c.phase!r}")

    def with_engine(self, engine: str) -> Scenario:
        return replace(self, engine=engine)


def inject_failure(scenario: Scenario, crash: Crash) -> Scenario:
    if isinstance(crash, NodeCrash):
        if not 0 <= crash.node < scenario.nodes:
            raise ScenarioError(f"invalid node id {crash.node}")
        if not 0 <= crash.at <= scenario.warmup + scenario.measure:
            raise ScenarioError("crash time outside the run")
    elif crash.phase not in CRASH_PHASES:
        raise ScenarioError(f"unknown crash phase {crash.phase!r}")
    return replace(scenario, crashes=scenario.crashes + (crash,))


# -- (de)serialization -------------------------------------------------------

def _build(cls, raw: dict):
    known = {f.name for f in fields(cls)}
    extra = set(raw) - known
    if extra:
        raise ScenarioError(f"unknown {cls.__name__} keys: {sorted(extra)}")
    return cls(**raw)


def _arg(v):
    if isinstance(v, dict) and set(v) == {"money"}:
        return Money(int(v["money"]))
    if isinstance(v, str) and v.startswith("€"):
        return Money.eur(v[1:])
    return v


def _plain_arg(v):
    return {"money": v.cents} if isinstance(v, Money) else v


def scenario_from_dict(raw: dict) -> Scenario:
    raw = dict(raw)
    try:
        if "workload" in raw:
            raw["workload"] = _build(Workload, raw["workload"])
        if "latency" in raw:
            raw["latency"] = _build(Latency, raw["latency"])
        if "costs" in raw:
            raw["costs"] = _build(Costs, raw["costs"])
        if "commit" in raw:
            raw["commit"] = _build(CommitConfig, raw["commit"])
        crashes = []
        for c in raw.get("crashes", ()):
            crashes.append(_build(NodeCrash, c) if "node" in c else _build(CoordinatorCrash, c))
        raw["crashes"] = tuple(crashes)
        raw["population"] = tuple(
            (p["entity"], p["spec"], p["lifecycle"],
             tuple((k, _arg(v)) for k, v in sorted(p["data"].items())))
            for p in raw.get("population", ()))
        raw["script"] = tuple(
            ScriptedTxn(t["txn"], float(t["at"]),
                        tuple(ScriptedAction(a["spec"], a["entity"], a["action"],
                                             tuple(_arg(x) for x in a.get("args", ())))
                              for a in t["actions"]),
                        tuple(sorted((t.get("latency") or {}).items())))
            for t in raw.get("script", ()))
        sc = _build(Scenario, raw)
    except TypeError as exc:
        raise ScenarioError(str(exc)) from exc
    sc.validate()
    return sc


def scenario_to_dict(sc: Scenario) -> dict:
    out = asdict(sc)
    out["crashes"] = [asdict(c) for c in sc.crashes]
    out["population"] = [{"entity": e, "spec": s, "lifecycle": lc,
                          "data": {k: _plain_arg(v) for k, v in d}}
                         for e, s, lc, d in sc.population]
    out["script"] = [{"txn": t.txn, "at": t.at,
                      "actions": [{"spec": a.spec, "entity": a.entity, "action": a.action,
                                   "args": [_plain_arg(x) for x in a.args]} for a in t.actions],
                      "latency": dict(t.latency)} for t in sc.script]
    return out


def load_scenario(path: Union[str, os.PathLike]) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    raw = json.loads(text) if os.fspath(path).endswith(".json") else yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: expected a mapping")
    return scenario_from_dict(raw)
