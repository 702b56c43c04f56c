"""Offline checks over simulator traces.

* linearizability: at every object, committed effects are applied in the
  order their commands were accepted;
* atomicity: every participant of a transaction ends with the same resolution,
  which matches the coordinator's decision;
* state serializability: the final states equal those of some serial order of
  the committed transactions, found by exhaustive enumeration.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .entity.model import EntitySpec, EntityState, SyncAction, apply_effect, bind_args, eval_guard
from .sim.trace import Trace


class MalformedTrace(ValueError):
    pass


class BoundExceeded(ValueError):
    pass


@dataclass
class CheckReport:
    name: str
    violations: list[str] = field(default_factory=list)
    checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"check": self.name, "ok": self.ok, "checked": self.checked,
                "violations": list(self.violations)}


def _events(trace: Trace | Iterable[dict]) -> list[dict]:
    events = list(trace)
    for i, e in enumerate(events):
        if "ev" not in e:
            raise MalformedTrace(f"event {i} has no 'ev' field")
    return events


def _need(e: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in e]
    if missing:
        raise MalformedTrace(f"{e['ev']} event lacks {missing}: {e}")


# -- linearizability ---------------------------------------------------------

def check_linearizability(trace: Trace | Iterable[dict]) -> CheckReport:
    report = CheckReport("linearizability")
    accepted: dict[str, list[str]] = {}
    applied: dict[str, list[str]] = {}
    for e in _events(trace):
        if e["ev"] == "decision" and e.get("decision") == "accept":
            _need(e, "entity", "pid")
            accepted.setdefault(e["entity"], []).append(e["pid"])
        elif e["ev"] == "applied":
            _need(e, "entity", "pid")
            applied.setdefault(e["entity"], []).append(e["pid"])
    for entity in sorted(set(accepted) | set(applied)):
        acc = accepted.get(entity, [])
        app = applied.get(entity, [])
        report.checked += 1
        stray = [p for p in app if p not in acc]
        if stray:
            report.violations.append(f"{entity}: applied without acceptance: {stray}")
            continue
        if len(set(app)) != len(app):
            report.violations.append(f"{entity}: an effect was applied twice")
            continue
        done = set(app)
        expected = [p for p in acc if p in done]
        if app != expected:
            report.violations.append(f"{entity}: applied order {app} != accept order {expected}")
    return report


# -- atomicity ---------------------------------------------------------------

def check_atomicity(trace: Trace | Iterable[dict]) -> CheckReport:
    report = CheckReport("atomicity")
    participants: dict[str, int] = {}
    decisions: dict[str, set[str]] = {}
    resolutions: dict[str, dict[str, str]] = {}
    applied: dict[str, set[str]] = {}
    for e in _events(trace):
        ev = e["ev"]
        if ev == "begin":
            _need(e, "txn", "targets")
            participants[e["txn"]] = len(e["targets"])
        elif ev == "global_decision":
            _need(e, "txn", "decision")
            decisions.setdefault(e["txn"], set()).add(e["decision"])
        elif ev == "resolution":
            _need(e, "txn", "pid", "resolution")
            seen = resolutions.setdefault(e["txn"], {})
            if e["pid"] in seen and seen[e["pid"]] != e["resolution"]:
                report.violations.append(f"{e['txn']}: {e['pid']} resolved both ways")
            seen[e["pid"]] = e["resolution"]
        elif ev == "applied":
            _need(e, "txn", "pid")
            applied.setdefault(e["txn"], set()).add(e["pid"])

    for txn in sorted(set(participants) | set(decisions) | set(resolutions)):
        report.checked += 1
        dec = decisions.get(txn, set())
        res = resolutions.get(txn, {})
        if len(dec) > 1:
            report.violations.append(f"{txn}: coordinator decided both commit and abort")
            continue
        kinds = set(res.values())
        if len(kinds) > 1:
            first = sorted(res.items())
            report.violations.append(f"{txn}: divergent participant resolutions {first}")
            continue
        decision = next(iter(dec), None)
        if kinds and decision is not None and kinds != {decision}:
            report.violations.append(f"{txn}: participants {kinds.pop()} but coordinator {decision}")
            continue
        outcome = decision or next(iter(kinds), None)
        if outcome == "commit":
            n = participants.get(txn)
            if n is not None:
                pids = {f"{txn}/p{k}" for k in range(n)}
                missing = sorted(pids - set(res))
                if missing:
                    report.violations.append(f"{txn}: committed but {missing} never resolved")
                unapplied = sorted(pids - applied.get(txn, set()))
                if not missing and unapplied:
                    report.violations.append(f"{txn}: committed but {unapplied} never applied")
        elif applied.get(txn):
            report.violations.append(f"{txn}: effects applied for a non-committed transaction")
    return report


# -- serializability -----------------------------------------------------------

@dataclass
class SerializabilityVerdict:
    serializable: bool
    witness: Optional[tuple[str, ...]]
    final_state: dict[str, EntityState]
    serial_states: list[tuple[tuple[str, ...], dict[str, EntityState]]]

    def to_json(self) -> dict:
        return {
            "serializable": self.serializable,
            "witness": list(self.witness) if self.witness else None,
            "final": {k: v.to_json() for k, v in sorted(self.final_state.items())},
            "serial": [{"order": list(o), "states": {k: v.to_json() for k, v in sorted(s.items())}}
                       for o, s in self.serial_states],
        }


@dataclass(frozen=True)
class History:
    """What serializability needs from a trace."""
    initial: dict[str, tuple[str, EntityState]]
    committed: dict[str, tuple[SyncAction, ...]]
    final: dict[str, EntityState]


def extract_history(trace: Trace | Iterable[dict],
                    initial: Optional[Mapping[str, tuple[str, EntityState]]] = None) -> History:
    init: dict[str, tuple[str, EntityState]] = {}
    targets: dict[str, tuple[SyncAction, ...]] = {}
    committed: list[str] = []
    final: dict[str, EntityState] = {}
    last_applied: dict[str, EntityState] = {}
    for e in _events(trace):
        ev = e["ev"]
        if ev == "object":
            init[e["entity"]] = (e["spec"], EntityState.from_json(e["state"]))
        elif ev == "begin":
            targets[e["txn"]] = tuple(SyncAction.from_json(t) for t in e["targets"])
        elif ev == "global_decision" and e["decision"] == "commit":
            if e["txn"] not in committed:
                committed.append(e["txn"])
        elif ev == "applied":
            last_applied[e["entity"]] = EntityState.from_json(e["state"])
        elif ev == "final":
            final[e["entity"]] = EntityState.from_json(e["state"])
    if initial is not None:
        init.update(initial)
    for eid, (_, s) in init.items():
        final.setdefault(eid, last_applied.get(eid, s))
    missing = [t for t in committed if t not in targets]
    if missing:
        raise MalformedTrace(f"committed transactions without begin: {missing}")
    return History(init, {t: targets[t] for t in committed}, final)


def _run_serial(order: Sequence[str], history: History,
                specs: Mapping[str, EntitySpec]) -> Optional[dict[str, EntityState]]:
    """States after running ``order`` one at a time; None if some guard fails."""
    states = {eid: s for eid, (_, s) in history.initial.items()}
    for txn in order:
        for target in history.committed[txn]:
            spec = specs[target.spec]
            args = bind_args(spec, target.action, target.args)
            state = states[target.entity_id]
            if not eval_guard(spec, state, target.action, args):
                return None
            states[target.entity_id] = apply_effect(spec, state, target.action, args)
    return states


def check_serializability(trace: Trace | Iterable[dict], specs: Mapping[str, EntitySpec],
                          initial: Optional[Mapping[str, tuple[str, EntityState]]] = None,
                          bound: int = 8) -> SerializabilityVerdict:
    history = extract_history(trace, initial)
    txns = list(history.committed)
    if len(txns) > bound:
        raise BoundExceeded(f"{len(txns)} committed transactions exceed the bound {bound}")
    touched = sorted(history.initial)
    final = {eid: history.final[eid] for eid in touched}
    serial: list[tuple[tuple[str, ...], dict[str, EntityState]]] = []
    witness = None
    for order in itertools.permutations(txns):
        states = _run_serial(order, history, specs)
        if states is None:
            continue
        states = {eid: states[eid] for eid in touched}
        serial.append((order, states))
        if witness is None and states == final:
            witness = order
    return SerializabilityVerdict(witness is not None, witness, final, serial)


def serializable_by_subsets(trace: Trace | Iterable[dict], specs: Mapping[str, EntitySpec],
                            initial: Optional[Mapping[str, tuple[str, EntityState]]] = None,
                            bound: int = 8) -> bool:
    """Second, independent decision procedure used to cross-check the first.

    Builds the set of reachable states for every subset of transactions,
    extending subsets one transaction at a time, instead of walking permutations.
    """
    history = extract_history(trace, initial)
    txns = list(history.committed)
    if len(txns) > bound:
        raise BoundExceeded(f"{len(txns)} committed transactions exceed the bound {bound}")
    ids = sorted(history.initial)

    def freeze(states: Mapping[str, EntityState]) -> tuple:
        return tuple(states[i] for i in ids)

    start = freeze({i: s for i, (_, s) in history.initial.items()})
    layer: dict[frozenset, set[tuple]] = {frozenset(): {start}}
    for _ in txns:
        nxt: dict[frozenset, set[tuple]] = {}
        for done, reachable in layer.items():
            for txn in txns:
                if txn in done:
                    continue
                for packed in reachable:
                    states = dict(zip(ids, packed))
                    ok = True
                    for target in history.committed[txn]:
                        spec = specs[target.spec]
                        args = bind_args(spec, target.action, target.args)
                        s = states[target.entity_id]
                        if not eval_guard(spec, s, target.action, args):
                            ok = False
                            break
                        states[target.entity_id] = apply_effect(spec, s, target.action, args)
                    if ok:
                        nxt.setdefault(done | {txn}, set()).add(freeze(states))
        layer = nxt
    goal = freeze(history.final)
    return any(goal in reachable for reachable in layer.values())
