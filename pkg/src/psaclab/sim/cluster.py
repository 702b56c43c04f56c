"""Deterministic discrete-event simulation of a PSAC cluster.

Nodes are serial processors: a node takes one message from its inbox, runs the
handler to completion and is busy for the handler's service cost; messages it
sends leave when the handler finishes. Entities are sharded by CRC-32 of their
id, coordinators by CRC-32 of their address. Everything random comes from one
``random.Random(seed)`` and simultaneous events are ordered by insertion, so a
scenario always yields the same trace.

A crashed node loses its memory and its inbox; messages routed to it are
dropped. After the detection delay its shards move to the next live node (or,
with no other node left, the node restarts) and its actors are rebuilt from
the journal.
"""

from __future__ import annotations

import heapq
import random
import zlib
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

from ..commit import (
    Begin, CoordinatorState, CPhase, GlobalAbort, GlobalCommit, ObjectDecision, ParticipantState,
    Persist, PPhase, Send, StartTimer, TimeoutFired, ToObject, VoteNo, VoteRequest, VoteYes,
    coord_addr, coordinator_resume, coordinator_step, make_command, participant_resume,
    participant_step, recover_coordinator, recover_participant,
)
from ..entity.bundled import bank_catalog
from ..entity.model import EntitySpec, EntityState, SyncAction
from ..journal import Journal, MemoryBackend
from ..outcome import CommandInstance, Resolution
from ..psac import PsacObject
from .metrics import Metrics
from .scenario import CoordinatorCrash, NodeCrash, Scenario
from .trace import Trace
from .workload import Population, RequestGenerator


class SimulationError(RuntimeError):
    pass


@dataclass
class Node:
    id: int
    up: bool = True
    epoch: int = 0
    busy: bool = False
    busy_ms: float = 0.0
    inbox: deque = field(default_factory=deque)
    objects: dict[str, PsacObject] = field(default_factory=dict)
    participants: dict[str, ParticipantState] = field(default_factory=dict)
    coordinators: dict[str, CoordinatorState] = field(default_factory=dict)

    def wipe(self) -> None:
        self.inbox.clear()
        self.busy = False
        self.epoch += 1
        self.objects = {}
        self.participants = {}
        self.coordinators = {}


@dataclass
class User:
    id: str
    txn: Optional[str] = None
    sent_at: float = 0.0
    repeat: bool = True


class _Crashed(Exception):
    """Unwinds a handler when its node dies half-way."""


class Cluster:
    def __init__(self, scenario: Scenario, catalog: Optional[Mapping[str, EntitySpec]] = None):
        scenario.validate()
        self.sc = scenario
        self.catalog = dict(catalog if catalog is not None else bank_catalog())
        self.rng = random.Random(scenario.seed)
        self.cfg = scenario.commit
        self.max_parallel = scenario.max_parallel
        self.now = 0.0
        self._queue: list = []
        self._seq = 0
        self.trace = Trace(enabled=scenario.trace)
        self.journal = Journal(MemoryBackend())
        self.nodes = [Node(i) for i in range(scenario.nodes)]
        self.members = [True] * scenario.nodes
        self.population = Population(scenario, self.catalog)
        self.requests = RequestGenerator(scenario, self.catalog, self.rng)
        self.metrics = Metrics(scenario.name, scenario.engine_label, scenario.nodes,
                               scenario.seed, scenario.measure)
        self.users: dict[str, User] = {}
        self.pid_target: dict[str, SyncAction] = {}
        self.txn_user: dict[str, str] = {}
        self.vote_latency: dict[tuple[str, str], float] = {}
        self.crash_plan = {(c.txn, c.phase) for c in scenario.crashes
                           if isinstance(c, CoordinatorCrash)}
        self.in_flight = 0
        self._txn_counter = 0
        self._pending_recovery: dict[int, tuple[list, list]] = {}
        self._created: dict[str, str] = {}
        self._node_of_handler: Optional[Node] = None
        self._out: list = []
        self._appends = 0
        self._work = 0
        self._ran = False

    # -- event queue -------------------------------------------------------
    def _push(self, t: float, kind: str, *payload) -> None:
        self._seq += 1
        heapq.heappush(self._queue, (t, self._seq, kind, payload))

    def _latency(self, src: Optional[int], dst: Optional[int]) -> float:
        lat = self.sc.latency
        if src is not None and src == dst:
            return lat.intra
        if lat.kind == "constant":
            return lat.min
        return self.rng.uniform(lat.min, lat.max)

    # -- placement ---------------------------------------------------------
    def owner(self, key: str) -> int:
        n = len(self.nodes)
        h = zlib.crc32(key.encode()) % n
        for i in range(n):
            k = (h + i) % n
            if self.members[k]:
                return k
        raise SimulationError("no live node left")

    def route(self, addr: str) -> Optional[int]:
        if addr.startswith("coord:"):
            return self.owner(addr)
        target = self.pid_target.get(addr)
        return None if target is None else self.owner(target.entity_id)

    # -- public entry point ------------------------------------------------
    def run(self) -> tuple[Trace, Metrics]:
        if self._ran:
            raise SimulationError("a Cluster runs once")
        self._ran = True
        sc = self.sc
        if sc.workload.kind == "scripted":
            for st in sc.script:
                u = User(f"s:{st.txn}", repeat=False)
                self.users[u.id] = u
                for entity, ms in st.latency:
                    self.vote_latency[(st.txn, entity)] = ms
                self._push(st.at, "issue", u.id, st)
        else:
            for i in range(sc.workload.users):
                u = User(f"u{i}")
                self.users[u.id] = u
                self._push(self.rng.uniform(0, sc.workload.think_time), "issue", u.id, None)
        for c in sc.crashes:
            if isinstance(c, NodeCrash):
                self._push(c.at, "crash", c.node)

        while self._queue:
            t, _, kind, payload = heapq.heappop(self._queue)
            self.now = t
            getattr(self, f"_on_{kind}")(*payload)

        self.metrics.end_time = self.now
        self.metrics.busy_ms = [n.busy_ms for n in self.nodes]
        if self.trace.enabled:
            for entity, (spec, state) in sorted(self.final_states().items()):
                self.trace.emit(self.now, "final", entity=entity, spec=spec, state=state.to_json())
        return self.trace, self.metrics

    def final_states(self) -> dict[str, tuple[str, EntityState]]:
        """Applied state of every entity that ever had an object, after the run.

        Objects lost in a crash and never touched again are rebuilt from the journal.
        """
        out = {}
        for node in self.nodes:
            if not node.up:
                continue
            for eid, obj in node.objects.items():
                out[eid] = (obj.spec.name, obj.applied)
        for eid, spec_name in self._created.items():
            if eid in out:
                continue
            records = [(r.kind, r.body) for r in self.journal.replay(f"obj:{eid}")]
            obj = PsacObject.recover(self.catalog[spec_name], eid,
                                     self.population.initial(spec_name, eid), records,
                                     self.max_parallel)
            out[eid] = (spec_name, obj.applied)
        return out

    def account_total(self) -> int:
        """Sum of account balances in cents, counting untouched accounts at their start value."""
        final = self.final_states()
        total = 0
        for i in range(self.population.accounts):
            eid = f"acc-{i}"
            state = final[eid][1] if eid in final else self.population.initial("Account", eid)
            total += state["balance"].cents
        return total

    # -- users -------------------------------------------------------------
    def _on_issue(self, uid: str, scripted) -> None:
        user = self.users[uid]
        if scripted is not None:
            txn = scripted.txn
            acts = [SyncAction(a.spec, a.entity, a.action, a.args) for a in scripted.actions]
            root, syncs = acts[0], tuple(acts[1:])
        else:
            self._txn_counter += 1
            txn = f"t{self._txn_counter}"
            root, syncs = self.requests.next(txn)
        user.txn, user.sent_at = txn, self.now
        self.txn_user[txn] = uid
        self.in_flight += 1
        self.metrics.max_in_flight = max(self.metrics.max_in_flight, self.in_flight)
        self.trace.emit(self.now, "request_start", user=uid, txn=txn)
        dst = self.owner(coord_addr(txn))
        self._push(self.now + self._latency(None, dst), "deliver", coord_addr(txn),
                   Begin(txn, root, syncs))
        self._push(self.now + self.sc.user_timeout, "user_timeout", uid, txn)

    def _finish(self, uid: str, txn: str, ok: bool, timeout: bool = False) -> None:
        user = self.users[uid]
        if user.txn != txn:
            return  # stale reply
        user.txn = None
        self.in_flight -= 1
        latency = self.now - user.sent_at
        lo, hi = self.sc.warmup, self.sc.warmup + self.sc.measure
        m = self.metrics
        if lo <= self.now < hi:
            if ok:
                m.successes += 1
                m.latencies.append(latency)
            elif timeout:
                m.timeouts += 1
            else:
                m.failures += 1
        self.trace.emit(self.now, "request_end", user=uid, txn=txn, ok=ok, timeout=timeout,
                        latency=round(latency, 6))
        nxt = self.now + self.sc.workload.think_time
        if user.repeat and nxt < hi:
            self._push(nxt, "issue", uid, None)

    def _on_user_reply(self, uid: str, txn: str, ok: bool) -> None:
        self._finish(uid, txn, ok)

    def _on_user_timeout(self, uid: str, txn: str) -> None:
        self._finish(uid, txn, False, timeout=True)

    # -- message processing --------------------------------------------------
    def _on_deliver(self, addr: str, msg) -> None:
        nid = self.route(addr)
        if nid is None:
            return
        node = self.nodes[nid]
        if not node.up:
            return
        node.inbox.append((addr, msg))
        if not node.busy:
            node.busy = True
            self._run_one(node)

    def _on_timer(self, owner: str, msg: TimeoutFired, nid: int, epoch: int) -> None:
        # timers die with the memory of the node that armed them
        node = self.nodes[nid]
        if not (node.up and node.epoch == epoch and self.route(owner) == nid):
            return
        # a superseded timer counts as cancelled and costs nothing
        if owner.startswith("coord:"):
            state = node.coordinators.get(msg.txn)
        else:
            state = node.participants.get(owner)
        if state is not None and state.timer == msg.timer_id:
            self._on_deliver(owner, msg)

    def _on_step(self, nid: int, epoch: int) -> None:
        node = self.nodes[nid]
        if node.epoch != epoch or not node.up:
            return
        if node.inbox:
            self._run_one(node)
        else:
            node.busy = False

    def _run_one(self, node: Node) -> None:
        addr, msg = node.inbox.popleft()
        self._begin_handler(node)
        try:
            if addr.startswith("coord:"):
                self._coordinator_event(node, msg)
            else:
                self._participant_event(node, addr, msg)
        except _Crashed:
            pass
        cost = self._end_handler(node)
        if node.up:
            self._push(self.now + cost, "step", node.id, node.epoch)

    def _begin_handler(self, node: Node) -> None:
        self._node_of_handler = node
        self._out = []
        self._appends = 0
        self._work = 0

    def _end_handler(self, node: Node, charge_message: bool = True) -> float:
        c = self.sc.costs
        cost = (c.message if charge_message else 0.0) + c.journal * self._appends + c.work * self._work
        node.busy_ms += cost
        release = self.now + cost + (c.journal_latency if self._appends else 0.0)
        for item in self._out:
            if item[0] == "send":
                _, to, msg = item
                if to.startswith("user:"):
                    uid = to[5:]
                    self._push(release + self._latency(node.id, None), "user_reply", uid, msg[0],
                               msg[1])
                    continue
                lat = self.vote_latency.get((msg.txn, self.pid_target[to].entity_id)) \
                    if isinstance(msg, VoteRequest) else None
                if lat is None:
                    lat = self._latency(node.id, self.route(to))
                self._push(release + lat, "deliver", to, msg)
            else:
                _, owner, txn, tid, delay = item
                self._push(release + delay, "timer", owner, TimeoutFired(txn, tid),
                           node.id, node.epoch)
        self._out = []
        self._node_of_handler = None
        return cost

    # -- coordinator hosting ------------------------------------------------
    def _coordinator_event(self, node: Node, msg) -> None:
        txn = msg.txn
        state = node.coordinators.get(txn)
        if state is None:
            records = self.journal.replay(f"coord:{txn}")
            if records:
                # the shard moved here, or the coordinator finished and was evicted
                state = recover_coordinator(txn, [(r.kind, r.body) for r in records])
            elif not isinstance(msg, Begin):
                return  # never started
            else:
                state = CoordinatorState(txn)
                self.trace.emit(self.now, "begin", txn=txn, node=node.id,
                                targets=[msg.root.to_json(),
                                         *(s.to_json() for s in msg.syncs)])
        state, effects = coordinator_step(state, msg, self.cfg)
        self._store_coordinator(node, state)
        self._coordinator_effects(node, state, effects)
        if isinstance(msg, Begin) and (txn, "before_votes") in self.crash_plan:
            self.crash_plan.discard((txn, "before_votes"))
            self._crash(node)
            raise _Crashed

    def _store_coordinator(self, node: Node, state: CoordinatorState) -> None:
        if state.phase == CPhase.DONE:
            node.coordinators.pop(state.txn, None)
        else:
            node.coordinators[state.txn] = state

    def _coordinator_effects(self, node: Node, state: CoordinatorState, effects) -> None:
        txn = state.txn
        for eff in effects:
            if isinstance(eff, Persist):
                self._append(f"coord:{txn}", eff.kind, eff.body)
                if eff.kind == "Decision":
                    self.trace.emit(self.now, "global_decision", txn=txn,
                                    decision=eff.body["decision"])
                    if (txn, "after_decision") in self.crash_plan:
                        self.crash_plan.discard((txn, "after_decision"))
                        self._crash(node)
                        raise _Crashed
                    self._notify_user(txn, eff.body["decision"] == "commit")
            else:
                self._effect(node, eff)

    def _notify_user(self, txn: str, ok: bool) -> None:
        uid = self.txn_user.get(txn)
        if uid is not None:
            self._out.append(("send", f"user:{uid}", (txn, ok)))

    # -- participant hosting ------------------------------------------------
    def _participant_event(self, node: Node, pid: str, msg) -> None:
        state = node.participants.get(pid)
        if state is None:
            records = self.journal.replay(f"part:{pid}")
            if records:
                state = recover_participant(msg.txn, pid, [(r.kind, r.body) for r in records])
            else:
                state = ParticipantState(msg.txn, pid)
        command = None
        if isinstance(msg, VoteRequest) and state.phase == PPhase.INIT:
            command = make_command(pid, msg.target, self.catalog[msg.target.spec])
        self._participant_apply(node, state, msg, command)

    def _participant_apply(self, node: Node, state: ParticipantState, event,
                           command: Optional[CommandInstance] = None) -> None:
        before = state.phase
        state, effects = participant_step(state, event, self.cfg, command)
        if state.phase in (PPhase.COMMITTED, PPhase.ABORTED):
            # finished; a late duplicate decision is answered from the journal
            node.participants.pop(state.pid, None)
        else:
            node.participants[state.pid] = state
        self._participant_effects(node, state, effects)
        if state.phase != before and state.phase in (PPhase.COMMITTED, PPhase.ABORTED):
            target = state.target
            self.trace.emit(self.now, "resolution", txn=state.txn, pid=state.pid,
                            entity=None if target is None else target.entity_id,
                            resolution="commit" if state.phase == PPhase.COMMITTED else "abort")

    def _participant_effects(self, node: Node, state: ParticipantState, effects) -> None:
        for eff in effects:
            if isinstance(eff, Persist):
                self._append(f"part:{state.pid}", eff.kind, eff.body)
            elif isinstance(eff, ToObject):
                self._object_call(node, eff)
            else:
                if isinstance(eff, Send) and isinstance(eff.msg, (VoteYes, VoteNo)):
                    self.trace.emit(self.now, "vote", txn=state.txn, pid=state.pid,
                                    yes=isinstance(eff.msg, VoteYes))
                self._effect(node, eff)

    def _effect(self, node: Node, eff) -> None:
        if isinstance(eff, Send):
            if isinstance(eff.msg, VoteRequest):
                self.pid_target[eff.msg.participant] = eff.msg.target
            self._out.append(("send", eff.to, eff.msg))
        elif isinstance(eff, StartTimer):
            txn = eff.owner[6:] if eff.owner.startswith("coord:") else eff.owner.split("/p")[0]
            self._out.append(("timer", eff.owner, txn, eff.timer_id, eff.delay))
        else:
            raise SimulationError(f"unexpected effect {eff!r}")

    # -- objects -------------------------------------------------------------
    def _object(self, node: Node, target: SyncAction) -> PsacObject:
        eid = target.entity_id
        obj = node.objects.get(eid)
        if obj is not None:
            return obj
        spec = self.catalog[target.spec]
        initial = self.population.initial(target.spec, eid)
        stream = f"obj:{eid}"
        hook = self._object_hook(stream)
        records = self.journal.replay(stream)
        if records:
            obj = PsacObject.recover(spec, eid, initial, [(r.kind, r.body) for r in records],
                                     self.max_parallel, hook, self.sc.max_delays)
        else:
            obj = PsacObject(spec, eid, initial, self.max_parallel, hook, self.sc.max_delays)
        node.objects[eid] = obj
        if eid not in self._created:
            self._created[eid] = spec.name
            self.trace.emit(self.now, "object", entity=eid, spec=spec.name, node=node.id,
                            state=initial.to_json())
        return obj

    def _object_hook(self, stream: str):
        def write(kind: str, body: dict) -> None:
            self._append(stream, kind, body)
        return write

    def _object_call(self, node: Node, eff: ToObject) -> None:
        obj = self._object(node, eff.target)
        eid = obj.entity_id
        work0 = obj.tree.work
        if eff.command is not None:
            dup = obj.seen(eff.pid)
            cmd = replace(eff.command, arrival_seq=obj.last_seq + 1)
            replies = obj.handle_command(cmd)
            confirmation = False
        else:
            dup = False
            replies = obj.handle_resolution(eff.pid, eff.resolution)
            confirmation = True
        self._work += obj.tree.work - work0
        for i, r in enumerate(replies):
            if confirmation and i == 0:
                continue
            if r.kind in ("started", "failed", "delayed"):
                if not dup:
                    self._count_decision(r.kind)
                    self.trace.emit(self.now, "decision", entity=eid, pid=r.txn,
                                    txn=r.txn.split("/p")[0], action=self._action_of(r.txn),
                                    decision={"started": "accept", "failed": "reject",
                                              "delayed": "delay"}[r.kind])
                part = node.participants.get(r.txn)
                if part is not None:
                    self._participant_apply(node, part, ObjectDecision(part.txn, r.kind))
            elif r.kind == "applied":
                if self.trace.enabled:
                    self.trace.emit(self.now, "applied", entity=eid, pid=r.txn,
                                    txn=r.txn.split("/p")[0], state=r.state.to_json())

    def _action_of(self, pid: str) -> Optional[str]:
        target = self.pid_target.get(pid)
        return None if target is None else target.action

    def _count_decision(self, kind: str) -> None:
        m = self.metrics
        if kind == "started":
            m.accepted += 1
        elif kind == "failed":
            m.rejected += 1
        else:
            m.delayed += 1

    def _append(self, stream: str, kind: str, body: dict) -> int:
        self._appends += 1
        return self.journal.append(stream, kind, body, self.now)

    # -- failures ------------------------------------------------------------
    def _on_crash(self, nid: int) -> None:
        node = self.nodes[nid]
        if node.up:
            self._crash(node)

    def _crash(self, node: Node) -> None:
        self.trace.emit(self.now, "crash", node=node.id)
        self._pending_recovery[node.id] = (list(node.participants.items()),
                                           list(node.coordinators))
        node.up = False
        node.wipe()
        if self._node_of_handler is node:
            self._out = []  # nothing the dying handler produced leaves the node
        self._push(self.now + self.sc.detection_delay, "failover", node.id)

    def _on_failover(self, nid: int) -> None:
        node = self.nodes[nid]
        participants, coordinators = self._pending_recovery.pop(nid)
        if any(self.members[i] and i != nid and self.nodes[i].up for i in range(len(self.nodes))):
            self.members[nid] = False
            self.trace.emit(self.now, "failover", node=nid)
        else:
            node.up = True
            self.trace.emit(self.now, "restart", node=nid)
        for pid, old in participants:
            records = [(r.kind, r.body) for r in self.journal.replay(f"part:{pid}")]
            if not records:
                continue
            state = recover_participant(old.txn, pid, records)
            host = self.nodes[self.owner(self.pid_target[pid].entity_id)]
            if host.up:
                self._resume(host, lambda h=host, s=state: self._resume_participant(h, s))
            else:
                # the new owner is down as well; its own failover takes this over
                self._pending_recovery[host.id][0].append((pid, state))
        for txn in coordinators:
            records = [(r.kind, r.body) for r in self.journal.replay(f"coord:{txn}")]
            if not records:
                continue
            state = recover_coordinator(txn, records)
            host = self.nodes[self.owner(coord_addr(txn))]
            if host.up:
                self._resume(host, lambda h=host, s=state: self._resume_coordinator(h, s))
            else:
                self._pending_recovery[host.id][1].append(txn)

    def _resume(self, host: Node, action) -> None:
        self._begin_handler(host)
        try:
            action()
        except _Crashed:
            pass
        self._end_handler(host, charge_message=False)

    def _resume_participant(self, node: Node, state: ParticipantState) -> None:
        self.trace.emit(self.now, "recovered", pid=state.pid, txn=state.txn,
                        phase=state.phase.value, node=node.id)
        state, effects = participant_resume(state, self.cfg)
        node.participants[state.pid] = state
        self._participant_effects(node, state, effects)

    def _resume_coordinator(self, node: Node, state: CoordinatorState) -> None:
        self.trace.emit(self.now, "recovered", txn=state.txn, phase=state.phase.value,
                        node=node.id)
        decided = state.phase in (CPhase.COMMITTING, CPhase.ABORTING)
        state, effects = coordinator_resume(state, self.cfg)
        self._store_coordinator(node, state)
        self._coordinator_effects(node, state, effects)
        if decided:
            self._notify_user(state.txn, state.decision == Resolution.COMMIT)


def run_scenario(scenario: Scenario,
                 catalog: Optional[Mapping[str, EntitySpec]] = None) -> tuple[Trace, Metrics]:
    return Cluster(scenario, catalog).run()
