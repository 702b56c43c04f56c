"""A PSAC-enabled object: one entity's command handling under the protocol.

Incoming commands are accepted when independent of everything in progress,
rejected when they fail in every possible outcome, and delayed otherwise.
Committed effects are applied strictly in acceptance order, so a command that
commits early waits for its predecessors before its effect lands.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .entity.model import EntitySpec, EntityState, apply_effect
from .outcome import CommandInstance, Decision, OutcomeTree, Resolution

JournalHook = Callable[[str, dict], None]


class ObjectError(Exception):
    pass


@dataclass(frozen=True)
class Reply:
    """Object output. ``kind`` is one of started, failed, delayed, success, applied."""
    kind: str
    txn: str
    state: Optional[EntityState] = None

    def __repr__(self):
        extra = f", {self.state!r}" if self.state is not None else ""
        return f"{self.kind}({self.txn}{extra})"


def started(txn): return Reply("started", txn)
def failed(txn): return Reply("failed", txn)
def delayed(txn): return Reply("delayed", txn)
def success(txn): return Reply("success", txn)
def applied(txn, state): return Reply("applied", txn, state)


class PsacObject:
    def __init__(self, spec: EntitySpec, entity_id: str, state: EntityState,
                 max_parallel: int = 8, journal: Optional[JournalHook] = None,
                 max_delays: Optional[int] = None):
        if max_parallel < 1:
            raise ValueError("max_parallel must be positive")
        self.spec = spec
        self.entity_id = entity_id
        self.applied = state
        self.tree = OutcomeTree(spec, state)
        self.in_progress: list[CommandInstance] = []
        self.delayed: list[CommandInstance] = []
        self.queued: set[str] = set()
        self.max_parallel = max_parallel
        self.max_delays = max_delays
        self.journal = journal
        self.last_seq = 0
        self.counts = {"accepted": 0, "rejected": 0, "delayed": 0}
        self._replies: dict[str, Reply] = {}
        self._resolved: dict[str, Resolution] = {}
        self._delay_counts: dict[str, int] = {}

    # -- public protocol -------------------------------------------------
    def handle_command(self, command: CommandInstance) -> list[Reply]:
        if command.txn in self._replies:
            return [self._replies[command.txn]]
        if command.arrival_seq <= self.last_seq:
            raise ObjectError(f"arrival sequence {command.arrival_seq} not increasing")
        self.last_seq = command.arrival_seq
        return self._route(command, first=True)

    def seen(self, txn: str) -> bool:
        """True if ``txn`` already got a reply (a new delivery would be a duplicate)."""
        return txn in self._replies

    def handle_resolution(self, txn: str, resolution: Resolution) -> list[Reply]:
        if txn in self._resolved:
            if self._resolved[txn] != resolution:
                raise ObjectError(f"{txn}: conflicting resolution {resolution.value}")
            return [self._replies[txn]]
        if resolution == Resolution.ABORT:
            return self._abort(txn)
        if not any(c.txn == txn for c in self.in_progress):
            raise ObjectError(f"{txn}: commit of a command that is not in progress")
        self._log("Resolution", {"txn": txn, "resolution": "commit"})
        self.tree.resolve(txn, Resolution.COMMIT)
        self.queued.add(txn)
        self._resolved[txn] = resolution
        reply = self._remember(success(txn))
        # pruning may have made delayed commands independent
        return [reply, *self.drain(retry=True)]

    def drain(self, retry: bool = False) -> list[Reply]:
        """Apply committed heads in order and retry delayed commands."""
        out: list[Reply] = []
        if retry:
            out += self._retry_delayed()
        while self.in_progress and self.in_progress[0].txn in self.queued:
            head = self.in_progress[0]
            # journal before mutating so a failed append leaves the object intact
            state = apply_effect(self.spec, self.applied, head.action, head.args)
            self._log("EffectApplied", {"txn": head.txn, "state": state.to_json()})
            cmd, _ = self.tree.apply_head()
            self.in_progress.pop(0)
            self.queued.discard(cmd.txn)
            self.applied = state
            out.append(applied(cmd.txn, state))
            out += self._retry_delayed()
        return out

    # -- internals -------------------------------------------------------
    def _abort(self, txn: str) -> list[Reply]:
        for i, c in enumerate(self.delayed):
            if c.txn == txn:
                del self.delayed[i]
                self._resolved[txn] = Resolution.ABORT
                return [self._remember(failed(txn))]
        if any(c.txn == txn for c in self.in_progress):
            self._log("Resolution", {"txn": txn, "resolution": "abort"})
            self.tree.resolve(txn, Resolution.ABORT)
            self.in_progress = [c for c in self.in_progress if c.txn != txn]
            self._resolved[txn] = Resolution.ABORT
            reply = self._remember(failed(txn))
            return [reply, *self.drain(retry=True)]
        # rejected earlier, or the abort overtook the command itself
        self._resolved[txn] = Resolution.ABORT
        return [self._remember(failed(txn))]

    def _route(self, cmd: CommandInstance, first: bool) -> list[Reply]:
        if len(self.in_progress) >= self.max_parallel:
            decision = Decision.DELAY
        else:
            decision = self.tree.decide(cmd)
        if decision == Decision.ACCEPT:
            self._log("CommandAccepted", cmd.to_json())
            self.tree.admit(cmd)
            self.in_progress.append(cmd)
            self._delay_counts.pop(cmd.txn, None)
            self.counts["accepted"] += 1
            return [self._remember(started(cmd.txn))]
        if decision == Decision.REJECT:
            self._delay_counts.pop(cmd.txn, None)
            self.counts["rejected"] += 1
            return [self._remember(failed(cmd.txn))]
        self.delayed.append(cmd)
        if first:
            self.counts["delayed"] += 1
            return [self._remember(delayed(cmd.txn))]
        n = self._delay_counts.get(cmd.txn, 0) + 1
        self._delay_counts[cmd.txn] = n
        if self.max_delays is not None and n > self.max_delays:
            self.delayed.pop()
            self._delay_counts.pop(cmd.txn)
            self.counts["rejected"] += 1
            return [self._remember(failed(cmd.txn))]
        return []

    def _retry_delayed(self) -> list[Reply]:
        current, self.delayed = self.delayed, []
        out: list[Reply] = []
        for cmd in current:
            out += self._route(cmd, first=False)
        return out

    def _remember(self, reply: Reply) -> Reply:
        self._replies[reply.txn] = reply
        return reply

    def _log(self, kind: str, body: dict) -> None:
        if self.journal is not None:
            self.journal(kind, body)

    # -- recovery --------------------------------------------------------
    @classmethod
    def recover(cls, spec: EntitySpec, entity_id: str, initial: EntityState,
                records: Iterable[tuple[str, dict]], max_parallel: int = 8,
                journal: Optional[JournalHook] = None,
                max_delays: Optional[int] = None) -> PsacObject:
        """Rebuild an object from its journal (kind, body) records.

        Delayed commands are not journaled; their requesters retry them.
        """
        obj = cls(spec, entity_id, initial, max_parallel, None, max_delays)
        for kind, body in records:
            if kind == "CommandAccepted":
                cmd = CommandInstance.from_json(body)
                obj.tree.admit(cmd)
                obj.in_progress.append(cmd)
                obj.last_seq = max(obj.last_seq, cmd.arrival_seq)
                obj._remember(started(cmd.txn))
            elif kind == "Resolution":
                txn, res = body["txn"], Resolution(body["resolution"])
                obj.tree.resolve(txn, res)
                obj._resolved[txn] = res
                if res == Resolution.COMMIT:
                    obj.queued.add(txn)
                    obj._remember(success(txn))
                else:
                    obj.in_progress = [c for c in obj.in_progress if c.txn != txn]
                    obj._remember(failed(txn))
            elif kind == "EffectApplied":
                cmd, state = obj.tree.apply_head()
                if cmd.txn != body["txn"] or state != EntityState.from_json(body["state"]):
                    raise ObjectError(f"journal replay diverged at {body['txn']}")
                obj.in_progress.pop(0)
                obj.queued.discard(cmd.txn)
                obj.applied = state
            else:
                raise ObjectError(f"unexpected journal record {kind!r}")
        obj.journal = journal
        return obj

    def snapshot(self) -> dict:
        """Externally visible state, used to compare live and recovered objects."""
        return {
            "applied": self.applied,
            "in_progress": [c.txn for c in self.in_progress],
            "queued": sorted(self.queued),
            "leaves": sorted(map(repr, self.tree.leaves)),
        }
