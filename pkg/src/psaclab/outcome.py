"""Possible-outcome tree of the in-progress commands at one object.

Each admitted command may still commit or abort, so ``k`` unresolved commands
give ``2**k`` possible object states. The leaves are materialised as concrete
``EntityState`` values and kept up to date incrementally as commands are
admitted, resolved and applied.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .entity.model import (
    EntitySpec, EntityState, NotEnabledError, apply_effect, check_bindings, effect_of, eval_guard,
    guard_of,
)
from .entity.values import Value, encode_mapping, decode_mapping


class Decision(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    DELAY = "delay"


class Resolution(str, Enum):
    COMMIT = "commit"
    ABORT = "abort"


class TreeError(Exception):
    pass


class OutcomeBoundError(TreeError):
    pass


@dataclass(frozen=True)
class CommandInstance:
    txn: str
    action: str
    args: Mapping[str, Value] = field(default_factory=dict)
    arrival_seq: int = 0

    def to_json(self) -> dict:
        return {"txn": self.txn, "action": self.action, "args": encode_mapping(dict(self.args)),
                "seq": self.arrival_seq}

    @classmethod
    def from_json(cls, raw: Mapping) -> CommandInstance:
        return cls(raw["txn"], raw["action"], decode_mapping(raw["args"]), raw["seq"])


class OutcomeTree:
    """Leaves of the commit/abort tree over the admitted commands.

    ``work`` counts guard evaluations and effect applications; the simulator
    uses it to charge service time.
    """

    def __init__(self, spec: EntitySpec, base: EntityState):
        self.spec = spec
        self.base = base
        self.admitted: list[CommandInstance] = []
        self.committed: set[str] = set()
        # (bitmask of commands assumed committed, resulting state), in branch
        # order: abort branch before commit branch, earliest command most significant
        self._leaves: list[tuple[int, EntityState]] = [(0, base)]
        self._bit: dict[str, int] = {}
        self.work = 0

    @property
    def leaves(self) -> list[EntityState]:
        return [s for _, s in self._leaves]

    def leaf_items(self) -> list[tuple[frozenset[str], EntityState]]:
        """Leaves paired with the set of txns each one assumes committed."""
        return [(frozenset(t for t, b in self._bit.items() if mask & b), s)
                for mask, s in self._leaves]

    def _free_bit(self) -> int:
        used = 0
        for b in self._bit.values():
            used |= b
        return (used + 1) & ~used  # lowest clear bit

    def unresolved(self) -> list[CommandInstance]:
        return [c for c in self.admitted if c.txn not in self.committed]

    def __contains__(self, txn: str) -> bool:
        return txn in self._bit

    def _resolver(self, command: CommandInstance):
        """Per-lifecycle ActionDef lookup for one command, bindings checked once."""
        check_bindings(self.spec, command.action, command.args)
        cache: dict = {}

        def adef_for(lifecycle: str):
            if lifecycle not in cache:
                cache[lifecycle] = self.spec.lookup(command.action, lifecycle)
            return cache[lifecycle]
        return adef_for

    def decide(self, candidate: CommandInstance) -> Decision:
        """Accept iff the guard holds in every leaf, Reject iff in none."""
        adef_for = self._resolver(candidate)
        args = candidate.args
        seen_true = seen_false = False
        for _, state in self._leaves:
            self.work += 1
            adef = adef_for(state.lifecycle)
            if adef is not None and guard_of(adef, state, args):
                seen_true = True
            else:
                seen_false = True
            if seen_true and seen_false:
                return Decision.DELAY
        return Decision.ACCEPT if seen_true else Decision.REJECT

    def admit(self, command: CommandInstance) -> None:
        if command.txn in self:
            raise TreeError(f"transaction {command.txn!r} already admitted")
        adef_for = self._resolver(command)
        args = command.args
        bit = self._free_bit()
        leaves = []
        for committed, state in self._leaves:
            leaves.append((committed, state))
            adef = adef_for(state.lifecycle)
            if adef is None:
                raise NotEnabledError(
                    f"{self.spec.name}.{command.action} not enabled in {state.lifecycle!r}")
            leaves.append((committed | bit, effect_of(adef, state, args)))
        self.work += len(self._leaves)
        self._leaves = leaves
        self._bit[command.txn] = bit
        self.admitted.append(command)

    def resolve(self, txn: str, resolution: Resolution) -> None:
        if txn not in self:
            raise TreeError(f"unknown transaction {txn!r}")
        if txn in self.committed:
            raise TreeError(f"transaction {txn!r} already resolved")
        bit = self._bit[txn]
        if resolution == Resolution.COMMIT:
            self.committed.add(txn)
            self._leaves = [(c, s) for c, s in self._leaves if c & bit]
        else:
            self.admitted = [c for c in self.admitted if c.txn != txn]
            del self._bit[txn]
            self._leaves = [(c, s) for c, s in self._leaves if not c & bit]

    def head_committed(self) -> bool:
        return bool(self.admitted) and self.admitted[0].txn in self.committed

    def apply_head(self) -> tuple[CommandInstance, EntityState]:
        """Fold the committed head command into the base state."""
        if not self.head_committed():
            raise TreeError("head of the tree is not committed")
        head = self.admitted.pop(0)
        self.committed.discard(head.txn)
        self.work += 1
        self.base = apply_effect(self.spec, self.base, head.action, head.args)
        # every remaining leaf has the bit set; clear it so it can be reused
        keep = ~self._bit.pop(head.txn)
        self._leaves = [(c & keep, s) for c, s in self._leaves]
        return head, self.base


def brute_force_outcomes(base: EntityState, in_progress: Sequence[CommandInstance],
                         spec: EntitySpec, bound: int = 12) -> list[EntityState]:
    """Every commit subset of ``in_progress`` applied in order from ``base``.

    Independent reference for ``OutcomeTree``; returns a multiset (list), one
    state per subset.
    """
    if len(in_progress) > bound:
        raise OutcomeBoundError(f"{len(in_progress)} commands exceed the bound {bound}")
    out = []
    for mask in itertools.product((False, True), repeat=len(in_progress)):
        state = base
        for commit, cmd in zip(mask, in_progress):
            if commit:
                state = apply_effect(spec, state, cmd.action, cmd.args)
        out.append(state)
    return out


def classify(states: Iterable[EntityState], spec: EntitySpec, candidate: CommandInstance) -> Decision:
    """Decision by direct quantification over an explicit state collection."""
    results = [eval_guard(spec, s, candidate.action, candidate.args) for s in states]
    if all(results):
        return Decision.ACCEPT
    if not any(results):
        return Decision.REJECT
    return Decision.DELAY
