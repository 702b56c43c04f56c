"""Strict two-phase-locking object, kept separate from the PSAC code path.

One exclusive lock per object and a FIFO wait queue. It serves as the
reference behaviour that PSAC with ``max_parallel=1`` must reproduce.
"""

from __future__ import annotations

from collections import deque
from typing import Optional

from .entity.model import EntitySpec, EntityState, apply_effect, eval_guard
from .outcome import CommandInstance, Resolution
from .psac import Reply


class StrictLockObject:
    def __init__(self, spec: EntitySpec, state: EntityState):
        self.spec = spec
        self.state = state
        self.holder: Optional[CommandInstance] = None
        self.waiting: deque[CommandInstance] = deque()

    def handle_command(self, cmd: CommandInstance) -> list[Reply]:
        if self.holder is not None:
            self.waiting.append(cmd)
            return [Reply("delayed", cmd.txn)]
        return self._try_lock(cmd)

    def handle_resolution(self, txn: str, resolution: Resolution) -> list[Reply]:
        if self.holder is not None and self.holder.txn == txn:
            cmd, self.holder = self.holder, None
            if resolution == Resolution.COMMIT:
                self.state = apply_effect(self.spec, self.state, cmd.action, cmd.args)
                out = [Reply("success", txn), Reply("applied", txn, self.state)]
            else:
                out = [Reply("failed", txn)]
            return out + self._grant()
        for cmd in self.waiting:
            if cmd.txn == txn and resolution == Resolution.ABORT:
                self.waiting.remove(cmd)
                return [Reply("failed", txn)]
        raise KeyError(txn)

    def _try_lock(self, cmd: CommandInstance) -> list[Reply]:
        if eval_guard(self.spec, self.state, cmd.action, cmd.args):
            self.holder = cmd
            return [Reply("started", cmd.txn)]
        return [Reply("failed", cmd.txn)]

    def _grant(self) -> list[Reply]:
        out = []
        while self.holder is None and self.waiting:
            out += self._try_lock(self.waiting.popleft())
        return out
