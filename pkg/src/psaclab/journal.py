"""Append-only, per-stream event journal with replay.

Every stream (an entity, a coordinator or a participant) owns a dense sequence
of records starting at 1. Two backends are provided: an in-memory one with
fault injection for tests, and a JSON-lines file with one record per line::

    {"body": {...}, "kind": "CommandAccepted", "seq": 1, "stream": "A", "t": 12.5}

Keys are written sorted and without whitespace so files are byte-stable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Protocol

KINDS = frozenset({
    "CommandAccepted", "EffectApplied", "Vote", "Decision", "Resolution", "ReplyEmitted",
    # coordinator bookkeeping
    "Begin", "Enroll", "Done",
})


class JournalError(Exception):
    pass


class JournalWriteError(JournalError):
    """The backend refused a write; nothing was recorded."""


class JournalCorruptError(JournalError):
    def __init__(self, stream: str, last_good_seq: int, reason: str):
        super().__init__(f"stream {stream!r} corrupt after seq {last_good_seq}: {reason}")
        self.stream = stream
        self.last_good_seq = last_good_seq


@dataclass(frozen=True)
class JournalRecord:
    stream: str
    seq: int
    t: float
    kind: str
    body: dict = field(hash=False)

    def to_line(self) -> str:
        return json.dumps({"stream": self.stream, "seq": self.seq, "t": self.t,
                           "kind": self.kind, "body": self.body},
                          sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_line(cls, line: str) -> JournalRecord:
        raw = json.loads(line)
        return cls(raw["stream"], raw["seq"], raw["t"], raw["kind"], raw["body"])


class Backend(Protocol):
    def write(self, record: JournalRecord) -> None: ...
    def read(self, stream: str) -> list[JournalRecord]: ...
    def streams(self) -> list[str]: ...


class MemoryBackend:
    """Dict of lists. ``fail_when`` lets tests reject selected writes."""

    def __init__(self, fail_when: Optional[Callable[[JournalRecord], bool]] = None):
        self._data: dict[str, list[JournalRecord]] = {}
        self.fail_when = fail_when

    def write(self, record: JournalRecord) -> None:
        if self.fail_when is not None and self.fail_when(record):
            raise JournalWriteError(f"injected fault on {record.stream}#{record.seq}")
        self._data.setdefault(record.stream, []).append(record)

    def read(self, stream: str) -> list[JournalRecord]:
        return list(self._data.get(stream, ()))

    def streams(self) -> list[str]:
        return sorted(self._data)


class FileBackend:
    """One JSON record per line in a single UTF-8 file, flushed on every append."""

    def __init__(self, path: str | os.PathLike, fsync: bool = False):
        self.path = os.fspath(path)
        self.fsync = fsync
        self._fh = open(self.path, "a", encoding="utf-8")

    def write(self, record: JournalRecord) -> None:
        line = record.to_line() + "\n"
        try:
            self._fh.write(line)
            self._fh.flush()
            if self.fsync:
                os.fsync(self._fh.fileno())
        except OSError as exc:
            raise JournalWriteError(str(exc)) from exc

    def _lines(self) -> Iterator[str]:
        with open(self.path, encoding="utf-8") as fh:
            yield from fh

    def read(self, stream: str) -> list[JournalRecord]:
        out = []
        for line in self._lines():
            if not line.strip():
                continue
            try:
                rec = JournalRecord.from_line(line)
            except (ValueError, KeyError) as exc:
                last = out[-1].seq if out else 0
                raise JournalCorruptError(stream, last, f"unparseable line: {exc}") from exc
            if rec.stream == stream:
                out.append(rec)
        return out

    def streams(self) -> list[str]:
        names = set()
        for line in self._lines():
            if line.strip():
                names.add(json.loads(line)["stream"])
        return sorted(names)

    def close(self) -> None:
        self._fh.close()


class Journal:
    def __init__(self, backend: Optional[Backend] = None):
        self.backend = backend if backend is not None else MemoryBackend()
        self._next: dict[str, int] = {}

    def _next_seq(self, stream: str) -> int:
        if stream not in self._next:
            existing = self.backend.read(stream)
            self._next[stream] = existing[-1].seq + 1 if existing else 1
        return self._next[stream]

    def append(self, stream: str, kind: str, body: dict, t: float = 0.0) -> int:
        if kind not in KINDS:
            raise ValueError(f"unknown journal record kind {kind!r}")
        seq = self._next_seq(stream)
        self.backend.write(JournalRecord(stream, seq, t, kind, body))
        # only advance once the backend has accepted the record
        self._next[stream] = seq + 1
        return seq

    def replay(self, stream: str) -> list[JournalRecord]:
        """Records of ``stream`` in order; density and kinds are verified."""
        records = self.backend.read(stream)
        expected = 1
        for rec in records:
            if rec.seq != expected or rec.kind not in KINDS or not isinstance(rec.body, dict):
                raise JournalCorruptError(stream, expected - 1,
                                          f"bad record seq={rec.seq} kind={rec.kind!r}")
            expected += 1
        return records

    def streams(self) -> list[str]:
        return self.backend.streams()

    def hook(self, stream: str, clock: Callable[[], float] = lambda: 0.0):
        """A ``(kind, body)`` callback bound to one stream, as PsacObject expects."""
        def write(kind: str, body: dict) -> None:
            self.append(stream, kind, body, clock())
        return write
