"""Structured event trace, serialized as JSON lines with sorted keys."""

from __future__ import annotations

import json
import os
from typing import Iterable, Iterator, Union


class TraceFormatError(ValueError):
    pass


class Trace:
    def __init__(self, events: Iterable[dict] = (), enabled: bool = True):
        self.events: list[dict] = list(events)
        self.enabled = enabled

    def emit(self, t: float, ev: str, **fields) -> None:
        if self.enabled:
            fields["t"] = round(t, 6)
            fields["ev"] = ev
            self.events.append(fields)

    def __iter__(self) -> Iterator[dict]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of(self, *kinds: str) -> list[dict]:
        return [e for e in self.events if e["ev"] in kinds]

    def to_lines(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n"
                       for e in self.events)

    def write(self, path: Union[str, os.PathLike]) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_lines())

    @classmethod
    def from_lines(cls, text: str) -> Trace:
        events = []
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                e = json.loads(line)
            except ValueError as exc:
                raise TraceFormatError(f"line {n}: {exc}") from exc
            if not isinstance(e, dict) or "ev" not in e or "t" not in e:
                raise TraceFormatError(f"line {n}: missing 'ev' or 't'")
            events.append(e)
        return cls(events)

    @classmethod
    def read(cls, path: Union[str, os.PathLike]) -> Trace:
        with open(path, encoding="utf-8") as fh:
            return cls.from_lines(fh.read())
