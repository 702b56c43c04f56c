"""Runtime values used by entity specifications.

Four kinds exist: Money (integer cents), Int, Bool and Id (opaque entity
identifier). Int, Bool and Id are plain Python ``int``, ``bool`` and ``str``;
Money is a small wrapper so that it never mixes silently with Int.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Union


class Kind(str, Enum):
    MONEY = "Money"
    INT = "Int"
    BOOL = "Bool"
    ID = "Id"


class KindError(TypeError):
    """Operation applied to values of incompatible kinds."""


def round_half_up_div(num: int, den: int) -> int:
    """Integer ``num / den`` rounded half-up (ties go towards +infinity)."""
    if den == 0:
        raise ZeroDivisionError("scale denominator is zero")
    if den < 0:
        num, den = -num, -den
    return (2 * num + den) // (2 * den)


@dataclass(frozen=True, order=True)
class Money:
    cents: int

    def __post_init__(self):
        if isinstance(self.cents, bool) or not isinstance(self.cents, int):
            raise KindError(f"Money needs integer cents, got {self.cents!r}")

    def __add__(self, other: Money) -> Money:
        if not isinstance(other, Money):
            return NotImplemented
        return Money(self.cents + other.cents)

    def __sub__(self, other: Money) -> Money:
        if not isinstance(other, Money):
            return NotImplemented
        return Money(self.cents - other.cents)

    def __neg__(self) -> Money:
        return Money(-self.cents)

    def scale(self, p: int, q: int) -> Money:
        return Money(round_half_up_div(self.cents * p, q))

    @classmethod
    def eur(cls, amount: str | int) -> Money:
        """``Money.eur("12.50")`` -> 1250 cents. Integers are whole euros."""
        if isinstance(amount, int):
            return cls(amount * 100)
        return cls(parse_decimal_cents(amount))

    def __str__(self) -> str:
        sign = "-" if self.cents < 0 else ""
        whole, frac = divmod(abs(self.cents), 100)
        return f"{sign}€{whole}.{frac:02d}"

    def __repr__(self) -> str:
        return f"Money({self.cents})"


Value = Union[Money, int, bool, str]

_DECIMAL = re.compile(r"^(-?)(\d+)(?:\.(\d{1,2}))?$")


def parse_decimal_cents(text: str) -> int:
    m = _DECIMAL.match(text.strip())
    if not m:
        raise ValueError(f"not a money amount: {text!r}")
    sign, whole, frac = m.groups()
    cents = int(whole) * 100 + int((frac or "0").ljust(2, "0"))
    return -cents if sign else cents


def kind_of(value: Any) -> Kind:
    # bool is an int subclass, so it is tested first
    if isinstance(value, bool):
        return Kind.BOOL
    if isinstance(value, Money):
        return Kind.MONEY
    if isinstance(value, int):
        return Kind.INT
    if isinstance(value, str):
        return Kind.ID
    raise KindError(f"not a spec value: {value!r}")


def default_value(kind: Kind) -> Value:
    return {Kind.MONEY: Money(0), Kind.INT: 0, Kind.BOOL: False, Kind.ID: ""}[kind]


# Structured-text encoding shared by the journal, trace and scenario files.
# Money needs a tag; the other kinds map onto JSON scalars directly.

def encode_value(value: Value) -> Any:
    if isinstance(value, Money):
        return {"money": value.cents}
    kind_of(value)
    return value


def decode_value(raw: Any) -> Value:
    if isinstance(raw, dict):
        if set(raw) != {"money"}:
            raise ValueError(f"unknown value encoding: {raw!r}")
        return Money(int(raw["money"]))
    if isinstance(raw, (bool, int, str)):
        return raw
    raise ValueError(f"unknown value encoding: {raw!r}")


def encode_mapping(values: dict[str, Value]) -> dict[str, Any]:
    return {k: encode_value(v) for k, v in sorted(values.items())}


def decode_mapping(raw: dict[str, Any]) -> dict[str, Value]:
    return {k: decode_value(v) for k, v in raw.items()}
