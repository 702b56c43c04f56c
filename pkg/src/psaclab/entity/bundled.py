"""The bank example shipped with the package."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from .model import EntitySpec
from .parser import parse_specs


def bank_source() -> str:
    return resources.files("psaclab").joinpath("specs/bank.rebel").read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def bank_catalog() -> dict[str, EntitySpec]:
    return parse_specs(bank_source())


def account_spec() -> EntitySpec:
    return bank_catalog()["Account"]


def money_transfer_spec() -> EntitySpec:
    return bank_catalog()["MoneyTransfer"]
