"""Request generators and the initial entity population."""

from __future__ import annotations

import random
from typing import Mapping

from ..entity.model import EntitySpec, EntityState, SyncAction, bind_args, new_state, sync_ops
from ..entity.values import Money
from .scenario import Scenario


def account_id(i: int) -> str:
    return f"acc-{i}"


class Population:
    """Initial state of any entity the workload may touch.

    Explicit entries win; ``acc-<i>`` ids are opened accounts holding the
    workload's initial balance; anything else starts fresh in its initial state.
    """

    def __init__(self, scenario: Scenario, catalog: Mapping[str, EntitySpec]):
        self.catalog = catalog
        self.balance = Money(scenario.workload.initial_balance)
        self.explicit: dict[str, EntityState] = {}
        for entity, spec_name, lifecycle, data in scenario.population:
            spec = catalog[spec_name]
            self.explicit[entity] = new_state(spec, entity, **dict(data)).replace(lifecycle)
        w = scenario.workload
        if w.kind == "sync":
            self.accounts = w.accounts
        elif w.kind == "synchot":
            self.accounts = w.hot_accounts
        else:
            self.accounts = 0

    def initial(self, spec_name: str, entity: str) -> EntityState:
        if entity in self.explicit:
            return self.explicit[entity]
        spec = self.catalog[spec_name]
        if spec_name == "Account" and entity.startswith("acc-"):
            return new_state(spec, entity).replace("opened", balance=self.balance)
        return new_state(spec, entity)

    def account_total(self) -> Money:
        return Money(self.balance.cents * self.accounts)


class RequestGenerator:
    def __init__(self, scenario: Scenario, catalog: Mapping[str, EntitySpec], rng: random.Random):
        self.w = scenario.workload
        self.catalog = catalog
        self.rng = rng
        self._mt = catalog.get("MoneyTransfer")

    def _amount(self) -> Money:
        return Money(self.rng.randint(self.w.amount_min, self.w.amount_max))

    def next(self, txn: str) -> tuple[SyncAction, tuple[SyncAction, ...]]:
        if self.w.kind == "nosync":
            return SyncAction("Account", f"new-{txn}", "Open", (self._amount(),)), ()
        n = self.w.accounts if self.w.kind == "sync" else self.w.hot_accounts
        src = self.rng.randrange(n)
        dst = self.rng.randrange(n - 1)
        if dst >= src:
            dst += 1
        amount = self._amount()
        root = SyncAction("MoneyTransfer", f"mt-{txn}", "Book",
                          (amount, account_id(dst), account_id(src)))
        return root, resolve_syncs(self.catalog, root)


def resolve_syncs(catalog: Mapping[str, EntitySpec], root: SyncAction) -> tuple[SyncAction, ...]:
    """Sync targets of ``root``, evaluated against a fresh instance of its spec.

    Enough for specs whose sync targets come from parameters, as in the bank.
    """
    spec = catalog[root.spec]
    args = bind_args(spec, root.action, root.args)
    return tuple(sync_ops(spec, new_state(spec, root.entity_id), root.action, args))
