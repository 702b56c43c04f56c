"""Fixed scenarios that reproduce the protocol's worked examples.

Two kinds live here: object-level walkthroughs that drive a single account
directly (no network, no timing), and cluster scenarios with forced arrival
interleavings that run through the full simulator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from ..entity.bundled import bank_catalog
from ..entity.model import EntityState, new_state
from ..entity.values import Money
from ..lockref import StrictLockObject
from ..outcome import CommandInstance, Resolution
from ..psac import PsacObject
from .scenario import Costs, Latency, Scenario, ScriptedAction, ScriptedTxn, Workload

COMMIT, ABORT = Resolution.COMMIT, Resolution.ABORT


def account(balance_eur: int, entity: str = "acc") -> EntityState:
    spec = bank_catalog()["Account"]
    return new_state(spec, entity).replace("opened", balance=Money.eur(balance_eur))


def withdraw(txn: str, eur: int, seq: int) -> CommandInstance:
    return CommandInstance(txn, "Withdraw", {"amount": Money.eur(eur)}, seq)


def euros(state: EntityState) -> int:
    cents = state["balance"].cents
    if cents % 100:
        raise ValueError(f"balance {cents} is not whole euros")
    return cents // 100


@dataclass(frozen=True)
class Step:
    label: str
    replies: tuple[str, ...]
    leaves: tuple[int, ...]        # outcome-tree leaves in euros, sorted; () for lock objects
    balance: int                   # applied balance in euros

    def line(self) -> str:
        leaves = "{" + ",".join(map(str, self.leaves)) + "}"
        return f"{self.label}: {' '.join(self.replies)} leaves={leaves} balance={self.balance}"


def _render(reply) -> str:
    if reply.kind == "applied":
        return f"applied({reply.txn},{euros(reply.state)})"
    return f"{reply.kind}({reply.txn})"


Obj = Union[PsacObject, StrictLockObject]


def _step(obj: Obj, label: str, replies) -> Step:
    if isinstance(obj, PsacObject):
        leaves = tuple(sorted(euros(s) for s in obj.tree.leaves))
        balance = euros(obj.applied)
    else:
        leaves, balance = (), euros(obj.state)
    return Step(label, tuple(_render(r) for r in replies), leaves, balance)


def _walk(obj: Obj, script) -> list[Step]:
    steps = []
    for label, op in script:
        if isinstance(op, CommandInstance):
            replies = obj.handle_command(op)
        else:
            replies = obj.handle_resolution(*op)
        steps.append(_step(obj, label, replies))
    return steps


def _make(engine: str, balance: int) -> Obj:
    spec = bank_catalog()["Account"]
    if engine == "psac":
        return PsacObject(spec, "acc", account(balance))
    if engine == "psac1":
        return PsacObject(spec, "acc", account(balance), max_parallel=1)
    if engine == "2pl":
        return StrictLockObject(spec, account(balance))
    raise ValueError(f"unknown engine {engine!r}; expected psac, psac1 or 2pl")


def delay_walkthrough(engine: str = "psac") -> list[Step]:
    """Three withdrawals at a €100 account; C2 commits first, then C1."""
    obj = _make(engine, 100)
    return _walk(obj, [
        ("C1 -30", withdraw("C1", 30, 1)),
        ("C2 -50", withdraw("C2", 50, 2)),
        ("C3 -60", withdraw("C3", 60, 3)),
        ("C2 commit", ("C2", COMMIT)),
        ("C1 commit", ("C1", COMMIT)),
    ])


def abort_walkthrough(engine: str = "psac") -> list[Step]:
    """C1 -30 and C2 -50 at a €100 account; C1 aborts, C2 commits."""
    obj = _make(engine, 100)
    return _walk(obj, [
        ("C1 -30", withdraw("C1", 30, 1)),
        ("C2 -50", withdraw("C2", 50, 2)),
        ("C1 abort", ("C1", ABORT)),
        ("C2 commit", ("C2", COMMIT)),
    ])


# -- cluster scenarios -------------------------------------------------------

def _population(*accounts: tuple[str, int]):
    return tuple((eid, "Account", "opened", (("balance", Money.eur(eur)),))
                 for eid, eur in accounts)


def interleaving_scenario(engine: str = "psac:8", seed: int = 0,
                          costs: Optional[Costs] = None) -> Scenario:
    """Transfer-like T1 and interest T2 over accounts A and B, €100 each.

    T1 = {Deposit(50)@A, Withdraw(50)@B} reaches A at once but B only after
    200 ms; T2 = {Interest@A, Interest@B} starts at 100 ms. So T1 is first at A
    and T2 is first at B.
    """
    t1 = ScriptedTxn("T1", 0.0, (
        ScriptedAction("Account", "A", "Deposit", (Money.eur(50),)),
        ScriptedAction("Account", "B", "Withdraw", (Money.eur(50),)),
    ), latency=(("B", 200.0),))
    t2 = ScriptedTxn("T2", 100.0, (
        ScriptedAction("Account", "A", "Interest", ()),
        ScriptedAction("Account", "B", "Interest", ()),
    ))
    return Scenario(
        name="interleaving", nodes=1, engine=engine, seed=seed,
        workload=Workload(kind="scripted"),
        latency=Latency(kind="constant", min=1.0, max=1.0),
        costs=costs or Costs(),
        warmup=0.0, measure=2000.0,
        population=_population(("A", 100), ("B", 100)),
        script=(t1, t2),
    )


def overlap_scenario(engine: str = "psac:8", seed: int = 0) -> Scenario:
    """Two users withdraw €30 and €50 from one €100 account a millisecond apart."""
    c1 = ScriptedTxn("C1", 1.0, (ScriptedAction("Account", "acc", "Withdraw", (Money.eur(30),)),))
    c2 = ScriptedTxn("C2", 2.0, (ScriptedAction("Account", "acc", "Withdraw", (Money.eur(50),)),))
    return Scenario(
        name="overlap", nodes=1, engine=engine, seed=seed,
        workload=Workload(kind="scripted"),
        latency=Latency(kind="constant", min=1.0, max=1.0),
        warmup=0.0, measure=2000.0,
        population=_population(("acc", 100)),
        script=(c1, c2),
    )
