"""Random instance generators shared by the unit and acceptance tests."""

from __future__ import annotations

import random
from collections import Counter

from psaclab.entity import Money, bank_catalog, new_state
from psaclab.entity.model import EntityState
from psaclab.lockref import StrictLockObject
from psaclab.outcome import CommandInstance, OutcomeTree, Resolution, brute_force_outcomes, classify
from psaclab.psac import PsacObject

BANK = bank_catalog()

# one "criterion N: PASS|FAIL ..." line per acceptance criterion, printed by conftest
ACCEPTANCE: list[str] = []
ACCOUNT = BANK["Account"]


def account_state(cents: int, lifecycle: str = "opened", entity: str = "A") -> EntityState:
    return new_state(ACCOUNT, entity).replace(lifecycle, balance=Money(cents))


def random_command(rng: random.Random, txn: str, seq: int, closing: bool = True) -> CommandInstance:
    kinds = ["Withdraw", "Withdraw", "Deposit", "Interest"] + (["Close"] if closing else [])
    action = rng.choice(kinds)
    if action in ("Withdraw", "Deposit"):
        # zero amounts exercise the amount > €0 guard
        args = {"amount": Money(rng.choice([0, 100, 1000, 2500, 5000, 7500, 12_000]))}
    else:
        args = {}
    return CommandInstance(txn, action, args, seq)


def random_instance(rng: random.Random, max_k: int = 8):
    """(base, admitted commands, candidate). Close appears only last, so every
    admitted command is enabled in every leaf."""
    base = account_state(rng.randrange(0, 20_001, 100))
    k = rng.randint(0, max_k)
    cmds = [random_command(rng, f"c{i}", i + 1, closing=(i == k - 1)) for i in range(k)]
    candidate = random_command(rng, "cand", k + 1)
    if rng.random() < 0.05:
        candidate = CommandInstance("cand", "Open", {"initialDeposit": Money(100)}, k + 1)
    return base, cmds, candidate


def build_tree(base: EntityState, cmds) -> OutcomeTree:
    tree = OutcomeTree(ACCOUNT, base)
    for c in cmds:
        tree.admit(c)
    return tree


def multiset(states) -> Counter:
    return Counter(states)


def oracle_leaves(base, cmds, committed: set[str], aborted: set[str]):
    """Leaves by enumeration: committed commands always apply, aborted never."""
    live = [c for c in cmds if c.txn not in aborted]
    out = []
    for s, mask in zip(brute_force_outcomes(base, live, ACCOUNT), _masks(len(live))):
        if all(m for m, c in zip(mask, live) if c.txn in committed):
            out.append(s)
    return out


def _masks(k: int):
    import itertools
    return list(itertools.product((False, True), repeat=k))


def oracle_decision(base, cmds, candidate):
    return classify(brute_force_outcomes(base, cmds, ACCOUNT), ACCOUNT, candidate)


# -- schedules for the 2PL degradation check ------------------------------------

def random_schedule(rng: random.Random, entities: int, commands: int):
    """Interleaved command arrivals and resolutions over a few accounts.

    Each op is ("cmd", entity, CommandInstance) or ("res", entity, txn, Resolution);
    every command gets exactly one later resolution op.
    """
    ids = [f"e{i}" for i in range(entities)]
    ops = []
    pending: list[tuple[str, str]] = []
    seq = {e: 0 for e in ids}
    n = 0
    while n < commands or pending:
        if n < commands and (not pending or rng.random() < 0.55):
            e = rng.choice(ids)
            seq[e] += 1
            cmd = random_command(rng, f"t{n}", seq[e], closing=False)
            ops.append(("cmd", e, cmd))
            pending.append((e, cmd.txn))
            n += 1
        else:
            e, txn = pending.pop(rng.randrange(len(pending)))
            res = Resolution.COMMIT if rng.random() < 0.7 else Resolution.ABORT
            ops.append(("res", e, txn, res))
    return ids, ops


def run_schedule(ops, ids, make) -> list[tuple]:
    """Feed a schedule to one object per entity; return the observable events.

    Resolutions follow what 2PC would send given the object's own replies: the
    drawn outcome for a started command, an abort (vote timeout) for a command
    still delayed, nothing for a command already finished.
    """
    objs = {e: make(e) for e in ids}
    status: dict[str, str] = {}
    log = []
    for op in ops:
        if op[0] == "cmd":
            _, e, cmd = op
            replies = objs[e].handle_command(cmd)
        else:
            _, e, txn, res = op
            st = status.get(txn)
            if st == "delayed":
                res = Resolution.ABORT
            elif st != "started":
                continue
            replies = objs[e].handle_resolution(txn, res)
            status[txn] = "done"
        for r in replies:
            if r.kind in ("started", "delayed"):
                status[r.txn] = r.kind
            elif r.kind == "failed":
                status[r.txn] = "done"
            state = None if r.state is None else r.state["balance"].cents
            log.append((e, r.kind, r.txn, state))
    return log


def psac1(entity: str) -> PsacObject:
    return PsacObject(ACCOUNT, entity, account_state(10_000, entity=entity), max_parallel=1)


def strict_lock(entity: str) -> StrictLockObject:
    return StrictLockObject(ACCOUNT, account_state(10_000, entity=entity))
