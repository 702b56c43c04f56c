from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from helpers import (
    ACCOUNT, account_state, build_tree, multiset, oracle_decision, oracle_leaves, random_instance,
)
from psaclab.entity import Money, apply_effect
from psaclab.outcome import (
    CommandInstance, Decision, OutcomeBoundError, OutcomeTree, Resolution, TreeError,
    brute_force_outcomes,
)


def wd(txn, eur, seq):
    return CommandInstance(txn, "Withdraw", {"amount": Money.eur(eur)}, seq)


def dep(txn, eur, seq):
    return CommandInstance(txn, "Deposit", {"amount": Money.eur(eur)}, seq)


def euros(states):
    return sorted(s["balance"].cents // 100 for s in states)


def test_empty_tree_accepts():
    tree = OutcomeTree(ACCOUNT, account_state(10_000))
    assert tree.decide(wd("c", 30, 1)) == Decision.ACCEPT
    assert euros(tree.leaves) == [100]


def test_three_withdrawals_leaves_and_delay():
    tree = OutcomeTree(ACCOUNT, account_state(10_000))
    tree.admit(wd("C1", 30, 1))
    assert euros(tree.leaves) == [70, 100]
    tree.admit(wd("C2", 50, 2))
    assert euros(tree.leaves) == [20, 50, 70, 100]
    assert tree.decide(wd("C3", 60, 3)) == Decision.DELAY
    assert tree.decide(wd("C4", 200, 4)) == Decision.REJECT
    tree.resolve("C2", Resolution.COMMIT)
    assert euros(tree.leaves) == [20, 50]
    assert tree.decide(wd("C3", 60, 3)) == Decision.REJECT


def test_abort_excises_command():
    tree = OutcomeTree(ACCOUNT, account_state(10_000))
    tree.admit(wd("C1", 30, 1))
    tree.resolve("C1", Resolution.ABORT)
    assert euros(tree.leaves) == [100]
    assert tree.admitted == []


def test_resolution_errors():
    tree = OutcomeTree(ACCOUNT, account_state(10_000))
    tree.admit(wd("C1", 30, 1))
    with pytest.raises(TreeError):
        tree.admit(wd("C1", 10, 2))
    tree.resolve("C1", Resolution.COMMIT)
    with pytest.raises(TreeError):
        tree.resolve("C1", Resolution.COMMIT)
    with pytest.raises(TreeError):
        tree.resolve("nope", Resolution.ABORT)


def test_apply_head_requires_commit():
    tree = OutcomeTree(ACCOUNT, account_state(10_000))
    tree.admit(wd("C1", 30, 1))
    with pytest.raises(TreeError):
        tree.apply_head()
    tree.resolve("C1", Resolution.COMMIT)
    cmd, state = tree.apply_head()
    assert cmd.txn == "C1" and state["balance"] == Money.eur(70)
    assert euros(tree.leaves) == [70]


def test_brute_force_examples():
    base = account_state(10_000)
    assert euros(brute_force_outcomes(base, [], ACCOUNT)) == [100]
    assert euros(brute_force_outcomes(base, [wd("a", 30, 1), wd("b", 50, 2)], ACCOUNT)) == [20, 50, 70, 100]
    assert euros(brute_force_outcomes(base, [wd("a", 30, 1), dep("b", 10, 2)], ACCOUNT)) == [70, 80, 100, 110]
    with pytest.raises(OutcomeBoundError):
        brute_force_outcomes(base, [dep(f"x{i}", 1, i) for i in range(13)], ACCOUNT)


def test_commit_order_fidelity():
    # deposit then interest differs from interest then deposit
    base = account_state(10_000)
    cmds = [dep("d", 50, 1), CommandInstance("i", "Interest", {}, 2)]
    tree = build_tree(base, cmds)
    for c in cmds:
        tree.resolve(c.txn, Resolution.COMMIT)
    assert tree.leaves == [account_state(16_500)]
    expected = base
    for c in cmds:
        expected = apply_effect(ACCOUNT, expected, c.action, c.args)
    assert tree.leaves[0] == expected


def test_closing_branch_makes_later_guards_fail():
    tree = OutcomeTree(ACCOUNT, account_state(10_000))
    tree.admit(CommandInstance("x", "Close", {}, 1))
    assert tree.decide(dep("d", 5, 2)) == Decision.DELAY


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tree_matches_oracle(seed):
    rng = random.Random(seed)
    base, cmds, cand = random_instance(rng)
    tree = build_tree(base, cmds)
    assert len(tree.leaves) == 2 ** len(cmds)
    assert multiset(tree.leaves) == multiset(brute_force_outcomes(base, cmds, ACCOUNT))
    assert tree.decide(cand) == oracle_decision(base, cmds, cand)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pruning_matches_oracle(seed):
    rng = random.Random(seed)
    base, cmds, _ = random_instance(rng)
    tree = build_tree(base, cmds)
    committed, aborted = set(), set()
    order = list(cmds)
    rng.shuffle(order)
    for c in order:
        before = len(tree.leaves)
        res = rng.choice([Resolution.COMMIT, Resolution.ABORT])
        tree.resolve(c.txn, res)
        (committed if res == Resolution.COMMIT else aborted).add(c.txn)
        assert len(tree.leaves) <= before
        assert multiset(tree.leaves) == multiset(oracle_leaves(base, cmds, committed, aborted))
    assert len(tree.leaves) == 1


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_decide_is_pure(seed):
    rng = random.Random(seed)
    base, cmds, cand = random_instance(rng)
    tree = build_tree(base, cmds)
    leaves = list(tree.leaves)
    first = tree.decide(cand)
    assert tree.decide(cand) == first and tree.leaves == leaves
