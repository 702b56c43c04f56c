from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from psaclab.commit import (
    Ack, Begin, CPhase, CommitConfig, CoordinatorState, Enroll, GlobalAbort, GlobalCommit,
    ObjectDecision, Persist, PPhase, ParticipantState, RecoveryError, Send, StartTimer,
    TimeoutFired, ToObject, VoteNo, VoteRequest, VoteYes, coord_addr, coordinator_resume,
    coordinator_step, make_command, participant_id, participant_resume, participant_step,
    recover_coordinator, recover_participant,
)
from psaclab.entity import Money, SyncAction, bank_catalog
from psaclab.outcome import Resolution

BANK = bank_catalog()
ROOT = SyncAction("MoneyTransfer", "m", "Book", (Money.eur(50), "B", "A"))
WD = SyncAction("Account", "A", "Withdraw", (Money.eur(50),))
DP = SyncAction("Account", "B", "Deposit", (Money.eur(50),))
P = [participant_id("T", k) for k in range(3)]


def sends(effects):
    return [e for e in effects if isinstance(e, Send)]


def begun():
    return coordinator_step(CoordinatorState("T"), Begin("T", ROOT, (WD, DP)))


def test_begin_flattens_three_participants():
    state, eff = begun()
    reqs = [e.msg for e in sends(eff)]
    assert [r.participant for r in reqs] == P
    assert [r.target for r in reqs] == [ROOT, WD, DP]
    assert isinstance(eff[0], Persist) and eff[0].kind == "Begin"
    assert isinstance(eff[-1], StartTimer) and eff[-1].delay == 500.0
    assert state.phase == CPhase.WAIT_VOTES


def test_first_no_aborts_without_waiting():
    state, _ = begun()
    state, eff = coordinator_step(state, VoteYes("T", P[1]))
    assert eff == []
    state, eff = coordinator_step(state, VoteNo("T", P[2]))
    assert state.phase == CPhase.ABORTING
    assert eff[0] == Persist("Decision", {"txn": "T", "decision": "abort"})
    assert [(s.to, type(s.msg)) for s in sends(eff)] == [(p, GlobalAbort) for p in P]


def test_all_yes_journals_then_commits():
    state, _ = begun()
    for p in P:
        state, eff = coordinator_step(state, VoteYes("T", p))
    assert state.phase == CPhase.COMMITTING
    assert eff[0].kind == "Decision"
    assert all(isinstance(s.msg, GlobalCommit) for s in sends(eff))
    for p in P:
        state, eff = coordinator_step(state, Ack("T", p))
    assert state.phase == CPhase.DONE
    assert eff == [Persist("Done", {"txn": "T", "exhausted": False})]


def test_vote_timeout_aborts():
    state, eff = begun()
    timer = eff[-1].timer_id
    state, eff = coordinator_step(state, TimeoutFired("T", timer))
    assert state.phase == CPhase.ABORTING
    # a stale timer is ignored
    again, eff2 = coordinator_step(state, TimeoutFired("T", timer))
    assert eff2 == [] and again == state


def test_enroll_grows_participants_while_waiting():
    state, _ = begun()
    extra = SyncAction("Account", "C", "Deposit", (Money.eur(1),))
    state, eff = coordinator_step(state, Enroll("T", extra))
    assert state.pids[-1] == participant_id("T", 3)
    assert sends(eff)[0].msg == VoteRequest("T", participant_id("T", 3), extra)
    for p in P:
        state, _ = coordinator_step(state, VoteYes("T", p))
    assert state.phase == CPhase.WAIT_VOTES


def test_decision_resent_until_retries_exhausted():
    cfg = CommitConfig(max_retries=3)
    state, _ = begun()
    for p in P:
        state, eff = coordinator_step(state, VoteYes("T", p), cfg)
    state, _ = coordinator_step(state, Ack("T", P[0]), cfg)
    for _ in range(3):
        state, eff = coordinator_step(state, TimeoutFired("T", state.timer), cfg)
        assert [s.to for s in sends(eff)] == P[1:]
        assert eff[-1].delay == 1000.0
    state, eff = coordinator_step(state, TimeoutFired("T", state.timer), cfg)
    assert state.phase == CPhase.DONE
    assert eff == [Persist("Done", {"txn": "T", "exhausted": True})]


def test_done_coordinator_answers_late_votes():
    state = CoordinatorState("T", CPhase.DONE, decision=Resolution.COMMIT)
    _, eff = coordinator_step(state, VoteYes("T", P[0]))
    assert eff == [Send(P[0], GlobalCommit("T", P[0]))]
    assert coordinator_step(state, Ack("T", P[0]))[1] == []


def test_wrong_txn_rejected():
    with pytest.raises(ValueError):
        coordinator_step(CoordinatorState("T"), Ack("U", "x"))


def test_decision_is_stable():
    state, _ = begun()
    state, _ = coordinator_step(state, VoteNo("T", P[0]))
    for p in P:
        state, eff = coordinator_step(state, VoteYes("T", p))
        assert all(isinstance(s.msg, GlobalAbort) for s in sends(eff))
    assert state.decision == Resolution.ABORT


# -- participant -------------------------------------------------------------

def requested(target=WD, pid=P[1]):
    cmd = make_command(pid, target, BANK[target.spec])
    return participant_step(ParticipantState("T", pid), VoteRequest("T", pid, target), command=cmd)


def test_vote_request_hands_command_to_object():
    state, eff = requested()
    assert state.phase == PPhase.WORKING
    assert [type(e) for e in eff] == [Persist, ToObject, StartTimer]
    assert eff[1].command.action == "Withdraw"
    assert eff[1].command.args == {"amount": Money.eur(50)}


@pytest.mark.parametrize("kind,msg", [("started", VoteYes), ("failed", VoteNo)])
def test_object_decision_votes(kind, msg):
    state, _ = requested()
    state, eff = participant_step(state, ObjectDecision("T", kind))
    assert eff[0] == Persist("Vote", {"txn": "T", "pid": P[1], "yes": kind == "started"})
    assert eff[1] == Send(coord_addr("T"), msg("T", P[1]))


def test_delayed_waits_then_times_out():
    state, _ = requested()
    state, eff = participant_step(state, ObjectDecision("T", "delayed"))
    assert eff == [] and state.phase == PPhase.WORKING
    state, eff = participant_step(state, TimeoutFired("T", state.timer))
    assert state.phase == PPhase.VOTED_NO
    assert ToObject(WD, P[1], resolution=Resolution.ABORT) in eff
    assert Send(coord_addr("T"), VoteNo("T", P[1])) in eff


def test_commit_forwards_then_acks_and_is_idempotent():
    state, _ = requested()
    state, _ = participant_step(state, ObjectDecision("T", "started"))
    state, eff = participant_step(state, GlobalCommit("T", P[1]))
    assert state.phase == PPhase.COMMITTED
    assert [type(e) for e in eff] == [Persist, ToObject, Send]
    again, eff = participant_step(state, GlobalCommit("T", P[1]))
    assert again == state and eff == [Send(coord_addr("T"), Ack("T", P[1]))]
    with pytest.raises(ValueError):
        participant_step(state, GlobalAbort("T", P[1]))


def test_duplicate_vote_request_repeats_vote():
    state, _ = requested()
    state, _ = participant_step(state, ObjectDecision("T", "started"))
    _, eff = participant_step(state, VoteRequest("T", P[1], WD))
    assert eff == [Send(coord_addr("T"), VoteYes("T", P[1]))]


def test_decision_without_vote_is_obeyed():
    state, _ = requested()
    state, eff = participant_step(state, GlobalAbort("T", P[1]))
    assert state.phase == PPhase.ABORTED
    assert eff[0].kind == "Resolution"


# -- recovery ----------------------------------------------------------------

def _records(effects):
    return [(e.kind, e.body) for e in effects if isinstance(e, Persist)]


def test_coordinator_recovers_committing_and_resends():
    state, eff = begun()
    log = _records(eff)
    for p in P:
        state, eff = coordinator_step(state, VoteYes("T", p))
        log += _records(eff)
    back = recover_coordinator("T", log)
    assert back.phase == CPhase.COMMITTING and back.pids == P
    back, eff = coordinator_resume(back)
    assert [(s.to, type(s.msg)) for s in sends(eff)] == [(p, GlobalCommit) for p in P]


def test_coordinator_without_decision_recovers_to_abort():
    _, eff = begun()
    back = recover_coordinator("T", _records(eff))
    assert back.phase == CPhase.WAIT_VOTES
    back, eff = coordinator_resume(back)
    assert back.decision == Resolution.ABORT


def test_empty_journal_is_fresh():
    assert recover_coordinator("T", []) == CoordinatorState("T")
    assert recover_participant("T", "p", []) == ParticipantState("T", "p")


def test_voted_yes_participant_blocks_and_asks():
    state, eff = requested()
    log = _records(eff)
    state, eff = participant_step(state, ObjectDecision("T", "started"))
    log += _records(eff)
    back = recover_participant("T", P[1], log)
    assert back.phase == PPhase.VOTED_YES
    _, eff = participant_resume(back)
    assert eff == [Send(coord_addr("T"), VoteYes("T", P[1]))]


def test_out_of_order_journal_rejected():
    with pytest.raises(RecoveryError):
        recover_coordinator("T", [("Decision", {"txn": "T", "decision": "commit"})])
    with pytest.raises(RecoveryError):
        recover_participant("T", "p", [("Vote", {"txn": "U", "pid": "p", "yes": True})])


# -- properties --------------------------------------------------------------

def _random_run(seed: int):
    """Drive one coordinator and three participants with a random, duplicating,
    reordering network. Participants vote by coin flip."""
    rng = random.Random(seed)
    coord, eff = begun()
    parts = {p: ParticipantState("T", p) for p in P}
    targets = dict(zip(P, (ROOT, WD, DP)))
    wants_yes = {p: rng.random() < 0.8 for p in P}
    net = [(s.to, s.msg) for s in sends(eff)]
    sent_decisions = set()
    obeyed: dict[str, Resolution] = {}
    for _ in range(400):
        if not net:
            if coord.phase == CPhase.DONE:
                break
            coord, eff = coordinator_step(coord, TimeoutFired("T", coord.timer))
            net += [(s.to, s.msg) for s in sends(eff)]
            continue
        to, msg = net.pop(rng.randrange(len(net)))
        if rng.random() < 0.1:
            net.append((to, msg))  # duplicate
        if to == coord_addr("T"):
            coord, eff = coordinator_step(coord, msg)
        else:
            cmd = None
            if isinstance(msg, VoteRequest):
                cmd = make_command(to, targets[to], BANK[targets[to].spec])
            parts[to], eff = participant_step(parts[to], msg, command=cmd)
            if isinstance(msg, VoteRequest) and parts[to].phase == PPhase.WORKING:
                kind = "started" if wants_yes[to] else "failed"
                parts[to], more = participant_step(parts[to], ObjectDecision("T", kind))
                eff = eff + more
            for e in eff:
                if isinstance(e, ToObject) and e.resolution is not None:
                    assert obeyed.setdefault(to, e.resolution) == e.resolution
        for s in sends(eff):
            if isinstance(s.msg, (GlobalCommit, GlobalAbort)):
                sent_decisions.add(type(s.msg))
        net += [(s.to, s.msg) for s in sends(eff)]
    return coord, parts, wants_yes, sent_decisions, obeyed


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_agreement_validity_termination(seed):
    coord, parts, wants_yes, decisions, obeyed = _random_run(seed)
    assert len(decisions) == 1
    assert coord.phase == CPhase.DONE
    if GlobalCommit in decisions:
        assert all(wants_yes.values())
    final = PPhase.COMMITTED if GlobalCommit in decisions else PPhase.ABORTED
    assert {ps.phase for ps in parts.values()} == {final}
    # an abort may overtake the VoteRequest, so not every object hears of it
    assert set(obeyed.values()) <= {coord.decision}


@given(st.integers(0, 2**32 - 1))
def test_steps_are_deterministic(seed):
    assert _random_run(seed)[:2] == _random_run(seed)[:2]
