"""Two-phase commit as pure step functions.

A coordinator and its participants never share state; they exchange the
messages below. Every step takes ``(state, event)`` and returns
``(state', effects)``. An effect is an outbound message (``Send``), a timer to
arm (``StartTimer``), a journal record to persist (``Persist``) or a request
to the participant's local object (``ToObject``). Effects are listed in the
order the host must perform them, so a ``Persist`` before a ``Send`` means
write-ahead.

Addresses: the coordinator of ``txn`` is ``coord_addr(txn)``; participant
``k`` of ``txn`` is ``f"{txn}/p{k}"`` and also serves as the transaction id
its object sees, which keeps ids unique when one transaction touches an
entity twice.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Union

from .entity.model import EntitySpec, SyncAction, bind_args
from .outcome import CommandInstance, Resolution


@dataclass(frozen=True)
class CommitConfig:
    vote_timeout: float = 500.0
    retry_interval: float = 1000.0
    max_retries: int = 10


def coord_addr(txn: str) -> str:
    return f"coord:{txn}"


def participant_id(txn: str, k: int) -> str:
    return f"{txn}/p{k}"


# -- messages --------------------------------------------------------------

@dataclass(frozen=True)
class Begin:
    txn: str
    root: SyncAction
    syncs: tuple[SyncAction, ...] = ()


@dataclass(frozen=True)
class Enroll:
    txn: str
    target: SyncAction


@dataclass(frozen=True)
class VoteRequest:
    txn: str
    participant: str
    target: SyncAction


@dataclass(frozen=True)
class VoteYes:
    txn: str
    participant: str


@dataclass(frozen=True)
class VoteNo:
    txn: str
    participant: str


@dataclass(frozen=True)
class GlobalCommit:
    txn: str
    participant: str


@dataclass(frozen=True)
class GlobalAbort:
    txn: str
    participant: str


@dataclass(frozen=True)
class Ack:
    txn: str
    participant: str


@dataclass(frozen=True)
class TimeoutFired:
    txn: str
    timer_id: int


@dataclass(frozen=True)
class ObjectDecision:
    """Local reply of the participant's object: started, failed or delayed."""
    txn: str
    kind: str


Message = Union[Begin, Enroll, VoteRequest, VoteYes, VoteNo, GlobalCommit, GlobalAbort, Ack,
                TimeoutFired]


# -- effects ---------------------------------------------------------------

@dataclass(frozen=True)
class Send:
    to: str
    msg: Message


@dataclass(frozen=True)
class StartTimer:
    owner: str
    timer_id: int
    delay: float


@dataclass(frozen=True)
class Persist:
    kind: str
    body: dict = field(hash=False)


@dataclass(frozen=True)
class ToObject:
    """Hand a command or a resolution to the local PSAC object."""
    target: SyncAction
    pid: str
    command: Optional[CommandInstance] = None
    resolution: Optional[Resolution] = None


Effect = Union[Send, StartTimer, Persist, ToObject]


class RecoveryError(Exception):
    pass


def _decision_msg(decision: Resolution, txn: str, pid: str) -> Message:
    return GlobalCommit(txn, pid) if decision == Resolution.COMMIT else GlobalAbort(txn, pid)


# -- coordinator -----------------------------------------------------------

class CPhase(str, Enum):
    INIT = "init"
    WAIT_VOTES = "wait_votes"
    COMMITTING = "committing"
    ABORTING = "aborting"
    DONE = "done"


@dataclass(frozen=True)
class CoordinatorState:
    txn: str
    phase: CPhase = CPhase.INIT
    participants: tuple[tuple[str, SyncAction], ...] = ()
    yes: frozenset[str] = frozenset()
    acks: frozenset[str] = frozenset()
    decision: Optional[Resolution] = None
    retries: int = 0
    timer: int = 0

    @property
    def pids(self) -> list[str]:
        return [p for p, _ in self.participants]


def _arm(state: CoordinatorState, delay: float) -> tuple[CoordinatorState, StartTimer]:
    state = replace(state, timer=state.timer + 1)
    return state, StartTimer(coord_addr(state.txn), state.timer, delay)


def _decide(state: CoordinatorState, decision: Resolution, cfg: CommitConfig):
    state = replace(state, decision=decision, retries=0,
                    phase=CPhase.COMMITTING if decision == Resolution.COMMIT else CPhase.ABORTING)
    effects: list[Effect] = [Persist("Decision", {"txn": state.txn, "decision": decision.value})]
    effects += [Send(p, _decision_msg(decision, state.txn, p)) for p in state.pids]
    state, timer = _arm(state, cfg.retry_interval)
    return state, effects + [timer]


def _enroll(state: CoordinatorState, target: SyncAction):
    pid = participant_id(state.txn, len(state.participants))
    state = replace(state, participants=state.participants + ((pid, target),))
    return state, Send(pid, VoteRequest(state.txn, pid, target))


def coordinator_step(state: CoordinatorState, event: Message,
                     cfg: CommitConfig = CommitConfig()) -> tuple[CoordinatorState, list[Effect]]:
    if event.txn != state.txn:
        raise ValueError(f"event for {event.txn} delivered to coordinator of {state.txn}")
    phase = state.phase
    if phase == CPhase.DONE:
        # a participant that missed every re-send may still ask for the outcome
        if isinstance(event, (VoteYes, VoteNo)) and state.decision is not None:
            return state, [Send(event.participant,
                                _decision_msg(state.decision, state.txn, event.participant))]
        return state, []

    match event:
        case Begin(_, root, syncs) if phase == CPhase.INIT:
            targets = (root, *syncs)
            effects: list[Effect] = [Persist("Begin", {"txn": state.txn,
                                                       "targets": [t.to_json() for t in targets]})]
            state = replace(state, phase=CPhase.WAIT_VOTES)
            for t in targets:
                state, send = _enroll(state, t)
                effects.append(send)
            state, timer = _arm(state, cfg.vote_timeout)
            return state, effects + [timer]

        case Enroll(_, target) if phase == CPhase.WAIT_VOTES:
            state, send = _enroll(state, target)
            return state, [Persist("Enroll", {"txn": state.txn, "target": target.to_json()}), send]

        case VoteYes(_, pid) if phase == CPhase.WAIT_VOTES:
            state = replace(state, yes=state.yes | {pid})
            if state.yes >= set(state.pids):
                return _decide(state, Resolution.COMMIT, cfg)
            return state, []

        case VoteNo() if phase == CPhase.WAIT_VOTES:
            # no need to wait for the remaining votes
            return _decide(state, Resolution.ABORT, cfg)

        case VoteYes(_, pid) | VoteNo(_, pid) if phase in (CPhase.COMMITTING, CPhase.ABORTING):
            # a participant re-sent its vote after recovering: tell it the outcome
            return state, [Send(pid, _decision_msg(state.decision, state.txn, pid))]

        case Ack(_, pid) if phase in (CPhase.COMMITTING, CPhase.ABORTING):
            state = replace(state, acks=state.acks | {pid})
            if state.acks >= set(state.pids):
                state = replace(state, phase=CPhase.DONE)
                return state, [Persist("Done", {"txn": state.txn, "exhausted": False})]
            return state, []

        case TimeoutFired(_, tid) if tid == state.timer:
            if phase in (CPhase.INIT, CPhase.WAIT_VOTES):
                return _decide(state, Resolution.ABORT, cfg)
            if phase in (CPhase.COMMITTING, CPhase.ABORTING):
                if state.retries >= cfg.max_retries:
                    state = replace(state, phase=CPhase.DONE)
                    return state, [Persist("Done", {"txn": state.txn, "exhausted": True})]
                state = replace(state, retries=state.retries + 1)
                effects = [Send(p, _decision_msg(state.decision, state.txn, p))
                           for p in state.pids if p not in state.acks]
                state, timer = _arm(state, cfg.retry_interval)
                return state, effects + [timer]
    return state, []


def recover_coordinator(txn: str, records: Iterable[tuple[str, dict]]) -> CoordinatorState:
    state = CoordinatorState(txn)
    for kind, body in records:
        if body.get("txn") != txn:
            raise RecoveryError(f"record for {body.get('txn')} in journal of {txn}")
        if kind == "Begin" and state.phase == CPhase.INIT:
            state = replace(state, phase=CPhase.WAIT_VOTES)
            for raw in body["targets"]:
                state, _ = _enroll(state, SyncAction.from_json(raw))
        elif kind == "Enroll" and state.phase == CPhase.WAIT_VOTES:
            state, _ = _enroll(state, SyncAction.from_json(body["target"]))
        elif kind == "Decision" and state.phase == CPhase.WAIT_VOTES:
            d = Resolution(body["decision"])
            state = replace(state, decision=d,
                            phase=CPhase.COMMITTING if d == Resolution.COMMIT else CPhase.ABORTING)
        elif kind == "Done" and state.phase in (CPhase.COMMITTING, CPhase.ABORTING):
            state = replace(state, phase=CPhase.DONE)
        else:
            raise RecoveryError(f"unexpected {kind} record in phase {state.phase.value}")
    return state


def coordinator_resume(state: CoordinatorState,
                       cfg: CommitConfig = CommitConfig()) -> tuple[CoordinatorState, list[Effect]]:
    """Continue after recovery. Without a journaled decision the only safe one is abort."""
    if state.phase == CPhase.WAIT_VOTES:
        return _decide(state, Resolution.ABORT, cfg)
    if state.phase in (CPhase.COMMITTING, CPhase.ABORTING):
        effects = [Send(p, _decision_msg(state.decision, state.txn, p)) for p in state.pids]
        state, timer = _arm(replace(state, retries=0), cfg.retry_interval)
        return state, effects + [timer]
    return state, []


# -- participant -----------------------------------------------------------

class PPhase(str, Enum):
    INIT = "init"
    WORKING = "working"
    VOTED_YES = "voted_yes"
    VOTED_NO = "voted_no"
    COMMITTED = "committed"
    ABORTED = "aborted"


@dataclass(frozen=True)
class ParticipantState:
    txn: str
    pid: str
    target: Optional[SyncAction] = None
    command: Optional[CommandInstance] = None
    phase: PPhase = PPhase.INIT
    timer: int = 0


def make_command(pid: str, target: SyncAction, spec: EntitySpec,
                 arrival_seq: int = 0) -> CommandInstance:
    return CommandInstance(pid, target.action, bind_args(spec, target.action, target.args),
                           arrival_seq)


def _vote(state: ParticipantState, yes: bool) -> tuple[ParticipantState, list[Effect]]:
    msg = VoteYes(state.txn, state.pid) if yes else VoteNo(state.txn, state.pid)
    state = replace(state, phase=PPhase.VOTED_YES if yes else PPhase.VOTED_NO)
    return state, [Persist("Vote", {"txn": state.txn, "pid": state.pid, "yes": yes}),
                   Send(coord_addr(state.txn), msg)]


def _resolve(state: ParticipantState, decision: Resolution) -> tuple[ParticipantState, list[Effect]]:
    done = PPhase.COMMITTED if decision == Resolution.COMMIT else PPhase.ABORTED
    ack = Send(coord_addr(state.txn), Ack(state.txn, state.pid))
    if state.phase == done:
        return state, [ack]
    if state.phase in (PPhase.COMMITTED, PPhase.ABORTED):
        raise ValueError(f"{state.pid}: {decision.value} after {state.phase.value}")
    effects: list[Effect] = [Persist("Resolution", {"txn": state.txn, "pid": state.pid,
                                                    "resolution": decision.value})]
    if state.target is not None:
        effects.append(ToObject(state.target, state.pid, resolution=decision))
    return replace(state, phase=done), effects + [ack]


def participant_step(state: ParticipantState, event: Union[Message, ObjectDecision],
                     cfg: CommitConfig = CommitConfig(),
                     command: Optional[CommandInstance] = None
                     ) -> tuple[ParticipantState, list[Effect]]:
    """``command`` is the object-level instance of a VoteRequest's target.

    The host builds it because binding arguments needs the target's spec.
    """
    if event.txn != state.txn:
        raise ValueError(f"event for {event.txn} delivered to participant of {state.txn}")
    phase = state.phase

    match event:
        case VoteRequest(_, pid, target) if phase == PPhase.INIT:
            if command is None:
                raise ValueError("VoteRequest needs the bound command")
            state = replace(state, pid=pid, target=target, command=command,
                            phase=PPhase.WORKING, timer=state.timer + 1)
            return state, [
                Persist("CommandAccepted", {"txn": state.txn, "pid": pid,
                                            "target": target.to_json(),
                                            "command": command.to_json()}),
                ToObject(target, pid, command=command),
                StartTimer(pid, state.timer, cfg.vote_timeout),
            ]

        case VoteRequest() if phase in (PPhase.VOTED_YES, PPhase.VOTED_NO):
            # duplicate request: repeat the vote without journaling it again
            msg = (VoteYes if phase == PPhase.VOTED_YES else VoteNo)(state.txn, state.pid)
            return state, [Send(coord_addr(state.txn), msg)]

        case ObjectDecision(_, kind) if phase == PPhase.WORKING:
            if kind == "started":
                return _vote(state, True)
            if kind == "failed":
                return _vote(state, False)
            return state, []  # delayed: vote once the object retries it

        case GlobalCommit():
            return _resolve(state, Resolution.COMMIT)

        case GlobalAbort():
            return _resolve(state, Resolution.ABORT)

        case TimeoutFired(_, tid) if tid == state.timer and phase in (PPhase.INIT, PPhase.WORKING):
            state, effects = _vote(state, False)
            if state.target is not None:
                # withdraw the command from the object's delayed list
                effects.insert(1, ToObject(state.target, state.pid, resolution=Resolution.ABORT))
            return state, effects
    return state, []


def recover_participant(txn: str, pid: str,
                        records: Iterable[tuple[str, dict]]) -> ParticipantState:
    state = ParticipantState(txn, pid)
    for kind, body in records:
        if body.get("txn") != txn:
            raise RecoveryError(f"record for {body.get('txn')} in journal of {pid}")
        if kind == "CommandAccepted" and state.phase == PPhase.INIT:
            state = replace(state, phase=PPhase.WORKING,
                            target=SyncAction.from_json(body["target"]),
                            command=CommandInstance.from_json(body["command"]))
        elif kind == "Vote" and state.phase in (PPhase.INIT, PPhase.WORKING):
            state = replace(state, phase=PPhase.VOTED_YES if body["yes"] else PPhase.VOTED_NO)
        elif kind == "Resolution" and state.phase not in (PPhase.COMMITTED, PPhase.ABORTED):
            done = Resolution(body["resolution"]) == Resolution.COMMIT
            state = replace(state, phase=PPhase.COMMITTED if done else PPhase.ABORTED)
        else:
            raise RecoveryError(f"unexpected {kind} record in phase {state.phase.value}")
    return state


def participant_resume(state: ParticipantState,
                       cfg: CommitConfig = CommitConfig()) -> tuple[ParticipantState, list[Effect]]:
    """Continue after recovery.

    A participant that voted YES is blocked: it may not decide on its own, so
    it only repeats its vote, which makes a live coordinator re-send the outcome.
    """
    if state.phase == PPhase.WORKING:
        state = replace(state, timer=state.timer + 1)
        return state, [ToObject(state.target, state.pid, command=state.command),
                       StartTimer(state.pid, state.timer, cfg.vote_timeout)]
    if state.phase == PPhase.VOTED_YES:
        return state, [Send(coord_addr(state.txn), VoteYes(state.txn, state.pid))]
    if state.phase == PPhase.VOTED_NO:
        return state, [Send(coord_addr(state.txn), VoteNo(state.txn, state.pid))]
    return state, []
