"""Guarded state-machine entities: definitions and their pure semantics."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Optional

from .expr import Compiled, EvalError, Expr, compile_expr, evaluate, infer_kind
from .values import (
    Kind, KindError, Value, decode_mapping, decode_value, default_value, encode_mapping, encode_value,
    kind_of,
)


class SpecError(Exception):
    """Base class for entity specification errors."""


class UnknownActionError(SpecError):
    pass


class MissingBindingError(SpecError):
    pass


class NotEnabledError(SpecError):
    """Action has no transition out of the given lifecycle state."""


class SpecValidationError(SpecError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class Param:
    name: str
    kind: Kind
    # name of the entity spec an Id-kinded parameter points at, if any
    ref: Optional[str] = None


@dataclass(frozen=True)
class FieldDecl:
    name: str
    kind: Kind
    ref: Optional[str] = None
    identity: bool = False


@dataclass(frozen=True)
class SyncTemplate:
    target_spec: str
    target: Expr
    action: str
    args: tuple[Expr, ...] = ()


@dataclass(frozen=True)
class ActionDef:
    name: str
    params: tuple[Param, ...]
    from_state: str
    to_state: str
    guards: tuple[Expr, ...] = ()
    effects: tuple[tuple[str, Expr], ...] = ()
    syncs: tuple[SyncTemplate, ...] = ()

    def param_kinds(self) -> dict[str, Kind]:
        return {p.name: p.kind for p in self.params}

    @cached_property
    def compiled_guards(self) -> tuple[Compiled, ...]:
        return tuple(compile_expr(g) for g in self.guards)

    @cached_property
    def compiled_effects(self) -> tuple[tuple[str, Compiled], ...]:
        return tuple((name, compile_expr(rhs)) for name, rhs in self.effects)


@dataclass(frozen=True)
class EntitySpec:
    name: str
    fields: tuple[FieldDecl, ...]
    states: tuple[str, ...]
    initial: tuple[str, ...]
    finals: tuple[str, ...]
    actions: tuple[ActionDef, ...]

    @property
    def identity(self) -> Optional[str]:
        for f in self.fields:
            if f.identity:
                return f.name
        return None

    @property
    def initial_state(self) -> str:
        if len(self.initial) != 1:
            raise SpecError(f"{self.name}: expected exactly one initial state")
        return self.initial[0]

    def field_kinds(self) -> dict[str, Kind]:
        return {f.name: f.kind for f in self.fields}

    def action_names(self) -> list[str]:
        seen: list[str] = []
        for a in self.actions:
            if a.name not in seen:
                seen.append(a.name)
        return seen

    def lookup(self, action: str, lifecycle: Optional[str] = None) -> Optional[ActionDef]:
        """ActionDef for ``action`` enabled in ``lifecycle`` (any state when None).

        Raises UnknownActionError if the entity spec has no action of that name at all.
        """
        index = self._index
        if action not in index:
            raise UnknownActionError(f"{self.name} has no action {action!r}")
        if lifecycle is None:
            return index[action][None]
        return index[action].get(lifecycle)

    @cached_property
    def _index(self) -> dict[str, dict[Optional[str], ActionDef]]:
        out: dict[str, dict[Optional[str], ActionDef]] = {}
        for a in self.actions:
            by_state = out.setdefault(a.name, {None: a})
            by_state.setdefault(a.from_state, a)
        return out

    def signature(self, action: str) -> ActionDef:
        a = self.lookup(action)
        assert a is not None
        return a


class EntityState:
    """Lifecycle state plus an immutable data record. Hashable."""

    __slots__ = ("lifecycle", "data", "_hash")

    def __init__(self, lifecycle: str, data: Mapping[str, Value]):
        object.__setattr__(self, "lifecycle", lifecycle)
        object.__setattr__(self, "data", MappingProxyType(dict(data)))
        object.__setattr__(self, "_hash", None)

    @classmethod
    def _owned(cls, lifecycle: str, data: dict) -> EntityState:
        """Wrap ``data`` without copying; the caller must not keep a reference."""
        self = object.__new__(cls)
        object.__setattr__(self, "lifecycle", lifecycle)
        object.__setattr__(self, "data", MappingProxyType(data))
        object.__setattr__(self, "_hash", None)
        return self

    def __setattr__(self, name, value):
        raise AttributeError("EntityState is immutable")

    def _key(self):
        return (self.lifecycle, tuple(sorted(self.data.items())))

    def __eq__(self, other):
        if not isinstance(other, EntityState):
            return NotImplemented
        return self.lifecycle == other.lifecycle and dict(self.data) == dict(other.data)

    def __hash__(self):
        if self._hash is None:
            object.__setattr__(self, "_hash", hash(self._key()))
        return self._hash

    def __getitem__(self, name: str) -> Value:
        return self.data[name]

    def __repr__(self):
        body = ", ".join(f"{k}={v}" for k, v in sorted(self.data.items()))
        return f"EntityState({self.lifecycle}; {body})"

    def replace(self, lifecycle: Optional[str] = None, **updates: Value) -> EntityState:
        data = dict(self.data)
        data.update(updates)
        return EntityState(self.lifecycle if lifecycle is None else lifecycle, data)

    def to_json(self) -> dict[str, Any]:
        return {"lifecycle": self.lifecycle, "data": encode_mapping(dict(self.data))}

    @classmethod
    def from_json(cls, raw: Mapping[str, Any]) -> EntityState:
        return cls(raw["lifecycle"], decode_mapping(raw["data"]))


@dataclass(frozen=True)
class SyncAction:
    """A sync template resolved to a concrete target entity and argument values."""
    spec: str
    entity_id: str
    action: str
    args: tuple[Value, ...] = field(default=())

    def to_json(self) -> dict[str, Any]:
        return {
            "spec": self.spec,
            "id": self.entity_id,
            "action": self.action,
            "args": [encode_value(a) for a in self.args],
        }

    @classmethod
    def from_json(cls, raw: Mapping[str, Any]) -> SyncAction:
        args = tuple(decode_value(a) for a in raw["args"])
        return cls(raw["spec"], raw["id"], raw["action"], args)


def new_state(spec: EntitySpec, entity_id: Optional[str] = None, **data: Value) -> EntityState:
    """Fresh entity in its initial lifecycle state with zero-valued fields."""
    values = {f.name: default_value(f.kind) for f in spec.fields}
    if spec.identity is not None and entity_id is not None:
        values[spec.identity] = entity_id
    values.update(data)
    return EntityState(spec.initial_state, values)


def _check_bindings(action: ActionDef, args: Mapping[str, Value]) -> None:
    for p in action.params:
        if p.name not in args:
            raise MissingBindingError(f"{action.name}: no binding for parameter {p.name!r}")


def bind_args(spec: EntitySpec, action: str, positional: Iterable[Value]) -> dict[str, Value]:
    """Map positional argument values onto the action's parameter names."""
    adef = spec.signature(action)
    values = list(positional)
    if len(values) != len(adef.params):
        raise MissingBindingError(
            f"{spec.name}.{action} takes {len(adef.params)} arguments, got {len(values)}")
    return {p.name: v for p, v in zip(adef.params, values)}


def eval_guard(spec: EntitySpec, state: EntityState, action: str, args: Mapping[str, Value]) -> bool:
    adef = spec.lookup(action, state.lifecycle)
    if adef is None:
        if spec.lookup(action) is not None:
            _check_bindings(spec.signature(action), args)
        return False
    _check_bindings(adef, args)
    return guard_of(adef, state, args)


def apply_effect(spec: EntitySpec, state: EntityState, action: str, args: Mapping[str, Value]) -> EntityState:
    adef = spec.lookup(action, state.lifecycle)
    if adef is None:
        raise NotEnabledError(f"{spec.name}.{action} not enabled in {state.lifecycle!r}")
    _check_bindings(adef, args)
    return effect_of(adef, state, args)


def effect_of(adef: ActionDef, state: EntityState, args: Mapping[str, Value]) -> EntityState:
    """Apply an already resolved and bound action; no enabledness checks."""
    # every right-hand side reads the pre-state
    pre = state.data
    data = dict(pre)
    for name, fn in adef.compiled_effects:
        data[name] = fn(pre, args)
    return EntityState._owned(adef.to_state, data)


def guard_of(adef: ActionDef, state: EntityState, args: Mapping[str, Value]) -> bool:
    data = state.data
    for g in adef.compiled_guards:
        if not g(data, args):
            return False
    return True


def check_bindings(spec: EntitySpec, action: str, args: Mapping[str, Value]) -> None:
    _check_bindings(spec.signature(action), args)


def next_state(spec: EntitySpec, from_state: str, action: str) -> str:
    adef = spec.lookup(action, from_state)
    if adef is None:
        raise NotEnabledError(f"{spec.name}.{action} not enabled in {from_state!r}")
    return adef.to_state


def sync_ops(spec: EntitySpec, state: EntityState, action: str, args: Mapping[str, Value]) -> list[SyncAction]:
    adef = spec.lookup(action, state.lifecycle) or spec.signature(action)
    _check_bindings(adef, args)
    out = []
    for tpl in adef.syncs:
        target = evaluate(tpl.target, state.data, args)
        if kind_of(target) != Kind.ID:
            raise KindError(f"sync target of {action} is not an Id: {target!r}")
        values = tuple(evaluate(a, state.data, args) for a in tpl.args)
        out.append(SyncAction(tpl.target_spec, target, tpl.action, values))
    return out


def validate_spec(spec: EntitySpec, catalog: Optional[Mapping[str, EntitySpec]] = None) -> list[str]:
    """All invariant violations of ``spec``; empty iff valid.

    With a ``catalog`` the sync templates are also checked against their targets.
    """
    v: list[str] = []
    states = list(spec.states)
    if len(set(states)) != len(states):
        v.append("duplicate state names")
    if len(spec.initial) != 1:
        v.append(f"expected exactly one initial state, found {len(spec.initial)}")
    for s in (*spec.initial, *spec.finals):
        if s not in states:
            v.append(f"undeclared state {s!r}")

    fields = spec.field_kinds()
    if len(fields) != len(spec.fields):
        v.append("duplicate field names")
    idents = [f for f in spec.fields if f.identity]
    if len(idents) > 1:
        v.append("more than one @identity field")
    for f in idents:
        if f.kind != Kind.ID:
            v.append(f"identity field {f.name!r} must be an Id, not {f.kind.value}")

    seen_transitions = set()
    for a in spec.actions:
        where = f"{a.name} (from {a.from_state})"
        if (a.name, a.from_state) in seen_transitions:
            v.append(f"{where}: declared twice in the same state")
        seen_transitions.add((a.name, a.from_state))
        for s in (a.from_state, a.to_state):
            if s not in states:
                v.append(f"{where}: undeclared state {s!r}")
        if a.from_state in spec.finals:
            v.append(f"{where}: leaves final state {a.from_state!r}")
        names = [p.name for p in a.params]
        if len(set(names)) != len(names):
            v.append(f"{where}: duplicate parameter names")
        params = a.param_kinds()
        for g in a.guards:
            try:
                k = infer_kind(g, fields, params)
                if k != Kind.BOOL:
                    v.append(f"{where}: guard is {k.value}, not Bool")
            except (KindError, EvalError) as exc:
                v.append(f"{where}: guard: {exc}")
        assigned = set()
        for name, rhs in a.effects:
            if name not in fields:
                v.append(f"{where}: effect writes undeclared field {name!r}")
                continue
            if name in assigned:
                v.append(f"{where}: field {name!r} assigned twice")
            assigned.add(name)
            if spec.identity == name:
                v.append(f"{where}: identity field {name!r} is immutable")
            try:
                k = infer_kind(rhs, fields, params)
                if k != fields[name]:
                    v.append(f"{where}: assigns {k.value} to {fields[name].value} field {name!r}")
            except (KindError, EvalError) as exc:
                v.append(f"{where}: effect on {name!r}: {exc}")
        for tpl in a.syncs:
            v.extend(_validate_sync(where, tpl, fields, params, catalog))
    return v


def _validate_sync(where, tpl: SyncTemplate, fields, params, catalog) -> list[str]:
    v = []
    try:
        if infer_kind(tpl.target, fields, params) != Kind.ID:
            v.append(f"{where}: sync target of {tpl.action} is not an Id")
    except (KindError, EvalError) as exc:
        v.append(f"{where}: sync target: {exc}")
    arg_kinds = []
    for e in tpl.args:
        try:
            arg_kinds.append(infer_kind(e, fields, params))
        except (KindError, EvalError) as exc:
            v.append(f"{where}: sync argument: {exc}")
            arg_kinds.append(None)
    if catalog is None:
        return v
    target = catalog.get(tpl.target_spec)
    if target is None:
        v.append(f"{where}: sync targets unknown spec {tpl.target_spec!r}")
        return v
    try:
        tdef = target.signature(tpl.action)
    except UnknownActionError:
        v.append(f"{where}: {tpl.target_spec} has no action {tpl.action!r}")
        return v
    if len(tdef.params) != len(tpl.args):
        v.append(f"{where}: {tpl.target_spec}.{tpl.action} takes {len(tdef.params)} arguments")
    else:
        for p, k in zip(tdef.params, arg_kinds):
            if k is not None and k != p.kind:
                v.append(f"{where}: argument {p.name!r} of {tpl.action} expects {p.kind.value}, got {k.value}")
    return v


def validate_catalog(catalog: Mapping[str, EntitySpec]) -> list[str]:
    out = []
    for name, spec in catalog.items():
        out += [f"{name}: {msg}" for msg in validate_spec(spec, catalog)]
    return out
