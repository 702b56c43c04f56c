"""Guard and effect expressions.

Expressions are immutable trees. ``evaluate`` is pure and total over well-kinded
trees; ``infer_kind`` is the static check run at spec validation time.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import Callable, Mapping, Union

from .values import Kind, KindError, Money, Value, kind_of, round_half_up_div

COMPARE_OPS = ("<", "<=", "=", "!=", ">=", ">")


@dataclass(frozen=True)
class Lit:
    value: Value


@dataclass(frozen=True)
class FieldRef:
    """``this.<name>``: a data field of the entity."""
    name: str


@dataclass(frozen=True)
class ParamRef:
    name: str


@dataclass(frozen=True)
class Add:
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Sub:
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Neg:
    operand: Expr


@dataclass(frozen=True)
class Scale:
    """Multiply by the rational ``p / q``, rounding half-up."""
    operand: Expr
    p: int
    q: int


@dataclass(frozen=True)
class Compare:
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class And:
    items: tuple[Expr, ...]


@dataclass(frozen=True)
class Or:
    items: tuple[Expr, ...]


@dataclass(frozen=True)
class Not:
    operand: Expr


Expr = Union[Lit, FieldRef, ParamRef, Add, Sub, Neg, Scale, Compare, And, Or, Not]


class EvalError(Exception):
    pass


def evaluate(expr: Expr, data: Mapping[str, Value], args: Mapping[str, Value]) -> Value:
    match expr:
        case Lit(value):
            return value
        case FieldRef(name):
            try:
                return data[name]
            except KeyError:
                raise EvalError(f"unknown field {name!r}") from None
        case ParamRef(name):
            try:
                return args[name]
            except KeyError:
                raise EvalError(f"missing binding for parameter {name!r}") from None
        case Add(left, right):
            return evaluate(left, data, args) + evaluate(right, data, args)
        case Sub(left, right):
            return evaluate(left, data, args) - evaluate(right, data, args)
        case Neg(operand):
            return -evaluate(operand, data, args)
        case Scale(operand, p, q):
            v = evaluate(operand, data, args)
            if isinstance(v, Money):
                return v.scale(p, q)
            return round_half_up_div(v * p, q)
        case Compare(op, left, right):
            return _compare(op, evaluate(left, data, args), evaluate(right, data, args))
        case And(items):
            return all(evaluate(e, data, args) for e in items)
        case Or(items):
            return any(evaluate(e, data, args) for e in items)
        case Not(operand):
            return not evaluate(operand, data, args)
    raise EvalError(f"not an expression: {expr!r}")


_OPS = {"<": operator.lt, "<=": operator.le, "=": operator.eq, "!=": operator.ne,
        ">=": operator.ge, ">": operator.gt}

Compiled = Callable[[Mapping[str, Value], Mapping[str, Value]], Value]


def compile_expr(expr: Expr) -> Compiled:
    """Closure equivalent to ``lambda data, args: evaluate(expr, data, args)``.

    The outcome tree evaluates the same guards and effects against hundreds of
    leaves, so skipping the tree walk matters.
    """
    match expr:
        case Lit(value):
            return lambda d, a: value
        case FieldRef(name):
            def field(d, a):
                try:
                    return d[name]
                except KeyError:
                    raise EvalError(f"unknown field {name!r}") from None
            return field
        case ParamRef(name):
            def param(d, a):
                try:
                    return a[name]
                except KeyError:
                    raise EvalError(f"missing binding for parameter {name!r}") from None
            return param
        case Add(left, right):
            fl, fr = compile_expr(left), compile_expr(right)
            return lambda d, a: fl(d, a) + fr(d, a)
        case Sub(left, right):
            fl, fr = compile_expr(left), compile_expr(right)
            return lambda d, a: fl(d, a) - fr(d, a)
        case Neg(operand):
            fo = compile_expr(operand)
            return lambda d, a: -fo(d, a)
        case Scale(operand, p, q):
            fo = compile_expr(operand)

            def scale(d, a):
                v = fo(d, a)
                return v.scale(p, q) if isinstance(v, Money) else round_half_up_div(v * p, q)
            return scale
        case Compare(op, left, right):
            if op not in _OPS:
                raise EvalError(f"unknown comparison {op!r}")
            fn, fl, fr = _OPS[op], compile_expr(left), compile_expr(right)
            return lambda d, a: fn(fl(d, a), fr(d, a))
        case And(items):
            fs = tuple(map(compile_expr, items))
            return lambda d, a: all(f(d, a) for f in fs)
        case Or(items):
            fs = tuple(map(compile_expr, items))
            return lambda d, a: any(f(d, a) for f in fs)
        case Not(operand):
            fo = compile_expr(operand)
            return lambda d, a: not fo(d, a)
    raise EvalError(f"not an expression: {expr!r}")


def _compare(op: str, a: Value, b: Value) -> bool:
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise EvalError(f"unknown comparison {op!r}")


def infer_kind(expr: Expr, fields: Mapping[str, Kind], params: Mapping[str, Kind]) -> Kind:
    """Static kind of ``expr``; raises KindError or EvalError on ill-formed trees."""
    match expr:
        case Lit(value):
            return kind_of(value)
        case FieldRef(name):
            if name not in fields:
                raise EvalError(f"unknown field {name!r}")
            return fields[name]
        case ParamRef(name):
            if name not in params:
                raise EvalError(f"unknown parameter {name!r}")
            return params[name]
        case Add(left, right) | Sub(left, right):
            lk, rk = infer_kind(left, fields, params), infer_kind(right, fields, params)
            if lk != rk or lk not in (Kind.MONEY, Kind.INT):
                raise KindError(f"cannot combine {lk.value} and {rk.value} arithmetically")
            return lk
        case Neg(operand) | Scale(operand, _, _):
            k = infer_kind(operand, fields, params)
            if k not in (Kind.MONEY, Kind.INT):
                raise KindError(f"cannot apply arithmetic to {k.value}")
            if isinstance(expr, Scale) and expr.q == 0:
                raise KindError("scale denominator is zero")
            return k
        case Compare(op, left, right):
            lk, rk = infer_kind(left, fields, params), infer_kind(right, fields, params)
            if lk != rk:
                raise KindError(f"cannot compare {lk.value} with {rk.value}")
            if op not in ("=", "!=") and lk not in (Kind.MONEY, Kind.INT):
                raise KindError(f"ordering comparison on {lk.value}")
            return Kind.BOOL
        case And(items) | Or(items):
            for e in items:
                if infer_kind(e, fields, params) != Kind.BOOL:
                    raise KindError("boolean connective over non-Bool operand")
            return Kind.BOOL
        case Not(operand):
            if infer_kind(operand, fields, params) != Kind.BOOL:
                raise KindError("negation of non-Bool operand")
            return Kind.BOOL
    raise EvalError(f"not an expression: {expr!r}")


def referenced_names(expr: Expr) -> tuple[set[str], set[str]]:
    """(field names, parameter names) mentioned anywhere in ``expr``."""
    fields: set[str] = set()
    params: set[str] = set()
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, FieldRef):
            fields.add(e.name)
        elif isinstance(e, ParamRef):
            params.add(e.name)
        elif isinstance(e, (Add, Sub, Compare)):
            stack += [e.left, e.right]
        elif isinstance(e, (Neg, Scale, Not)):
            stack.append(e.operand)
        elif isinstance(e, (And, Or)):
            stack.extend(e.items)
    return fields, params
