"""Parser for the Rebel-like entity notation.

Grammar (keywords delimit clauses; indentation is not significant)::

    spec     := "class" IDENT field* state+
    field    := IDENT ":" TYPE ["@identity"]
    state    := ["initial" | "final"] IDENT handler*
    handler  := "on" IDENT "(" params ")" ":" IDENT
                ["pre:" expr ("," expr)*]
                ["post:" assign ("," assign)*]
                ["sync:" synccall+]
    assign   := ["this" "."] IDENT ("≡" | "=") expr
    synccall := target "." IDENT "(" [expr ("," expr)*] ")"

Money literals are ``€12.50`` or ``EUR(12.50)``. ``≥ ≤ ≡ ≠`` have the ASCII
spellings ``>= <= = !=``. Scaling by a rational literal is written
``balance * 1.10``, ``balance * 110%`` or ``balance / 4``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .expr import (
    Add, And, Compare, Expr, FieldRef, Lit, Neg, Not, Or, ParamRef, Scale, Sub,
)
from .model import (
    ActionDef, EntitySpec, FieldDecl, Param, SyncTemplate, validate_catalog, validate_spec,
)
from .values import Kind, Money, parse_decimal_cents


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


TYPE_NAMES = {
    "Money": Kind.MONEY,
    "Int": Kind.INT, "Integer": Kind.INT,
    "Bool": Kind.BOOL, "Boolean": Kind.BOOL,
    "Id": Kind.ID, "Iban": Kind.ID, "String": Kind.ID,
}

KEYWORDS = {"class", "initial", "final", "on", "pre", "post", "sync", "and", "or", "not",
            "true", "false", "this"}

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+|↪)
  | (?P<comment>\#[^\n]*|//[^\n]*)
  | (?P<money>€\s*\d+(?:\.\d{1,2})?|EUR\(\s*-?\d+(?:\.\d{1,2})?\s*\))
  | (?P<number>\d+(?:\.\d+)?)
  | (?P<annot>@[A-Za-z_]\w*)
  | (?P<ident>[A-Za-z_]\w*)
  | (?P<op>>=|<=|==|!=|≥|≤|≡|≠|¬|∧|∨|[<>=+\-*/%(),:.!])
""", re.VERBOSE)

_OP_ALIASES = {"≥": ">=", "≤": "<=", "≡": "≡", "==": "=", "≠": "!=", "¬": "not", "!": "not",
               "∧": "and", "∨": "or"}


@dataclass(frozen=True)
class Token:
    kind: str  # ident, keyword, number, money, annot, op, eof
    text: str
    line: int
    col: int
    value: object = None


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        raw = m.group()
        col = pos - line_start + 1
        if kind == "money":
            digits = raw[1:] if raw.startswith("€") else raw[4:-1]
            tokens.append(Token("money", raw, line, col, Money(parse_decimal_cents(digits.strip()))))
        elif kind == "number":
            tokens.append(Token("number", raw, line, col, Fraction(raw)))
        elif kind == "ident":
            tokens.append(Token("keyword" if raw in KEYWORDS else "ident", raw, line, col))
        elif kind == "annot":
            tokens.append(Token("annot", raw, line, col))
        elif kind == "op":
            tokens.append(Token("op", _OP_ALIASES.get(raw, raw), line, col))
        newlines = raw.count("\n")
        if newlines:
            line += newlines
            line_start = pos + raw.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.positions: dict[str, tuple[int, int]] = {}

    # -- token helpers ---------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def at_op(self, *ops: str) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def at_kw(self, *words: str) -> bool:
        return self.tok.kind == "keyword" and self.tok.text in words

    def error(self, message: str, tok: Optional[Token] = None) -> ParseError:
        t = tok or self.tok
        return ParseError(message, t.line, t.col)

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        if not self.at(kind, text):
            want = text or kind
            got = self.tok.text or self.tok.kind
            raise self.error(f"expected {want!r}, found {got!r}")
        return self.advance()

    # -- structure -------------------------------------------------------
    def parse_file(self) -> list[tuple[EntitySpec, tuple[int, int]]]:
        out = []
        while not self.at("eof"):
            out.append(self.parse_class())
        if not out:
            raise self.error("expected 'class'")
        return out

    def parse_class(self):
        start = self.expect("keyword", "class")
        name = self.expect("ident").text
        fields: list[FieldDecl] = []
        while self.at("ident") and self.peek().kind == "op" and self.peek().text == ":":
            fields.append(self.parse_field())
        self.fields = {f.name: f for f in fields}
        states, initial, finals, actions = [], [], [], []
        while self.at_kw("initial", "final") or self.at("ident"):
            is_initial = is_final = False
            while self.at_kw("initial", "final"):
                if self.advance().text == "initial":
                    is_initial = True
                else:
                    is_final = True
            state = self.expect("ident").text
            states.append(state)
            if is_initial:
                initial.append(state)
            if is_final:
                finals.append(state)
            while self.at_kw("on"):
                actions.append(self.parse_handler(state, name))
        if not states:
            raise self.error("class declares no states")
        if not (self.at("eof") or self.at_kw("class")):
            raise self.error(f"unexpected {self.tok.text!r}")
        spec = EntitySpec(name, tuple(fields), tuple(states), tuple(initial), tuple(finals),
                          tuple(actions))
        return spec, (start.line, start.col)

    def parse_field(self) -> FieldDecl:
        name = self.expect("ident").text
        self.expect("op", ":")
        kind, ref = self.parse_type()
        identity = False
        if self.at("annot"):
            t = self.advance()
            if t.text != "@identity":
                raise self.error(f"unknown annotation {t.text!r}", t)
            identity = True
        return FieldDecl(name, kind, ref, identity)

    def parse_type(self) -> tuple[Kind, Optional[str]]:
        t = self.expect("ident")
        if t.text in TYPE_NAMES:
            return TYPE_NAMES[t.text], None
        # any other type name is a reference to another entity spec
        return Kind.ID, t.text

    def parse_handler(self, state: str, class_name: str) -> ActionDef:
        on = self.expect("keyword", "on")
        name = self.expect("ident").text
        self.positions.setdefault(f"{name} (from {state})", (on.line, on.col))
        self.expect("op", "(")
        params: list[Param] = []
        if not self.at_op(")"):
            while True:
                pname = self.expect("ident").text
                self.expect("op", ":")
                kind, ref = self.parse_type()
                params.append(Param(pname, kind, ref))
                if not self.at_op(","):
                    break
                self.advance()
        self.expect("op", ")")
        self.expect("op", ":")
        to_state = self.expect("ident").text
        self.params = {p.name: p for p in params}
        guards: list[Expr] = []
        effects: list[tuple[str, Expr]] = []
        syncs: list[SyncTemplate] = []
        while self.at_kw("pre", "post", "sync"):
            clause = self.advance().text
            self.expect("op", ":")
            if clause == "pre":
                guards.append(self.parse_expr())
                while self.at_op(","):
                    self.advance()
                    guards.append(self.parse_expr())
            elif clause == "post":
                effects.append(self.parse_assign())
                while self.at_op(","):
                    self.advance()
                    effects.append(self.parse_assign())
            else:
                syncs.append(self.parse_sync())
                while self._at_sync_call():
                    syncs.append(self.parse_sync())
        return ActionDef(name, tuple(params), state, to_state, tuple(guards), tuple(effects),
                         tuple(syncs))

    def parse_assign(self) -> tuple[str, Expr]:
        if self.at_kw("this"):
            self.advance()
            self.expect("op", ".")
        target = self.expect("ident").text
        if not self.at_op("≡", "="):
            raise self.error("expected '≡' in post-condition")
        self.advance()
        return target, self.parse_expr()

    def _at_sync_call(self) -> bool:
        k = 2 if self.at_kw("this") else 0
        return ((self.at("ident") if k == 0 else self.peek(2).kind == "ident")
                and self.peek(k + 1).text == "." and self.peek(k + 2).kind == "ident"
                and self.peek(k + 3).text == "(")

    def parse_sync(self) -> SyncTemplate:
        if not self._at_sync_call():
            raise self.error("expected a sync call like 'from.Withdraw(amount)'")
        t = self.tok
        if self.at_kw("this"):
            self.advance()
            self.expect("op", ".")
            fname = self.expect("ident").text
            decl = self.fields.get(fname)
            if decl is None:
                raise self.error(f"unknown field {fname!r}", t)
            target, target_spec = FieldRef(fname), decl.ref
        else:
            target = self.resolve_name(self.advance())
            decl = self.params.get(t.text) or self.fields.get(t.text)
            target_spec = decl.ref
        if target_spec is None:
            raise self.error(f"sync target {t.text!r} is not typed as an entity", t)
        self.expect("op", ".")
        action = self.expect("ident").text
        self.expect("op", "(")
        args: list[Expr] = []
        if not self.at_op(")"):
            args.append(self.parse_expr())
            while self.at_op(","):
                self.advance()
                args.append(self.parse_expr())
        self.expect("op", ")")
        return SyncTemplate(target_spec, target, action, tuple(args))

    # -- expressions -----------------------------------------------------
    def parse_expr(self) -> Expr:
        items = [self.parse_and()]
        while self.at_kw("or") or self.at_op("or"):
            self.advance()
            items.append(self.parse_and())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def parse_and(self) -> Expr:
        items = [self.parse_not()]
        while self.at_kw("and") or self.at_op("and"):
            self.advance()
            items.append(self.parse_not())
        return items[0] if len(items) == 1 else And(tuple(items))

    def parse_not(self) -> Expr:
        if self.at_kw("not") or self.at_op("not"):
            self.advance()
            return Not(self.parse_not())
        return self.parse_compare()

    def parse_compare(self) -> Expr:
        left = self.parse_additive()
        if self.at_op("<", "<=", "=", "!=", ">=", ">"):
            op = self.advance().text
            return Compare(op, left, self.parse_additive())
        return left

    def parse_additive(self) -> Expr:
        left = self.parse_multiplicative()
        while self.at_op("+", "-"):
            op = self.advance().text
            right = self.parse_multiplicative()
            left = Add(left, right) if op == "+" else Sub(left, right)
        return left

    def parse_multiplicative(self) -> Expr:
        left = self.parse_unary()
        while self.at_op("*", "/"):
            op_tok = self.advance()
            if isinstance(left, _Ratio):
                # literal on the left, e.g. 1.10 * balance
                factor = left.value
                left = self.parse_unary()
                if op_tok.text == "/":
                    raise self.error("division by an expression is not supported", op_tok)
            else:
                factor = self.parse_ratio(op_tok)
                if op_tok.text == "/":
                    if factor == 0:
                        raise self.error("division by zero", op_tok)
                    factor = 1 / factor
            left = _scale(left, factor)
        if isinstance(left, _Ratio):
            if left.value.denominator != 1:
                raise self.error("decimal literal outside a scaling expression")
            return Lit(int(left.value))
        return left

    def parse_ratio(self, op_tok: Token) -> Fraction:
        if not self.at("number"):
            raise self.error("only scaling by a numeric literal is supported", op_tok)
        value = self.advance().value
        if self.at_op("%"):
            self.advance()
            value = value / 100
        return value

    def parse_unary(self):
        if self.at_op("-"):
            self.advance()
            operand = self.parse_unary()
            if isinstance(operand, _Ratio):
                return _Ratio(-operand.value)
            if isinstance(operand, Lit):
                return Lit(-operand.value)
            return Neg(operand)
        return self.parse_primary()

    def parse_primary(self):
        t = self.tok
        if t.kind == "money":
            self.advance()
            return Lit(t.value)
        if t.kind == "number":
            self.advance()
            value = t.value
            if self.at_op("%"):
                self.advance()
                value = value / 100
            return _Ratio(value)
        if self.at_kw("true", "false"):
            self.advance()
            return Lit(t.text == "true")
        if self.at_kw("this"):
            self.advance()
            self.expect("op", ".")
            name_tok = self.expect("ident")
            if name_tok.text not in self.fields:
                raise self.error(f"unknown field {name_tok.text!r}", name_tok)
            return FieldRef(name_tok.text)
        if t.kind == "ident":
            return self.resolve_name(self.advance())
        if self.at_op("("):
            self.advance()
            inner = self.parse_expr()
            self.expect("op", ")")
            return inner
        raise self.error(f"unexpected {t.text or t.kind!r} in expression")

    def resolve_name(self, t: Token) -> Expr:
        if t.text in self.params:
            return ParamRef(t.text)
        if t.text in self.fields:
            return FieldRef(t.text)
        raise self.error(f"unknown name {t.text!r}", t)


@dataclass(frozen=True)
class _Ratio:
    """Numeric literal awaiting context: an Int literal or a scale factor."""
    value: Fraction


def _scale(operand, factor: Fraction) -> Expr:
    if isinstance(operand, _Ratio):
        return _Ratio(operand.value * factor)
    # fold exact integer pre-scaling into a single rational, no double rounding
    if isinstance(operand, Scale) and operand.q == 1:
        factor = factor * operand.p
        operand = operand.operand
    return Scale(operand, factor.numerator, factor.denominator)


def _locate(parser: _Parser, violation: str, default: tuple[int, int]) -> tuple[int, int]:
    for key, pos in parser.positions.items():
        if violation.startswith(key) or f": {key}" in violation:
            return pos
    return default


def parse_specs(text: str) -> dict[str, EntitySpec]:
    """Parse one or more classes and validate them as a catalog."""
    p = _Parser(text)
    parsed = p.parse_file()
    catalog: dict[str, EntitySpec] = {}
    for spec, pos in parsed:
        if spec.name in catalog:
            raise ParseError(f"class {spec.name!r} declared twice", *pos)
        catalog[spec.name] = spec
    positions = {spec.name: pos for spec, pos in parsed}
    for name, spec in catalog.items():
        violations = validate_spec(spec, catalog)
        if violations:
            line, col = _locate(p, violations[0], positions[name])
            raise ParseError(f"{name}: {violations[0]}", line, col)
    return catalog


def parse_spec(text: str) -> EntitySpec:
    """Parse exactly one class. Sync targets are checked only for local well-formedness."""
    p = _Parser(text)
    parsed = p.parse_file()
    if len(parsed) != 1:
        raise ParseError(f"expected one class, found {len(parsed)}", *parsed[1][1])
    spec, pos = parsed[0]
    violations = validate_spec(spec)
    if violations:
        line, col = _locate(p, violations[0], pos)
        raise ParseError(violations[0], line, col)
    return spec


__all__ = ["ParseError", "parse_spec", "parse_specs", "tokenize", "validate_catalog"]
