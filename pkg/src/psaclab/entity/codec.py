"""Machine-readable (JSON-compatible) form of an EntitySpec, for tooling."""

from __future__ import annotations

from typing import Any

from .expr import Add, And, Compare, Expr, FieldRef, Lit, Neg, Not, Or, ParamRef, Scale, Sub
from .model import ActionDef, EntitySpec, FieldDecl, Param, SyncTemplate
from .values import Kind, decode_value, encode_value


def expr_to_json(e: Expr) -> Any:
    match e:
        case Lit(value):
            return {"lit": encode_value(value)}
        case FieldRef(name):
            return {"field": name}
        case ParamRef(name):
            return {"param": name}
        case Add(l, r):
            return {"add": [expr_to_json(l), expr_to_json(r)]}
        case Sub(l, r):
            return {"sub": [expr_to_json(l), expr_to_json(r)]}
        case Neg(x):
            return {"neg": expr_to_json(x)}
        case Scale(x, p, q):
            return {"scale": expr_to_json(x), "p": p, "q": q}
        case Compare(op, l, r):
            return {"cmp": op, "args": [expr_to_json(l), expr_to_json(r)]}
        case And(items):
            return {"and": [expr_to_json(i) for i in items]}
        case Or(items):
            return {"or": [expr_to_json(i) for i in items]}
        case Not(x):
            return {"not": expr_to_json(x)}
    raise TypeError(f"not an expression: {e!r}")


def expr_from_json(raw: Any) -> Expr:
    if "lit" in raw:
        return Lit(decode_value(raw["lit"]))
    if "field" in raw:
        return FieldRef(raw["field"])
    if "param" in raw:
        return ParamRef(raw["param"])
    if "add" in raw:
        return Add(*map(expr_from_json, raw["add"]))
    if "sub" in raw:
        return Sub(*map(expr_from_json, raw["sub"]))
    if "neg" in raw:
        return Neg(expr_from_json(raw["neg"]))
    if "scale" in raw:
        return Scale(expr_from_json(raw["scale"]), raw["p"], raw["q"])
    if "cmp" in raw:
        return Compare(raw["cmp"], *map(expr_from_json, raw["args"]))
    if "and" in raw:
        return And(tuple(map(expr_from_json, raw["and"])))
    if "or" in raw:
        return Or(tuple(map(expr_from_json, raw["or"])))
    if "not" in raw:
        return Not(expr_from_json(raw["not"]))
    raise ValueError(f"unknown expression encoding: {raw!r}")


def spec_to_json(spec: EntitySpec) -> dict[str, Any]:
    return {
        "name": spec.name,
        "fields": [
            {"name": f.name, "kind": f.kind.value, "ref": f.ref, "identity": f.identity}
            for f in spec.fields
        ],
        "states": list(spec.states),
        "initial": list(spec.initial),
        "final": list(spec.finals),
        "actions": [
            {
                "name": a.name,
                "params": [{"name": p.name, "kind": p.kind.value, "ref": p.ref} for p in a.params],
                "from": a.from_state,
                "to": a.to_state,
                "guards": [expr_to_json(g) for g in a.guards],
                "effects": [{"field": n, "value": expr_to_json(v)} for n, v in a.effects],
                "syncs": [
                    {
                        "spec": s.target_spec,
                        "target": expr_to_json(s.target),
                        "action": s.action,
                        "args": [expr_to_json(x) for x in s.args],
                    }
                    for s in a.syncs
                ],
            }
            for a in spec.actions
        ],
    }


def spec_from_json(raw: dict[str, Any]) -> EntitySpec:
    fields = tuple(FieldDecl(f["name"], Kind(f["kind"]), f.get("ref"), f.get("identity", False))
                   for f in raw["fields"])
    actions = []
    for a in raw["actions"]:
        actions.append(ActionDef(
            a["name"],
            tuple(Param(p["name"], Kind(p["kind"]), p.get("ref")) for p in a["params"]),
            a["from"],
            a["to"],
            tuple(expr_from_json(g) for g in a["guards"]),
            tuple((e["field"], expr_from_json(e["value"])) for e in a["effects"]),
            tuple(SyncTemplate(s["spec"], expr_from_json(s["target"]), s["action"],
                               tuple(expr_from_json(x) for x in s["args"])) for s in a["syncs"]),
        ))
    return EntitySpec(raw["name"], fields, tuple(raw["states"]), tuple(raw["initial"]),
                      tuple(raw["final"]), tuple(actions))
