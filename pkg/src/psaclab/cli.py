"""``psac-lab``: run experiments, fit curves, check traces, render reports.

    psac-lab run CONFIG [--seed S] [--engine psac:<k>|2pl] [--nodes N] [--out DIR]
    psac-lab fit RESULTS.csv
    psac-lab check TRACE.jsonl [--serializability]
    psac-lab report RESULTS.csv [--out FILE]

Exit status is 0 only when every cell ran and every check passed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from typing import Optional, Sequence

from .bench.amdahl import AmdahlError, amdahl_fit
from .bench.experiment import (
    ExperimentError, group_points, load_config, read_csv, run_experiment, trace_filename,
)
from .bench.report import summarize
from .checker import (
    BoundExceeded, MalformedTrace, check_atomicity, check_linearizability, check_serializability,
)
from .entity.bundled import bank_catalog
from .entity.parser import ParseError, parse_specs
from .sim.scenario import ScenarioError, parse_engine
from .sim.trace import Trace, TraceFormatError


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if args.engine is not None:
        parse_engine(args.engine)
        overrides["engines"] = (args.engine,)
    if args.nodes is not None:
        overrides["nodes"] = (args.nodes,)
    if args.traces:
        overrides["traces"] = True
    if args.no_checks:
        overrides["checks"] = False
    cfg = dataclasses.replace(cfg, **overrides)
    result = run_experiment(cfg, workers=args.workers)

    csv_text = result.to_csv()
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write(os.path.join(args.out, "results.csv"), csv_text)
        if result.rows:
            _write(os.path.join(args.out, "report.md"), summarize(result.rows, cfg.name) + "\n")
        for cell in result.cells:
            if cell.trace_lines is not None:
                path = os.path.join(args.out, "traces", trace_filename(cell.row))
                _write(path, cell.trace_lines)
    else:
        sys.stdout.write(csv_text)
    for v in result.violations:
        print(f"violation: {v}", file=sys.stderr)
    if result.failed:
        print(f"error: {result.failed}", file=sys.stderr)
    return 0 if result.ok else 1


def cmd_fit(args: argparse.Namespace) -> int:
    rows, partial = read_csv(_read(args.csv))
    status = 1 if partial else 0
    out = []
    for (scenario, engine), pts in group_points(rows).items():
        try:
            fit = amdahl_fit(pts)
        except AmdahlError as exc:
            out.append({"scenario": scenario, "engine": engine, "error": str(exc)})
            status = 1
            continue
        a_inf = fit.a_inf
        out.append({"scenario": scenario, "engine": engine, "lambda": round(fit.lam, 6),
                    "sigma": round(fit.sigma, 9),
                    "a_inf": "inf" if a_inf == float("inf") else round(a_inf, 3),
                    "residual": round(fit.residual, 6)})
    _write(args.out, "".join(json.dumps(o, sort_keys=True) + "\n" for o in out))
    if partial:
        print("error: results are flagged partial", file=sys.stderr)
    return status


def cmd_check(args: argparse.Namespace) -> int:
    trace = Trace.read(args.trace)
    catalog = bank_catalog()
    for path in args.spec or ():
        catalog.update(parse_specs(_read(path)))
    reports = [check_atomicity(trace), check_linearizability(trace)]
    lines = [r.to_json() for r in reports]
    ok = all(r.ok for r in reports)
    if args.serializability:
        try:
            verdict = check_serializability(trace, catalog, bound=args.bound)
            body = verdict.to_json()
            ok = ok and verdict.serializable
        except BoundExceeded as exc:
            body = {"serializable": None, "error": str(exc)}
            ok = False
        lines.append({"check": "serializability", **body})
    _write(args.out, "".join(json.dumps(line, sort_keys=True) + "\n" for line in lines))
    return 0 if ok else 1


def cmd_report(args: argparse.Namespace) -> int:
    rows, partial = read_csv(_read(args.csv))
    if not rows:
        print("error: no rows", file=sys.stderr)
        return 1
    title = args.title or os.path.splitext(os.path.basename(args.csv))[0]
    _write(args.out, summarize(rows, title) + "\n")
    return 1 if partial else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psac-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario or experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--engine", help="psac:<k> or 2pl")
    r.add_argument("--nodes", type=int)
    r.add_argument("--workers", type=int, help="worker processes (default from config)")
    r.add_argument("--out", help="directory for results.csv, report.md and traces")
    r.add_argument("--traces", action="store_true", help="keep one trace file per cell")
    r.add_argument("--no-checks", action="store_true", help="skip per-cell history checks")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("fit", help="fit Amdahl's law per scenario and engine")
    f.add_argument("csv")
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("check", help="check a trace for atomicity and linearizability")
    c.add_argument("trace")
    c.add_argument("--serializability", action="store_true",
                   help="also require state serializability (small traces)")
    c.add_argument("--bound", type=int, default=8)
    c.add_argument("--spec", action="append", help="extra entity spec file")
    c.add_argument("--out")
    c.set_defaults(func=cmd_check)

    m = sub.add_parser("report", help="markdown summary of a results CSV")
    m.add_argument("csv")
    m.add_argument("--title")
    m.add_argument("--out")
    m.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ScenarioError, ExperimentError, TraceFormatError, MalformedTrace,
            ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
