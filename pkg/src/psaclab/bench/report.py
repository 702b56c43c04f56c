"""Statistics over result rows and the markdown report."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Iterable, Optional

from .amdahl import AmdahlError, AmdahlFit, amdahl_fit
from .experiment import Row

BASELINE = "2pl"


@dataclass(frozen=True)
class CellSummary:
    scenario: str
    engine: str
    nodes: int
    seeds: int
    median_tps: float
    p50: float
    p95: float
    p99: float
    ratio: Optional[float]        # median throughput over the 2PL median at the same N


def _median(values: list[float]) -> float:
    finite = [v for v in values if not math.isnan(v)]
    return statistics.median(finite) if finite else math.nan


def _ratio(x: float, base: float) -> float:
    if base > 0:
        return x / base
    return math.inf if x > 0 else math.nan


def _ordered(values: Iterable[str]) -> list[str]:
    seen: dict[str, None] = {}
    for v in values:
        seen.setdefault(v, None)
    return list(seen)


def summarize_cells(rows: Iterable[Row]) -> list[CellSummary]:
    """Medians across seeds per (scenario, engine, N).

    Latency columns are medians of the per-seed nearest-rank percentiles, so
    the summary can be rebuilt from the CSV alone.
    """
    rows = list(rows)
    groups: dict[tuple[str, str, int], list[Row]] = {}
    for r in rows:
        groups.setdefault((r.scenario, r.engine, r.nodes), []).append(r)
    medians = {k: _median([r.throughput for r in g]) for k, g in groups.items()}
    out = []
    for scenario in _ordered(r.scenario for r in rows):
        for engine in _ordered(r.engine for r in rows if r.scenario == scenario):
            for n in sorted({r.nodes for r in rows if (r.scenario, r.engine) == (scenario, engine)}):
                g = groups[(scenario, engine, n)]
                base = medians.get((scenario, BASELINE, n))
                ratio = None
                if engine != BASELINE and base is not None:
                    ratio = _ratio(medians[(scenario, engine, n)], base)
                out.append(CellSummary(
                    scenario, engine, n, len(g), medians[(scenario, engine, n)],
                    _median([r.p50 for r in g]), _median([r.p95 for r in g]),
                    _median([r.p99 for r in g]), ratio))
    return out


def fit_groups(rows: Iterable[Row]) -> dict[tuple[str, str], Optional[AmdahlFit]]:
    """Amdahl fit over all (N, throughput) points of each (scenario, engine)."""
    rows = list(rows)
    out: dict[tuple[str, str], Optional[AmdahlFit]] = {}
    for scenario in _ordered(r.scenario for r in rows):
        for engine in _ordered(r.engine for r in rows if r.scenario == scenario):
            pts = [(float(r.nodes), r.throughput) for r in rows
                   if (r.scenario, r.engine) == (scenario, engine)]
            try:
                out[(scenario, engine)] = amdahl_fit(pts)
            except AmdahlError:
                out[(scenario, engine)] = None
    return out


def _num(x: Optional[float], digits: int = 1) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    if math.isinf(x):
        return "∞"
    return f"{x:.{digits}f}"


def summarize(rows: Iterable[Row], title: str = "Results") -> str:
    rows = list(rows)
    if not rows:
        raise ValueError("no results to summarize")
    cells = summarize_cells(rows)
    fits = fit_groups(rows)
    lines = [f"# {title}", ""]
    for scenario in _ordered(c.scenario for c in cells):
        lines += [f"## {scenario}", "",
                  "| engine | N | seeds | median tps | p50 ms | p95 ms | p99 ms | ratio vs 2pl |",
                  "|---|---:|---:|---:|---:|---:|---:|---:|"]
        for c in cells:
            if c.scenario != scenario:
                continue
            lines.append(f"| {c.engine} | {c.nodes} | {c.seeds} | {_num(c.median_tps)} | "
                         f"{_num(c.p50, 3)} | {_num(c.p95, 3)} | {_num(c.p99, 3)} | "
                         f"{_num(c.ratio, 3)} |")
        lines += ["", "| engine | λ tps | σ | a_inf tps | residual |", "|---|---:|---:|---:|---:|"]
        for (sc, engine), fit in fits.items():
            if sc != scenario:
                continue
            if fit is None:
                lines.append(f"| {engine} | - | - | - | - |")
            else:
                lines.append(f"| {engine} | {_num(fit.lam)} | {fit.sigma:.7f} | "
                             f"{_num(fit.a_inf)} | {fit.residual:.3g} |")
        lines.append("")
    return "\n".join(lines)
