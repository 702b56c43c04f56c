"""Experiment matrices: scenarios × engines × node counts × seeds.

A config file (YAML or JSON) looks like::

    name: synchot-grid
    engines: [psac:8, 2pl]
    nodes: [1, 2, 4, 8]
    seeds: [1, 2, 3, 4, 5]
    workers: 1            # > 1 runs cells in worker processes
    checks: true          # atomicity, linearizability, conservation per cell
    scenarios:
      - name: synchot
        workload: {kind: synchot, hot_accounts: 10, users: 64}

A file without ``scenarios`` (or ``scenario``) is read as a single scenario
and runs as a one-cell experiment.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Union

import yaml

from ..checker import check_atomicity, check_linearizability
from ..sim.cluster import Cluster
from ..sim.metrics import CSV_HEADER, Metrics
from ..sim.scenario import Scenario, ScenarioError, parse_engine, scenario_from_dict, scenario_to_dict

PARTIAL_MARK = "# partial"


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class Row:
    """One CSV line: the result of one (scenario, engine, N, seed) cell."""
    scenario: str
    engine: str
    nodes: int
    seed: int
    throughput: float
    p50: float
    p95: float
    p99: float
    accepted: int
    rejected: int
    delayed: int

    @classmethod
    def from_metrics(cls, m: Metrics) -> Row:
        return cls.from_csv(m.csv_row())

    @classmethod
    def from_csv(cls, line: Union[str, Sequence[str]]) -> Row:
        parts = next(csv.reader([line])) if isinstance(line, str) else list(line)
        if len(parts) != 11:
            raise ExperimentError(f"expected 11 CSV fields, got {len(parts)}: {parts}")
        s, e, n, seed, tps, p50, p95, p99, acc, rej, dly = parts
        try:
            return cls(s, e, int(n), int(seed), float(tps), float(p50), float(p95), float(p99),
                       int(acc), int(rej), int(dly))
        except ValueError as exc:
            raise ExperimentError(f"bad CSV row {parts}: {exc}") from exc

    def csv_row(self) -> str:
        return ",".join([
            self.scenario, self.engine, str(self.nodes), str(self.seed),
            f"{self.throughput:.3f}", f"{self.p50:.3f}", f"{self.p95:.3f}", f"{self.p99:.3f}",
            str(self.accepted), str(self.rejected), str(self.delayed),
        ])


@dataclass
class CellResult:
    row: Row
    violations: list[str] = field(default_factory=list)
    trace_lines: Optional[str] = None


@dataclass
class ExperimentResult:
    name: str
    cells: list[CellResult] = field(default_factory=list)
    failed: Optional[str] = None

    @property
    def rows(self) -> list[Row]:
        return [c.row for c in self.cells]

    @property
    def violations(self) -> list[str]:
        return [v for c in self.cells for v in c.violations]

    @property
    def ok(self) -> bool:
        return self.failed is None and not self.violations

    def to_csv(self) -> str:
        lines = [CSV_HEADER, *(r.csv_row() for r in self.rows)]
        if self.failed is not None:
            lines.append(f"{PARTIAL_MARK}: {self.failed}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    scenarios: tuple[Scenario, ...]
    engines: tuple[str, ...]
    nodes: tuple[int, ...]
    seeds: tuple[int, ...]
    workers: int = 1
    checks: bool = True
    traces: bool = False

    def cells(self) -> list[Scenario]:
        return [replace(sc, engine=e, nodes=n, seed=s)
                for sc in self.scenarios for e in self.engines
                for n in self.nodes for s in self.seeds]


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ScenarioError("experiment config must be a mapping")
    if "scenarios" in raw or "scenario" in raw:
        raw = dict(raw)
        specs = raw.pop("scenarios", None) or [raw.pop("scenario")]
        raw.pop("scenario", None)
        scenarios = tuple(scenario_from_dict(s) for s in specs)
        names = [s.name for s in scenarios]
        if len(set(names)) != len(names):
            raise ScenarioError(f"duplicate scenario names: {names}")
        base = scenarios[0]
        engines = tuple(raw.pop("engines", [base.engine]))
        nodes = tuple(int(n) for n in raw.pop("nodes", [base.nodes]))
        seeds = tuple(int(s) for s in raw.pop("seeds", [base.seed]))
        cfg = ExperimentConfig(
            name=str(raw.pop("name", base.name)), scenarios=scenarios, engines=engines,
            nodes=nodes, seeds=seeds, workers=int(raw.pop("workers", 1)),
            checks=bool(raw.pop("checks", True)), traces=bool(raw.pop("traces", False)))
        if raw:
            raise ScenarioError(f"unknown experiment keys: {sorted(raw)}")
    else:
        sc = scenario_from_dict(raw)
        cfg = ExperimentConfig(sc.name, (sc,), (sc.engine,), (sc.nodes,), (sc.seed,))
    for e in cfg.engines:
        parse_engine(e)
    if not (cfg.engines and cfg.nodes and cfg.seeds):
        raise ScenarioError("engines, nodes and seeds must be non-empty")
    for cell in cfg.cells():
        cell.validate()
    return cfg


def load_config(path: Union[str, os.PathLike]) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    raw = json.loads(text) if os.fspath(path).endswith(".json") else yaml.safe_load(text)
    return config_from_dict(raw)


def conserves_money(cluster: Cluster) -> bool:
    if cluster.sc.workload.kind not in ("sync", "synchot"):
        return True
    return cluster.account_total() == cluster.population.account_total().cents


def run_cell(scenario: Scenario, checks: bool = True, keep_trace: bool = False) -> CellResult:
    scenario = replace(scenario, trace=checks or keep_trace)
    cluster = Cluster(scenario)
    trace, metrics = cluster.run()
    violations: list[str] = []
    label = f"{scenario.name}/{scenario.engine_label}/N={scenario.nodes}/seed={scenario.seed}"
    if checks:
        for report in (check_atomicity(trace), check_linearizability(trace)):
            violations += [f"{label}: {report.name}: {v}" for v in report.violations]
        if not conserves_money(cluster):
            violations.append(f"{label}: conservation: total {cluster.account_total()} != "
                              f"{cluster.population.account_total().cents}")
    return CellResult(Row.from_metrics(metrics), violations,
                      trace.to_lines() if keep_trace else None)


def _run_cell_dict(args: tuple[dict, bool, bool]) -> CellResult:
    raw, checks, keep = args
    return run_cell(scenario_from_dict(raw), checks, keep)


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    """Run every cell in config order; a failing cell stops the run, keeping finished rows."""
    result = ExperimentResult(cfg.name)
    cells = cfg.cells()
    n = workers if workers is not None else cfg.workers
    if n > 1:
        jobs = [(scenario_to_dict(c), cfg.checks, cfg.traces) for c in cells]
        with ProcessPoolExecutor(max_workers=n) as pool:
            futures = [pool.submit(_run_cell_dict, j) for j in jobs]
            for cell, fut in zip(cells, futures):
                try:
                    result.cells.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - reported in the CSV
                    result.failed = f"{_label(cell)} failed: {exc!r}"
                    for f in futures:
                        f.cancel()
                    break
    else:
        for cell in cells:
            try:
                result.cells.append(run_cell(cell, cfg.checks, cfg.traces))
            except Exception as exc:  # noqa: BLE001 - reported in the CSV
                result.failed = f"{_label(cell)} failed: {exc!r}"
                break
    return result


def _label(sc: Scenario) -> str:
    return f"{sc.name}/{sc.engine}/N={sc.nodes}/seed={sc.seed}"


def trace_filename(row: Row) -> str:
    engine = row.engine.replace(":", "")
    return f"{row.scenario}-{engine}-N{row.nodes}-s{row.seed}.jsonl"


def read_csv(text: str) -> tuple[list[Row], bool]:
    """Rows of a results CSV and whether it is flagged as partial."""
    partial = False
    rows: list[Row] = []
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != CSV_HEADER:
        raise ExperimentError("missing or unexpected CSV header")
    body = []
    for ln in lines[1:]:
        if ln.startswith(PARTIAL_MARK):
            partial = True
        elif not ln.startswith("#"):
            body.append(ln)
    for parts in csv.reader(io.StringIO("\n".join(body))):
        rows.append(Row.from_csv(parts))
    return rows, partial


def group_points(rows: Iterable[Row]) -> dict[tuple[str, str], list[tuple[float, float]]]:
    """(N, throughput) points per (scenario, engine), in row order."""
    out: dict[tuple[str, str], list[tuple[float, float]]] = {}
    for r in rows:
        out.setdefault((r.scenario, r.engine), []).append((float(r.nodes), r.throughput))
    return out
