"""Deterministic cluster simulation."""

from .cluster import Cluster, SimulationError, run_scenario
from .metrics import CSV_HEADER, Metrics, nearest_rank
from .scenario import (
    CoordinatorCrash, Costs, Latency, NodeCrash, Scenario, ScenarioError, ScriptedAction,
    ScriptedTxn, Workload, inject_failure, load_scenario, parse_engine, scenario_from_dict,
    scenario_to_dict,
)
from .trace import Trace, TraceFormatError

__all__ = [
    "CSV_HEADER", "Cluster", "CoordinatorCrash", "Costs", "Latency", "Metrics", "NodeCrash",
    "Scenario", "ScenarioError", "ScriptedAction", "ScriptedTxn", "SimulationError", "Trace",
    "TraceFormatError", "Workload", "inject_failure", "load_scenario", "nearest_rank",
    "parse_engine", "run_scenario", "scenario_from_dict", "scenario_to_dict",
]
