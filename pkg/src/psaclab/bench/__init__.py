"""Experiment matrices, Amdahl fits and reports."""

from .amdahl import AmdahlError, AmdahlFit, amdahl, amdahl_fit, asymptote, synthetic_points
from .experiment import (
    CellResult, ExperimentConfig, ExperimentError, ExperimentResult, Row, config_from_dict,
    load_config, read_csv, run_cell, run_experiment,
)
from .report import CellSummary, summarize, summarize_cells

__all__ = [
    "AmdahlError", "AmdahlFit", "CellResult", "CellSummary", "ExperimentConfig",
    "ExperimentError", "ExperimentResult", "Row", "amdahl", "amdahl_fit", "asymptote",
    "config_from_dict", "load_config", "read_csv", "run_cell", "run_experiment",
    "summarize", "summarize_cells", "synthetic_points",
]
