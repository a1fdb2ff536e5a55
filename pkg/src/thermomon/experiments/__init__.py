"""Experiment harness: configuration, runners and report bundles."""

from .config import (
    ConfigError,
    ExperimentSpec,
    ParseError,
    ValidationError,
    default_spec,
    load_scenario,
    spec_from_dict,
)
from .report import SERIES_HEADER, ReportBundle
from .runners import (
    METRIC_KEYS,
    RUNNERS,
    check_bundle,
    run,
    run_agility,
    run_connectivity,
    run_linearity,
    run_response_time,
    run_scaling,
    run_stability,
    run_wired_baseline,
)

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "ParseError",
    "ValidationError",
    "default_spec",
    "load_scenario",
    "spec_from_dict",
    "SERIES_HEADER",
    "ReportBundle",
    "METRIC_KEYS",
    "RUNNERS",
    "check_bundle",
    "run",
    "run_agility",
    "run_connectivity",
    "run_linearity",
    "run_response_time",
    "run_scaling",
    "run_stability",
    "run_wired_baseline",
]
