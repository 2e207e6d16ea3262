"""Experiment harness: run configs, timed experiments, sweeps, CSV and tables."""

from .config import ConfigError, RunConfig, load_config, parse_config
from .experiment import (
    ExperimentError,
    MonthRun,
    VerifyResult,
    host_cores,
    run_experiment,
    simulate_month,
    sweep_mcb,
    verify,
)
from .report import COLUMNS, ExperimentReport, emit_csv, emit_table, parse_csv, read_csv, write_readings_csv

__all__ = [
    "COLUMNS", "ConfigError", "ExperimentError", "ExperimentReport", "MonthRun", "RunConfig", "VerifyResult",
    "emit_csv", "emit_table", "host_cores", "load_config", "parse_config", "read_csv", "parse_csv", "run_experiment",
    "simulate_month", "sweep_mcb", "verify", "write_readings_csv",
]
