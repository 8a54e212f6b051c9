"""Scenario generation, sweeps, persistence and the command line."""
from .config import ExperimentConfig, load_config, parse_config
from .scenario import generate_scenario, trial_seed
from .sweep import SweepRecord, read_records, run_sweep, summarize, write_records

__all__ = ["ExperimentConfig", "load_config", "parse_config", "generate_scenario",
           "trial_seed", "SweepRecord", "read_records", "run_sweep", "summarize",
           "write_records"]
