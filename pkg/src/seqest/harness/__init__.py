"""Monte-Carlo experiment harness: data generation, scheme runners, sweeps and the CLI."""

from .config import SCHEMES, ExperimentConfig, dump_config, load_config, parse_config
from .data import CoefficientModel, default_X, gen_coefficients, observation_blocks, trial_rng
from .schemes import RUNNERS, TrialRecord, make_scheme
from .sweep import (
    SWEEP_HEADER,
    SweepRow,
    aggregate,
    matched_time,
    read_sweep_csv,
    run_scheme,
    run_sweep,
    theory_curve,
    write_csv,
    write_records_csv,
)

__all__ = [
    "CoefficientModel", "ExperimentConfig", "RUNNERS", "SCHEMES", "SWEEP_HEADER", "SweepRow",
    "TrialRecord", "aggregate", "default_X", "dump_config", "gen_coefficients", "load_config",
    "make_scheme", "matched_time", "observation_blocks", "parse_config", "read_sweep_csv",
    "run_scheme", "run_sweep", "theory_curve", "trial_rng", "write_csv", "write_records_csv",
]
