"""Config-driven experiments, invariant suites and the command line."""
from .config import ExperimentConfig, load_config
from .runner import ExperimentReport, exponent_experiment, run_iteration, summarize
from .verify import verify_suite

__all__ = ["ExperimentConfig", "ExperimentReport", "exponent_experiment", "load_config",
           "run_iteration", "summarize", "verify_suite"]
