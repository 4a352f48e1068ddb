"""Experiment catalog, config files, run records and the command line."""

from .config import ConfigError, ExperimentSpec, emit_config, parse_config
from .runner import ExperimentError, RunManifest, run_experiment
from .plotting import emit_plot_script

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "emit_config",
    "parse_config",
    "ExperimentError",
    "RunManifest",
    "run_experiment",
    "emit_plot_script",
]
