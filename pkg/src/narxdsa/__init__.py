"""Underlay dynamic spectrum access simulator with a NARX cognitive engine."""

__version__ = "0.1.0"

from .amc import AmcTable, ModulationType, default_amc_table
from .config import ExperimentConfig, load_config
from .engine import PolicyConfig, run_engine
from .narx import NarxConfig, NarxModel, load_model, save_model, train_lm
from .radio import ConfigurationError, PlaygroundConfig, Scenario, generate_scenario

__all__ = [
    "AmcTable", "ModulationType", "default_amc_table",
    "ExperimentConfig", "load_config",
    "PolicyConfig", "run_engine",
    "NarxConfig", "NarxModel", "load_model", "save_model", "train_lm",
    "ConfigurationError", "PlaygroundConfig", "Scenario", "generate_scenario",
]
