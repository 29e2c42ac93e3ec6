"""Deterministic work-zone traffic simulator."""

from .config import ConfigError, SimConfig, default_config_path, load_config, parse_config_text
from .runner import MANIFEST_NAME, run_case, run_dataset, simulate_case, worker_count
from .world import Corridor, DensityUnreachable, SimVehicle, World, idm_acceleration, make_world, step

__all__ = [
    "ConfigError",
    "Corridor",
    "DensityUnreachable",
    "MANIFEST_NAME",
    "SimConfig",
    "SimVehicle",
    "World",
    "default_config_path",
    "idm_acceleration",
    "load_config",
    "make_world",
    "parse_config_text",
    "run_case",
    "run_dataset",
    "simulate_case",
    "step",
    "worker_count",
]
