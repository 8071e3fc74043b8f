"""Weather-driven cascading outage simulation on AC power-flow models."""

from __future__ import annotations

from .config import ConfigError, RunConfig, config_from_dict, load_config
from .engine import CascadeTrace, Event, run_cascade
from .grid import CaseError, Network, load_rts96, parse_case, write_case
from .montecarlo import run_batch, run_seed, sweep, vulnerability_scan

__all__ = [
    "CascadeTrace",
    "CaseError",
    "ConfigError",
    "Event",
    "Network",
    "RunConfig",
    "config_from_dict",
    "load_config",
    "load_rts96",
    "parse_case",
    "run_batch",
    "run_cascade",
    "run_seed",
    "sweep",
    "vulnerability_scan",
    "write_case",
]

__version__ = "0.1.0"
