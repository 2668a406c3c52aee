"""
Weed IPP - adaptive informative path planning over probabilistic weed maps.

A simulated UAV with an altitude-dependent classifier plans budgeted,
dynamically feasible polynomial paths by greedy lattice viewpoint selection
plus CMA-ES refinement, and is benchmarked against lawnmower coverage.
"""

__version__ = "0.1.0"
__author__ = "Workspace Hub"

from . import errors
from . import utils
from . import logging_config
from . import grid
from . import sensor
from . import trajectory
from . import objectives
from . import optimizer
from . import planner
from . import baseline
from . import metrics
from . import config
from . import main
from . import harness

# Main API functions for convenient access
from .config import ScenarioConfig, load_config
from .harness import run_experiment, run_sweep, summary_table
from .main import build_world, simulate_adaptive, simulate_lawnmower, simulate_trial

__all__ = [
    "errors", "utils", "logging_config", "grid", "sensor", "trajectory", "objectives",
    "optimizer", "planner", "baseline", "metrics", "config", "main", "harness",
    # Main API functions
    "ScenarioConfig",
    "load_config",
    "build_world",
    "simulate_trial",
    "simulate_adaptive",
    "simulate_lawnmower",
    "run_experiment",
    "run_sweep",
    "summary_table",
]
