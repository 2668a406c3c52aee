"""
ABOUTME: Main API binding scenario configs to worlds, planners and missions
ABOUTME: One call runs a complete seeded trial of the adaptive planner or the lawnmower baseline
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .baseline import plan_coverage
from .config import ScenarioConfig
from .errors import ConfigurationError
from .grid import GroundTruthMap, OccupancyGrid, generate_ground_truth
from .metrics import TrialRecord
from .planner import build_lattice, run_mission
from .utils import EventRecorder

logger = logging.getLogger(__name__)

PLANNERS = ("adaptive", "lawnmower")


@dataclass
class World:
    """Seeded ground truth plus a fresh uniform-prior belief."""
    truth: GroundTruthMap
    belief: OccupancyGrid
    mission_seed: np.random.SeedSequence


@dataclass
class TrialOutcome:
    record: TrialRecord
    events: List[Dict[str, Any]] = field(default_factory=list)
    truth: Optional[GroundTruthMap] = None
    belief: Optional[OccupancyGrid] = None


def build_world(scenario: ScenarioConfig, seed: int) -> World:
    """
    Weed field and prior belief for one trial.

    The trial seed feeds a SeedSequence whose two children drive world
    generation and the mission, so the same seed gives the same field to
    every planner.
    """
    world_seed, mission_seed = np.random.SeedSequence(seed).spawn(2)
    geometry = scenario.geometry()
    truth = generate_ground_truth(geometry, scenario.map.weed_count, world_seed)
    return World(truth=truth, belief=OccupancyGrid(geometry), mission_seed=mission_seed)


def simulate_trial(
    scenario: ScenarioConfig,
    planner: str,
    seed: int,
    record_events: bool = False,
    keep_maps: bool = False,
    selection_hook=None,
) -> TrialOutcome:
    """
    Fly one seeded mission and return its metric record.

    Args:
        scenario: Validated scenario
        planner: ``"adaptive"`` or ``"lawnmower"``
        seed: Trial seed shared by world and mission
        record_events: Capture the planner decision stream
        keep_maps: Return the truth and final belief alongside the record
        selection_hook: Passed through to the adaptive planner

    Returns:
        TrialOutcome with the record and, if requested, events and maps

    Raises:
        ConfigurationError: If the planner name is unknown

    Example:
        >>> outcome = simulate_trial(ScenarioConfig(), "adaptive", seed=1)
        >>> outcome.record.final.entropy_bits < 2500
        True
    """
    if planner not in PLANNERS:
        raise ConfigurationError(f"must be one of {PLANNERS}, got {planner!r}", key="planner")

    world = build_world(scenario, seed)
    geometry = world.truth.geometry
    sensor = scenario.sensor_model()
    envelope = scenario.flight_envelope()
    limits = scenario.dynamic_limits()
    config = scenario.planner_config(seed)
    start = scenario.start_position()
    recorder = EventRecorder() if record_events else None

    if planner == "adaptive":
        lattice = build_lattice(geometry, sensor, config.lattice_levels, envelope)
        fixed_plan = None
    else:
        lattice = None
        fixed_plan = plan_coverage(geometry, sensor, scenario.coverage_config(), start, envelope)

    record = run_mission(
        world.truth,
        world.belief,
        sensor,
        lattice,
        config,
        limits,
        start,
        np.random.default_rng(world.mission_seed),
        envelope=envelope,
        fixed_plan=fixed_plan,
        recorder=recorder,
        selection_hook=selection_hook,
        seed=seed,
        config_digest=scenario.digest(),
        planner_name=planner,
    )
    return TrialOutcome(
        record=record,
        events=recorder.events if recorder is not None else [],
        truth=world.truth if keep_maps else None,
        belief=world.belief if keep_maps else None,
    )


def simulate_adaptive(scenario: ScenarioConfig, seed: int, **kwargs) -> TrialOutcome:
    return simulate_trial(scenario, "adaptive", seed, **kwargs)


def simulate_lawnmower(scenario: ScenarioConfig, seed: int, **kwargs) -> TrialOutcome:
    return simulate_trial(scenario, "lawnmower", seed, **kwargs)
