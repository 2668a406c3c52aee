"""
ABOUTME: Fixed-horizon adaptive replanning over a multiresolution viewpoint lattice
ABOUTME: Greedy gain-rate selection, intermediate insertion, CMA-ES refinement and mission execution
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateSegmentError,
    IllConditionedError,
    InfeasibleTrajectoryError,
    InvalidStateError,
)
from .grid import ClassificationThresholds, GridGeometry, GroundTruthMap, OccupancyGrid
from .metrics import TrialRecord, measure
from .objectives import (
    ObjectiveMode,
    classify_gain,
    info_gain,
    objective_gain,
    simulate_measurement,
)
from .optimizer import CmaesConfig, OptimizerMode, refine_path
from .sensor import SensorModel, observe
from .trajectory import (
    COINCIDENT_TOL,
    DynamicLimits,
    FlightEnvelope,
    PolynomialPath,
    Position,
    StartState,
    Viewpoint,
    ViewpointKind,
    allocate_time,
    drop_short_legs,
    plan_segments,
)

logger = logging.getLogger(__name__)

__all__ = [
    "Lattice",
    "LatticeLevel",
    "PlanState",
    "PlannerConfig",
    "ObjectiveMode",
    "OptimizerMode",
    "build_lattice",
    "choose_objective",
    "classify_gain",
    "info_gain",
    "insert_intermediate",
    "replan",
    "run_mission",
    "select_viewpoint",
]

# Called as hook(belief, origin, objective, chosen, visited) before the planning belief changes
SelectionHook = Callable[[OccupancyGrid, Position, ObjectiveMode, Viewpoint, Set[Position]], None]


@dataclass(frozen=True)
class LatticeLevel:
    altitude: float
    spacing: float
    points: Tuple[Position, ...]


@dataclass(frozen=True)
class Lattice:
    """Candidate viewpoints grouped by altitude level, highest level first."""
    levels: Tuple[LatticeLevel, ...]

    @property
    def points(self) -> List[Position]:
        return [p for level in self.levels for p in level.points]

    @property
    def lowest_level(self) -> LatticeLevel:
        return min(self.levels, key=lambda level: level.altitude)

    def __len__(self) -> int:
        return sum(len(level.points) for level in self.levels)


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 7
    budget_s: float = 300.0
    objective_mode: ObjectiveMode = ObjectiveMode.TIME_VARYING
    optimizer_mode: OptimizerMode = OptimizerMode.LOCAL
    thresholds: ClassificationThresholds = field(default_factory=ClassificationThresholds)
    lattice_levels: int = 4
    cmaes: CmaesConfig = field(default_factory=CmaesConfig)
    rng_seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError(f"must be >= 1, got {self.horizon}", key="horizon")
        if not self.budget_s > 0:
            raise ConfigurationError(f"must be > 0, got {self.budget_s}", key="budget_s")
        if self.lattice_levels < 1:
            raise ConfigurationError(f"must be >= 1, got {self.lattice_levels}", key="lattice_levels")
        object.__setattr__(self, "objective_mode", ObjectiveMode(self.objective_mode))
        object.__setattr__(self, "optimizer_mode", OptimizerMode(self.optimizer_mode))


@dataclass
class PlanState:
    elapsed_s: float
    position: Position
    velocity: Position = (0.0, 0.0, 0.0)
    global_vps: List[Viewpoint] = field(default_factory=list)
    intermediate_vps: List[Viewpoint] = field(default_factory=list)
    visited: Set[Position] = field(default_factory=set)


def _axis_points(center: float, extent: float, spacing: float) -> np.ndarray:
    n = max(1, math.ceil(extent / spacing - 1e-9))
    return center + (np.arange(n) - (n - 1) / 2.0) * spacing


def build_lattice(
    geometry: GridGeometry,
    sensor: SensorModel,
    levels: int,
    envelope: Optional[FlightEnvelope] = None,
) -> Lattice:
    """
    Multiresolution candidate lattice centred on the map.

    Level ``k`` flies at ``alt_max / 2**k`` (never below ``alt_min``) with
    points spaced one footprint side apart, so the footprints of a level
    tile the map without gaps. Levels that collapse onto ``alt_min`` are
    merged.

    Raises:
        ConfigurationError: If ``levels`` < 1
    """
    if levels < 1:
        raise ConfigurationError(f"must be >= 1, got {levels}", key="lattice_levels")
    envelope = envelope or FlightEnvelope(geometry)
    cx, cy = geometry.center
    built: List[LatticeLevel] = []
    for k in range(levels):
        altitude = max(envelope.alt_max / 2 ** k, envelope.alt_min)
        if built and math.isclose(built[-1].altitude, altitude):
            continue
        spacing = sensor.footprint_side(altitude)
        xs = _axis_points(cx, geometry.width_m, spacing)
        ys = _axis_points(cy, geometry.height_m, spacing)
        points = tuple((float(x), float(y), float(altitude)) for x in xs for y in ys)
        built.append(LatticeLevel(altitude=altitude, spacing=spacing, points=points))
    lattice = Lattice(levels=tuple(built))
    logger.debug(
        "Lattice levels: %s",
        ", ".join(f"{lv.altitude:.2f} m x{len(lv.points)}" for lv in lattice.levels),
    )
    return lattice


def choose_objective(
    mode: ObjectiveMode, elapsed_s: float, budget_s: float, rng: np.random.Generator
) -> ObjectiveMode:
    """
    Resolve the objective for the next selection.

    In time-varying mode a fresh ``u ~ U[0, 1)`` picks the information
    objective when ``elapsed / budget < u``, so exploration dominates early
    and classification late.
    """
    mode = ObjectiveMode(mode)
    if mode is not ObjectiveMode.TIME_VARYING:
        return mode
    u = rng.random()
    return ObjectiveMode.INFO if elapsed_s / budget_s < u else ObjectiveMode.CLASSIFY


def _distance(a: Sequence[float], b: Sequence[float]) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def _fallback_point(
    lattice: Lattice, origin: Position, visited: Set[Position]
) -> Optional[Position]:
    candidates = [p for p in lattice.lowest_level.points if _distance(p, origin) > COINCIDENT_TOL]
    unvisited = [p for p in candidates if p not in visited]
    pool = unvisited or candidates
    if not pool:
        return None
    return min(pool, key=lambda p: (_distance(p, origin), p[0], p[1]))


def select_viewpoint(
    belief: OccupancyGrid,
    sensor: SensorModel,
    lattice: Lattice,
    objective: ObjectiveMode,
    origin: Sequence[float],
    limits: DynamicLimits,
    thr: Optional[ClassificationThresholds] = None,
    visited: Optional[Set[Position]] = None,
) -> Viewpoint:
    """
    Lattice point with the highest gain per second of flight from ``origin``.

    The current position is never a candidate. Equal rates go to the lower
    altitude, then to the smaller (x, y). When no candidate has positive
    gain the nearest unvisited point of the lowest level is returned.

    Args:
        belief: Belief to score against (read only)
        sensor: Sensor used for the simulated measurement
        lattice: Candidate points
        objective: ``info`` or ``classify``
        origin: Current (or planned) UAV position
        limits: Dynamic limits for the straight-leg time estimate
        thr: Thresholds for the classification objective
        visited: Points already measured, avoided by the fallback

    Returns:
        Global viewpoint tagged with ``objective``

    Raises:
        ConfigurationError: If the lattice is empty
        InvalidStateError: If no lattice point differs from ``origin``
    """
    if len(lattice) == 0:
        raise ConfigurationError("lattice has no points", key="lattice_levels")
    objective = ObjectiveMode(objective)
    thr = thr or ClassificationThresholds()
    origin = tuple(float(c) for c in origin)

    best_key = None
    best_point = None
    for point in lattice.points:
        if _distance(point, origin) <= COINCIDENT_TOL:
            continue
        gain = objective_gain(objective, belief, sensor, thr, point)
        if not gain > 0:
            continue
        rate = gain / allocate_time(origin, point, limits)
        key = (-rate, point[2], point[0], point[1])
        if best_key is None or key < best_key:
            best_key, best_point = key, point

    if best_point is None:
        best_point = _fallback_point(lattice, origin, visited or set())
        if best_point is None:
            raise InvalidStateError(f"no lattice point to move to from {origin}")
        logger.debug("No positive gain from %s; falling back to %s", origin, best_point)

    return Viewpoint(position=best_point, kind=ViewpointKind.GLOBAL, objective=objective.value)


def insert_intermediate(
    prev: Viewpoint, next_vp: Viewpoint, envelope: Optional[FlightEnvelope] = None
) -> Viewpoint:
    """
    Midpoint between two viewpoints, clamped into the envelope.

    The intermediate carries the objective of the viewpoint it leads to.

    Raises:
        DegenerateSegmentError: If the two viewpoints coincide
    """
    a, b = prev.as_array(), next_vp.as_array()
    if np.linalg.norm(b - a) <= COINCIDENT_TOL:
        raise DegenerateSegmentError(f"no intermediate between coincident viewpoints {prev.position}")
    mid = (a + b) / 2.0
    if envelope is not None:
        mid = envelope.clamp(mid)
    return Viewpoint(
        position=tuple(float(c) for c in mid),
        kind=ViewpointKind.INTERMEDIATE,
        objective=next_vp.objective,
    )


def replan(
    state: PlanState,
    belief: OccupancyGrid,
    sensor: SensorModel,
    lattice: Lattice,
    config: PlannerConfig,
    rng: np.random.Generator,
    limits: Optional[DynamicLimits] = None,
    envelope: Optional[FlightEnvelope] = None,
    recorder=None,
    selection_hook: Optional[SelectionHook] = None,
) -> List[Viewpoint]:
    """
    Plan the next horizon of viewpoints from ``state``.

    Global viewpoints are chosen greedily; after each choice a simulated ML
    measurement is fused into a planning copy of the belief and a virtual
    clock advances by the straight-leg time. From the second global
    viewpoint on, a midpoint intermediate is inserted before it while the
    horizon has room for both. The list is then refined according to
    ``config.optimizer_mode``. ``belief`` is never modified.

    Raises:
        InvalidStateError: If the budget is already spent
    """
    if state.elapsed_s >= config.budget_s:
        raise InvalidStateError(
            f"elapsed {state.elapsed_s:.3f} s has reached the budget {config.budget_s} s"
        )
    limits = limits or DynamicLimits()
    envelope = envelope or FlightEnvelope(belief.geometry)
    thr = config.thresholds

    planning = belief.copy()
    clock = state.elapsed_s
    current = tuple(state.position)
    visited = set(state.visited)
    plan: List[Viewpoint] = []
    prev_global: Optional[Viewpoint] = None

    while len(plan) < config.horizon:
        objective = choose_objective(config.objective_mode, clock, config.budget_s, rng)
        chosen = select_viewpoint(
            planning, sensor, lattice, objective, current, limits, thr, visited
        )
        if selection_hook is not None:
            selection_hook(planning, current, objective, chosen, set(visited))
        if recorder is not None:
            recorder.record(
                "select", t_plan=clock, objective=objective.value, position=chosen.position,
                gain=objective_gain(objective, planning, sensor, thr, chosen.position),
            )
        simulate_measurement(planning, sensor, chosen.position)
        clock += allocate_time(current, chosen.position, limits)

        if prev_global is not None and len(plan) + 2 <= config.horizon:
            plan.append(insert_intermediate(prev_global, chosen, envelope))
        plan.append(chosen)
        prev_global = chosen
        current = chosen.position
        visited.add(chosen.position)

    state.global_vps = [v for v in plan if v.kind is ViewpointKind.GLOBAL]
    state.intermediate_vps = [v for v in plan if v.kind is ViewpointKind.INTERMEDIATE]

    if config.optimizer_mode is not OptimizerMode.NONE:
        plan = refine_path(
            plan, config.optimizer_mode, belief, sensor, thr,
            budget_remaining=config.budget_s - state.elapsed_s,
            limits=limits, config=config.cmaes, rng=rng, envelope=envelope,
            origin=state.position, recorder=recorder,
        )
    return plan


def _fit_path(
    state: PlanState, waypoints: List[Viewpoint], limits: DynamicLimits
) -> Tuple[Optional[PolynomialPath], List[Viewpoint]]:
    """
    Path from the current state through ``waypoints``, or through the first
    one alone when the full path is not flyable. Returns the path (None when
    even the first leg fails) and the waypoints it visits.
    """
    start = StartState(position=state.position, velocity=state.velocity)
    origin = Viewpoint(position=state.position)
    attempts = [waypoints] if len(waypoints) == 1 else [waypoints, waypoints[:1]]
    for attempt in attempts:
        try:
            return plan_segments([origin] + attempt, limits, start), attempt
        except (DegenerateSegmentError, IllConditionedError, InfeasibleTrajectoryError) as e:
            logger.warning(
                "Path through %d viewpoints is not flyable at t=%.2f s: %s",
                len(attempt), state.elapsed_s, e,
            )
    return None, []


def run_mission(
    truth: GroundTruthMap,
    belief: OccupancyGrid,
    sensor: SensorModel,
    lattice: Optional[Lattice],
    config: PlannerConfig,
    limits: DynamicLimits,
    start: Sequence[float],
    rng: Optional[np.random.Generator] = None,
    envelope: Optional[FlightEnvelope] = None,
    fixed_plan: Optional[Sequence[Viewpoint]] = None,
    recorder=None,
    selection_hook: Optional[SelectionHook] = None,
    seed: int = 0,
    config_digest: str = "",
    planner_name: str = "adaptive",
) -> TrialRecord:
    """
    Alternate planning and execution until the flight budget runs out.

    Each cycle plans a horizon (or takes what is left of ``fixed_plan``),
    drops viewpoints closer than ``MIN_LEG_M`` to their predecessor, fits
    a minimum-snap path through the rest from the current position and
    flies it leg by leg. A path that cannot be fitted is cut back to its
    first leg; a first leg that cannot be fitted ends the mission. On arriving at a viewpoint a real noisy observation is
    fused into ``belief`` and the metrics are recorded. A leg whose
    completion would exceed the budget is not started and the mission
    ends there.

    Planner and sensor draw from separate child streams of ``rng`` so that
    planning choices never shift the measurement noise.

    Args:
        truth: Latent weed map observed by the sensor
        belief: Mission belief, updated in place by executed measurements
        sensor: Sensor model
        lattice: Candidate lattice; may be None with ``fixed_plan``
        config: Planner settings
        limits: Dynamic limits
        start: Initial UAV position
        rng: Parent random stream; defaults to one seeded with ``config.rng_seed``
        envelope: Flight envelope (defaults to the map at config altitudes)
        fixed_plan: Precomputed viewpoint list flown in order without replanning
        recorder: Optional EventRecorder for the decision stream
        selection_hook: Optional callback observing every viewpoint selection
        seed: Trial seed stored on the record
        config_digest: Scenario identifier stored on the record
        planner_name: Label stored on the record

    Returns:
        TrialRecord with one event at t = 0 and one per executed measurement

    Raises:
        InvalidStateError: If ``start`` lies outside the envelope
    """
    envelope = envelope or FlightEnvelope(belief.geometry)
    start = tuple(float(c) for c in start)
    if not envelope.contains(start):
        raise InvalidStateError(f"start {start} is outside the flight envelope")
    if fixed_plan is None and lattice is None:
        raise ConfigurationError("an adaptive mission needs a lattice", key="lattice_levels")

    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    planner_rng, sensor_rng = rng.spawn(2)
    thr = config.thresholds
    record = TrialRecord(seed=seed, config_digest=config_digest, planner=planner_name)
    record.events.append(measure(0.0, belief, truth, thr))

    state = PlanState(elapsed_s=0.0, position=start)
    pending = list(fixed_plan) if fixed_plan is not None else None
    cycle = 0

    while state.elapsed_s < config.budget_s:
        if pending is not None:
            plan = pending
        else:
            plan = replan(
                state, belief, sensor, lattice, config, planner_rng, limits, envelope,
                recorder=recorder, selection_hook=selection_hook,
            )
        waypoints = drop_short_legs(state.position, plan)
        if not waypoints:
            if pending is None:
                logger.warning("Planner produced no movement at t=%.2f s; ending mission", state.elapsed_s)
            break

        path, flown = _fit_path(state, waypoints, limits)
        if path is None:
            break
        if pending is not None:
            pending = waypoints[len(flown):]
        waypoints = flown
        cycle += 1
        if recorder is not None:
            recorder.record(
                "path", cycle=cycle, t_start=state.elapsed_s, travel_time=path.total_time,
                waypoints=[vp.position for vp in waypoints],
            )

        over_budget = False
        for segment, vp in zip(path.segments, waypoints):
            if state.elapsed_s + segment.duration_s > config.budget_s:
                over_budget = True
                break
            state.elapsed_s += segment.duration_s
            state.position = vp.position
            observation = observe(sensor, truth, vp.position, sensor_rng)
            belief.fuse(observation)
            event = measure(state.elapsed_s, belief, truth, thr)
            record.events.append(event)
            record.flown_path.append(vp.position)
            record.segments.append(segment)
            state.visited.add(vp.position)
            if recorder is not None:
                recorder.record(
                    "measurement", t=event.t_s, position=vp.position, viewpoint=vp.kind.value,
                    objective=vp.objective, entropy_bits=event.entropy_bits,
                    classification_rate=event.classification_rate, f1=event.f1,
                )
        # every planned path ends at rest
        state.velocity = (0.0, 0.0, 0.0)
        if over_budget:
            logger.debug(
                "Next leg would overrun the %.1f s budget at t=%.2f s", config.budget_s, state.elapsed_s
            )
            break

    logger.info(
        "Mission %s seed %d: %d measurements in %.1f s, final entropy %.1f bits",
        planner_name, seed, record.n_measurements, state.elapsed_s, record.final.entropy_bits,
    )
    return record
