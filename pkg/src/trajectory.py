"""
ABOUTME: Dynamically feasible polynomial paths through ordered viewpoints
ABOUTME: Degree-12 segments in end-point derivatives, minimum-snap QP, time allocation and sampling
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateSegmentError,
    IllConditionedError,
    InfeasibleTrajectoryError,
)
from .grid import GridGeometry

logger = logging.getLogger(__name__)

DEGREE = 12
N_COEFFS = DEGREE + 1
JOINT_ORDERS = 5  # derivatives 0..4 shared at every joint
PRIVATE_ORDERS = N_COEFFS - 2 * JOINT_ORDERS  # derivatives 5..7 at each segment start
SNAP_ORDER = 4

TIME_SCALE_FACTOR = 1.1
MAX_TIME_SCALINGS = 20
FEASIBILITY_DT = 0.01
COINCIDENT_TOL = 1e-9
MIN_LEG_M = 0.5  # waypoints closer than this to the previous one are not flown


class ViewpointKind(str, Enum):
    GLOBAL = "global"
    INTERMEDIATE = "intermediate"


Position = Tuple[float, float, float]


@dataclass(frozen=True)
class Viewpoint:
    """
    Measurement site in 3D.

    ``objective`` records which selection objective produced (or owns) the
    viewpoint so that later refinement can score the same mixed objective.
    """
    position: Position
    kind: ViewpointKind = ViewpointKind.GLOBAL
    objective: Optional[str] = None

    @property
    def x(self) -> float:
        return self.position[0]

    @property
    def y(self) -> float:
        return self.position[1]

    @property
    def z(self) -> float:
        return self.position[2]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)


@dataclass(frozen=True)
class FlightEnvelope:
    """Allowed altitudes over the map extent."""
    geometry: GridGeometry
    alt_min: float = 1.0
    alt_max: float = 45.0

    def __post_init__(self):
        if not 0.0 < self.alt_min < self.alt_max:
            raise ConfigurationError(
                f"need 0 < alt_min < alt_max, got {self.alt_min} / {self.alt_max}", key="alt_max"
            )

    @property
    def lower(self) -> np.ndarray:
        ox, oy = self.geometry.origin
        return np.array([ox, oy, self.alt_min])

    @property
    def upper(self) -> np.ndarray:
        ox, oy = self.geometry.origin
        return np.array([ox + self.geometry.width_m, oy + self.geometry.height_m, self.alt_max])

    def contains(self, position: Sequence[float], tol: float = 1e-9) -> bool:
        p = np.asarray(position, dtype=float)
        return bool(np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol))

    def clamp(self, positions: np.ndarray) -> np.ndarray:
        return np.clip(positions, self.lower, self.upper)

    def violation(self, positions: np.ndarray) -> float:
        """Total distance in metres by which positions leave the envelope."""
        p = np.asarray(positions, dtype=float)
        below = np.maximum(self.lower - p, 0.0)
        above = np.maximum(p - self.upper, 0.0)
        return float(below.sum() + above.sum())


@dataclass(frozen=True)
class DynamicLimits:
    v_max: float = 5.0
    a_max: float = 3.0

    def __post_init__(self):
        if not self.v_max > 0:
            raise ConfigurationError(f"must be > 0, got {self.v_max}", key="v_max")
        if not self.a_max > 0:
            raise ConfigurationError(f"must be > 0, got {self.a_max}", key="a_max")


@dataclass(frozen=True)
class StartState:
    position: Position
    velocity: Position = (0.0, 0.0, 0.0)
    acceleration: Position = (0.0, 0.0, 0.0)


@dataclass
class PolynomialSegment:
    """
    One degree-12 polynomial per axis over normalised time tau = t / duration.

    ``coeffs[axis, j]`` multiplies ``tau**j``.
    """
    coeffs: np.ndarray
    duration_s: float

    def evaluate(self, t, derivative: int = 0) -> np.ndarray:
        """Position (or a time derivative) at times ``t`` in [0, duration], shape (..., 3)."""
        tau = np.asarray(t, dtype=float) / self.duration_s
        powers = np.arange(N_COEFFS)
        k = derivative
        factors = np.array([_falling_factorial(j, k) for j in powers])
        exps = np.maximum(powers - k, 0)
        basis = factors * np.power.outer(tau, exps)
        return basis @ self.coeffs.T / self.duration_s ** k


@dataclass
class PolynomialPath:
    segments: List[PolynomialSegment] = field(default_factory=list)
    waypoints: List[Viewpoint] = field(default_factory=list)

    @property
    def durations(self) -> np.ndarray:
        return np.array([s.duration_s for s in self.segments], dtype=float)

    @property
    def total_time(self) -> float:
        return float(sum(s.duration_s for s in self.segments))

    def concatenate(self, other: "PolynomialPath") -> "PolynomialPath":
        waypoints = list(self.waypoints)
        others = list(other.waypoints)
        if waypoints and others and np.allclose(waypoints[-1].position, others[0].position):
            others = others[1:]
        return PolynomialPath(segments=self.segments + other.segments, waypoints=waypoints + others)


@dataclass
class TrajectorySample:
    t: float
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray


def _falling_factorial(j: int, k: int) -> float:
    if k > j:
        return 0.0
    return float(math.factorial(j) // math.factorial(j - k))


def _derivative_row(order: int, tau: float) -> np.ndarray:
    row = np.zeros(N_COEFFS)
    for j in range(order, N_COEFFS):
        row[j] = _falling_factorial(j, order) * tau ** (j - order)
    return row


def _local_orders() -> np.ndarray:
    """Derivative order of each entry of a segment's local end-point vector."""
    return np.array(list(range(JOINT_ORDERS + PRIVATE_ORDERS)) + list(range(JOINT_ORDERS)))


def _endpoint_map() -> np.ndarray:
    # rows: derivatives 0..7 at tau=0, then derivatives 0..4 at tau=1
    rows = [_derivative_row(k, 0.0) for k in range(JOINT_ORDERS + PRIVATE_ORDERS)]
    rows += [_derivative_row(k, 1.0) for k in range(JOINT_ORDERS)]
    return np.array(rows)


def _snap_cost_unit() -> np.ndarray:
    """Integral over tau in [0, 1] of the squared 4th tau-derivative, as a quadratic form."""
    q = np.zeros((N_COEFFS, N_COEFFS))
    for i in range(SNAP_ORDER, N_COEFFS):
        for j in range(SNAP_ORDER, N_COEFFS):
            power = i + j - 2 * SNAP_ORDER
            q[i, j] = (
                _falling_factorial(i, SNAP_ORDER) * _falling_factorial(j, SNAP_ORDER) / (power + 1)
            )
    return q


_ENDPOINT_MAP_INV = np.linalg.inv(_endpoint_map())
_SNAP_UNIT = _snap_cost_unit()
_LOCAL_ORDERS = _local_orders()


class MinimumSnapProblem:
    """
    Unconstrained snap-minimisation QP in end-point derivatives.

    Variables per axis are derivatives 0..4 at every joint (shared by the
    two adjacent segments, which makes continuity structural) plus
    derivatives 5..7 at each segment start, kept in normalised time because
    they are private to one segment. Fixed variables are all joint
    positions, the start velocity and acceleration, and velocity through
    snap at the final joint; everything else is free and chosen by solving
    ``R_PP d_P = -R_PF d_F``.
    """

    def __init__(self, durations: Sequence[float]):
        self.durations = np.asarray(durations, dtype=float)
        if self.durations.ndim != 1 or self.durations.size < 1 or np.any(self.durations <= 0):
            raise ConfigurationError("segment durations must be positive", key="durations")
        self.n_segments = self.durations.size
        self.n_joint_vars = JOINT_ORDERS * (self.n_segments + 1)
        self.n_vars = self.n_joint_vars + PRIVATE_ORDERS * self.n_segments
        self._segment_maps = [self._segment_map(s) for s in range(self.n_segments)]
        self.cost_matrix = self._assemble_cost()
        self.fixed_index = self._fixed_indices()
        free = np.ones(self.n_vars, dtype=bool)
        free[self.fixed_index] = False
        self.free_index = np.nonzero(free)[0]

    def joint_var(self, joint: int, order: int) -> int:
        return joint * JOINT_ORDERS + order

    def private_var(self, segment: int, order: int) -> int:
        return self.n_joint_vars + segment * PRIVATE_ORDERS + (order - JOINT_ORDERS)

    def _local_selection(self, s: int) -> np.ndarray:
        idx = [self.joint_var(s, k) for k in range(JOINT_ORDERS)]
        idx += [self.private_var(s, k) for k in range(JOINT_ORDERS, JOINT_ORDERS + PRIVATE_ORDERS)]
        idx += [self.joint_var(s + 1, k) for k in range(JOINT_ORDERS)]
        return np.array(idx)

    def _segment_map(self, s: int) -> np.ndarray:
        """Matrix taking the local variable vector to tau-domain coefficients."""
        duration = self.durations[s]
        scale = duration ** _LOCAL_ORDERS.astype(float)
        scale[JOINT_ORDERS:JOINT_ORDERS + PRIVATE_ORDERS] = 1.0
        return _ENDPOINT_MAP_INV * scale[np.newaxis, :]

    def _assemble_cost(self) -> np.ndarray:
        r = np.zeros((self.n_vars, self.n_vars))
        for s in range(self.n_segments):
            m = self._segment_maps[s]
            local = m.T @ _SNAP_UNIT @ m / self.durations[s] ** (2 * SNAP_ORDER - 1)
            idx = self._local_selection(s)
            r[np.ix_(idx, idx)] += local
        return r

    def _fixed_indices(self) -> np.ndarray:
        fixed = [self.joint_var(j, 0) for j in range(self.n_segments + 1)]
        fixed += [self.joint_var(0, 1), self.joint_var(0, 2)]
        fixed += [self.joint_var(self.n_segments, k) for k in range(1, JOINT_ORDERS)]
        return np.array(sorted(fixed))

    def fixed_values(self, positions: np.ndarray, start: StartState) -> np.ndarray:
        """Values of the fixed variables (one column per axis), ordered like ``fixed_index``."""
        values = np.zeros((self.n_vars, 3))
        for j in range(self.n_segments + 1):
            values[self.joint_var(j, 0)] = positions[j]
        values[self.joint_var(0, 1)] = start.velocity
        values[self.joint_var(0, 2)] = start.acceleration
        return values[self.fixed_index]

    def solve(self, fixed: np.ndarray) -> np.ndarray:
        """
        Optimal full variable vector (n_vars x 3) for the given fixed values.

        Raises:
            IllConditionedError: If the free-variable block cannot be solved
        """
        r = self.cost_matrix
        r_pp = r[np.ix_(self.free_index, self.free_index)]
        r_pf = r[np.ix_(self.free_index, self.fixed_index)]
        diag = np.diag(r_pp)
        if not np.all(np.isfinite(r_pp)) or np.any(diag <= 0):
            raise IllConditionedError("snap QP normal matrix is not positive", self._worst_segment())
        # Jacobi scaling evens out the powers of duration across derivative orders
        scale = 1.0 / np.sqrt(diag)
        scaled = r_pp * np.outer(scale, scale)
        if np.linalg.cond(scaled) > 1e14:
            raise IllConditionedError("snap QP normal matrix is singular", self._worst_segment())
        try:
            free = scale[:, np.newaxis] * np.linalg.solve(
                scaled, -(scale[:, np.newaxis] * (r_pf @ fixed))
            )
        except np.linalg.LinAlgError as e:
            raise IllConditionedError(f"snap QP solve failed: {e}", self._worst_segment())
        d = np.zeros((self.n_vars, fixed.shape[1]))
        d[self.fixed_index] = fixed
        d[self.free_index] = free
        return d

    def cost(self, d: np.ndarray) -> float:
        """Integrated squared snap summed over axes."""
        return float(np.einsum("ia,ij,ja->", d, self.cost_matrix, d))

    def coefficients(self, d: np.ndarray) -> List[np.ndarray]:
        """Per-segment tau-domain coefficients, each of shape (3, 13)."""
        return [
            (self._segment_maps[s] @ d[self._local_selection(s)]).T
            for s in range(self.n_segments)
        ]

    def _worst_segment(self) -> int:
        ratio = self.durations / np.median(self.durations)
        return int(np.argmax(np.maximum(ratio, 1.0 / ratio)))


def allocate_time(p0: Sequence[float], p1: Sequence[float], limits: DynamicLimits) -> float:
    """
    Nominal duration of a straight rest-to-rest leg with a trapezoidal speed profile.

    Raises:
        DegenerateSegmentError: If the points coincide
    """
    d = float(np.linalg.norm(np.asarray(p1, dtype=float) - np.asarray(p0, dtype=float)))
    if not d > 0:
        raise DegenerateSegmentError(f"cannot allocate time between coincident points {tuple(p0)}")
    if d >= limits.v_max ** 2 / limits.a_max:
        return d / limits.v_max + limits.v_max / limits.a_max
    return 2.0 * math.sqrt(d / limits.a_max)


def flyable_indices(
    origin: Sequence[float], positions: Sequence[Sequence[float]], min_leg: float = MIN_LEG_M
) -> List[int]:
    """
    Indices of ``positions`` that remain once every point closer than
    ``min_leg`` to the last kept point (starting from ``origin``) is dropped.
    """
    kept: List[int] = []
    last = np.asarray(origin, dtype=float)
    for i, p in enumerate(np.asarray(positions, dtype=float).reshape(-1, 3)):
        if np.linalg.norm(p - last) >= min_leg:
            kept.append(i)
            last = p
    return kept


def drop_short_legs(
    origin: Sequence[float], waypoints: Sequence[Viewpoint], min_leg: float = MIN_LEG_M
) -> List[Viewpoint]:
    waypoints = list(waypoints)
    positions = [w.position for w in waypoints]
    return [waypoints[i] for i in flyable_indices(origin, positions, min_leg)]


def travel_time(path: PolynomialPath) -> float:
    return path.total_time


def _build_path(
    problem: MinimumSnapProblem,
    positions: np.ndarray,
    start: StartState,
    waypoints: List[Viewpoint],
) -> PolynomialPath:
    d = problem.solve(problem.fixed_values(positions, start))
    segments = [
        PolynomialSegment(coeffs=c, duration_s=float(t))
        for c, t in zip(problem.coefficients(d), problem.durations)
    ]
    return PolynomialPath(segments=segments, waypoints=list(waypoints))


def plan_segments(
    waypoints: Sequence[Viewpoint],
    limits: DynamicLimits,
    start_state: Optional[StartState] = None,
) -> PolynomialPath:
    """
    Minimum-snap path through ``waypoints`` that respects the dynamic limits.

    The first waypoint is the start position; its velocity and acceleration
    come from ``start_state`` and the path ends at rest. Durations start
    from :func:`allocate_time` and are scaled up by 1.1 until the path,
    sampled at 100 Hz, stays within ``v_max`` and ``a_max``.

    Raises:
        DegenerateSegmentError: If fewer than two waypoints are given or two consecutive coincide
        IllConditionedError: If the QP cannot be solved
        InfeasibleTrajectoryError: If the limits still fail after the scaling cap
    """
    waypoints = list(waypoints)
    if len(waypoints) < 2:
        raise DegenerateSegmentError("a path needs at least two waypoints")
    positions = np.array([w.position for w in waypoints], dtype=float)
    for i, (a, b) in enumerate(zip(positions[:-1], positions[1:])):
        if np.linalg.norm(b - a) <= COINCIDENT_TOL:
            raise DegenerateSegmentError(f"waypoints {i} and {i + 1} coincide at {tuple(a)}")
    if start_state is None:
        start_state = StartState(position=tuple(positions[0]))

    durations = np.array([allocate_time(a, b, limits) for a, b in zip(positions[:-1], positions[1:])])
    for attempt in range(MAX_TIME_SCALINGS + 1):
        path = _build_path(MinimumSnapProblem(durations), positions, start_state, waypoints)
        _, _, vel, acc = _sample_arrays(path, FEASIBILITY_DT)
        v_peak = float(np.max(np.linalg.norm(vel, axis=1)))
        a_peak = float(np.max(np.linalg.norm(acc, axis=1)))
        if v_peak <= limits.v_max and a_peak <= limits.a_max:
            logger.debug(
                "Planned %d segments in %.2f s after %d scalings (v=%.2f, a=%.2f)",
                len(path.segments), path.total_time, attempt, v_peak, a_peak,
            )
            return path
        durations = durations * TIME_SCALE_FACTOR
    raise InfeasibleTrajectoryError(
        f"dynamic limits still violated after {MAX_TIME_SCALINGS} time scalings "
        f"(v={v_peak:.3f}/{limits.v_max}, a={a_peak:.3f}/{limits.a_max})"
    )


def _sample_times(total: float, dt: float) -> np.ndarray:
    n = int(math.floor(total / dt * (1.0 + 1e-12)))
    times = np.arange(n + 1) * dt
    times = times[times < total - 1e-9]
    return np.append(times, total)


def _sample_arrays(path: PolynomialPath, dt: float):
    if not dt > 0:
        raise ConfigurationError(f"must be > 0, got {dt}", key="dt")
    if not path.segments:
        empty = np.zeros((0, 3))
        return np.zeros(0), empty, empty, empty
    times = _sample_times(path.total_time, dt)
    bounds = np.concatenate([[0.0], np.cumsum(path.durations)])
    index = np.clip(np.searchsorted(bounds, times, side="right") - 1, 0, len(path.segments) - 1)
    pos = np.zeros((times.size, 3))
    vel = np.zeros((times.size, 3))
    acc = np.zeros((times.size, 3))
    for s, segment in enumerate(path.segments):
        mask = index == s
        if not np.any(mask):
            continue
        local = np.clip(times[mask] - bounds[s], 0.0, segment.duration_s)
        pos[mask] = segment.evaluate(local, 0)
        vel[mask] = segment.evaluate(local, 1)
        acc[mask] = segment.evaluate(local, 2)
    return times, pos, vel, acc


def sample(path: PolynomialPath, dt: float) -> List[TrajectorySample]:
    """States at t = 0, dt, 2dt, ... with the final time always included."""
    times, pos, vel, acc = _sample_arrays(path, dt)
    return [
        TrajectorySample(t=float(t), position=p, velocity=v, acceleration=a)
        for t, p, v, a in zip(times, pos, vel, acc)
    ]
