"""
ABOUTME: CMA-ES minimiser and continuous refinement of planned viewpoint lists
ABOUTME: Maximises gain per unit travel time under budget and flight-envelope penalties
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateSegmentError,
    IllConditionedError,
    InfeasibleTrajectoryError,
)
from .grid import ClassificationThresholds, OccupancyGrid
from .objectives import ObjectiveMode, objective_gain, simulate_measurement
from .sensor import SensorModel
from .trajectory import (
    DynamicLimits,
    FlightEnvelope,
    StartState,
    Viewpoint,
    ViewpointKind,
    flyable_indices,
    plan_segments,
    travel_time,
)

logger = logging.getLogger(__name__)


class OptimizerMode(str, Enum):
    NONE = "none"
    LOCAL = "local"
    GLOBAL = "global"


@dataclass(frozen=True)
class CmaesConfig:
    """
    Search settings for :func:`cmaes_minimize` and the refinement penalties.

    ``population_lambda=None`` selects the default ``4 + floor(3 ln n)``.
    """
    population_lambda: Optional[int] = None
    sigma0: float = 5.0  # metres, about one footprint
    max_evals: int = 1000
    f_tol: float = 1e-6
    x_tol: float = 1e-3
    budget_penalty: float = 1e3  # per second over the remaining budget
    envelope_penalty: float = 1e3  # per metre outside the envelope

    def __post_init__(self):
        if self.population_lambda is not None and self.population_lambda < 4:
            raise ConfigurationError(
                f"must be >= 4, got {self.population_lambda}", key="population_lambda"
            )
        if not self.sigma0 > 0:
            raise ConfigurationError(f"must be > 0, got {self.sigma0}", key="sigma0")
        if self.population_lambda is not None and self.max_evals < self.population_lambda:
            raise ConfigurationError(
                f"must be >= population_lambda ({self.population_lambda}), got {self.max_evals}",
                key="max_evals",
            )
        if self.max_evals < 4:
            raise ConfigurationError(f"must be >= 4, got {self.max_evals}", key="max_evals")
        if self.f_tol < 0 or self.x_tol < 0:
            raise ConfigurationError("tolerances must be >= 0", key="f_tol")
        if self.budget_penalty < 0 or self.envelope_penalty < 0:
            raise ConfigurationError("penalty weights must be >= 0", key="budget_penalty")


class CmaesResult(NamedTuple):
    x_best: np.ndarray
    f_best: float
    eval_count: int
    stop_reason: str


class CmaesGeneration(NamedTuple):
    generation: int
    mean: np.ndarray
    sigma: float
    best_f: float
    eval_count: int


class CmaesParameters:
    """Static strategy parameters for dimension ``n``."""

    def __init__(self, n: int, population_lambda: Optional[int] = None):
        self.n = n
        self.lam = population_lambda or 4 + int(math.floor(3 * math.log(n)))
        self.mu = self.lam // 2
        raw = math.log(self.lam / 2 + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = raw / raw.sum()
        self.mueff = 1.0 / float(np.sum(self.weights ** 2))

        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(
            1 - self.c1,
            2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff),
        )
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n ** 2))


def _evaluate(f: Callable[[np.ndarray], float], x: np.ndarray) -> float:
    value = float(f(x))
    return value if math.isfinite(value) else math.inf


def cmaes_minimize(
    f: Callable[[np.ndarray], float],
    x0: Sequence[float],
    config: CmaesConfig,
    rng: np.random.Generator,
    callback: Optional[Callable[[CmaesGeneration], None]] = None,
) -> CmaesResult:
    """
    Minimise ``f`` with rank-based CMA-ES.

    Uses weighted recombination, cumulative step-size adaptation and
    rank-one plus rank-mu covariance updates. The first sample of the
    first generation is ``x0`` itself, so the result is never worse than
    the starting point. Non-finite values of ``f`` rank last.

    Stops when the next generation would exceed ``max_evals``, when the
    best value improved by less than ``f_tol`` over the last ``10 n``
    evaluations, or when ``sigma`` times the longest covariance axis drops
    below ``x_tol``.

    Args:
        f: Objective over real vectors
        x0: Starting point, also the initial distribution mean
        config: Population, step size and stopping settings
        rng: Source of all sampling noise
        callback: Called with a :class:`CmaesGeneration` after each update

    Returns:
        CmaesResult with the best-ever sample

    Raises:
        ConfigurationError: If ``x0`` is empty or max_evals is below the population size
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    if n < 1:
        raise ConfigurationError("decision vector must have at least one coordinate", key="x0")
    par = CmaesParameters(n, config.population_lambda)
    if config.max_evals < par.lam:
        raise ConfigurationError(
            f"must be >= population size {par.lam}, got {config.max_evals}", key="max_evals"
        )

    mean = x0.copy()
    sigma = float(config.sigma0)
    pc = np.zeros(n)
    ps = np.zeros(n)
    cov = np.eye(n)
    eval_count = 0
    generation = 0
    best_x, best_f = x0.copy(), math.inf
    history: List[tuple] = []  # (eval_count, best_f) after each generation
    stop_reason = "max_evals"

    while eval_count + par.lam <= config.max_evals:
        eigvals, basis = np.linalg.eigh(cov)
        axes = np.sqrt(np.maximum(eigvals, 1e-300))
        z = rng.standard_normal((par.lam, n))
        y = (z * axes) @ basis.T
        if generation == 0:
            y[0] = 0.0
        samples = mean + sigma * y
        fvals = np.array([_evaluate(f, x) for x in samples])
        eval_count += par.lam

        order = np.argsort(fvals, kind="stable")
        if fvals[order[0]] < best_f:
            best_f = float(fvals[order[0]])
            best_x = samples[order[0]].copy()

        y_sel = y[order[: par.mu]]
        y_w = par.weights @ y_sel
        mean = mean + sigma * y_w

        inv_sqrt_yw = basis @ ((basis.T @ y_w) / axes)
        ps = (1 - par.cs) * ps + math.sqrt(par.cs * (2 - par.cs) * par.mueff) * inv_sqrt_yw
        ps_norm_sq = float(ps @ ps)
        hsig = ps_norm_sq / n / (1 - (1 - par.cs) ** (2 * eval_count / par.lam)) < 2 + 4 / (n + 1)
        pc = (1 - par.cc) * pc + hsig * math.sqrt(par.cc * (2 - par.cc) * par.mueff) * y_w

        c1a = par.c1 * (1 - (1 - hsig) * par.cc * (2 - par.cc))
        rank_mu = (y_sel.T * par.weights) @ y_sel
        cov = (1 - c1a - par.cmu) * cov + par.c1 * np.outer(pc, pc) + par.cmu * rank_mu
        cov = (cov + cov.T) / 2.0
        sigma *= math.exp(min(1.0, (par.cs / par.damps) * (math.sqrt(ps_norm_sq) / par.chi_n - 1)))

        generation += 1
        history.append((eval_count, best_f))
        if callback is not None:
            callback(CmaesGeneration(generation, mean.copy(), sigma, best_f, eval_count))

        if sigma * math.sqrt(max(float(np.max(np.linalg.eigvalsh(cov))), 0.0)) < config.x_tol:
            stop_reason = "x_tol"
            break
        window = [b for e, b in history if e <= eval_count - 10 * n]
        if window and window[-1] - best_f < config.f_tol:
            stop_reason = "f_tol"
            break

    logger.debug(
        "CMA-ES stopped on %s after %d evaluations (f_best=%.6g)", stop_reason, eval_count, best_f
    )
    return CmaesResult(best_x, best_f, eval_count, stop_reason)


def _optimizable_index(viewpoints: Sequence[Viewpoint], mode: OptimizerMode) -> List[int]:
    if mode is OptimizerMode.GLOBAL:
        return list(range(len(viewpoints)))
    if mode is OptimizerMode.LOCAL:
        return [i for i, v in enumerate(viewpoints) if v.kind is ViewpointKind.INTERMEDIATE]
    return []


class PathObjective:
    """
    Penalised negative gain rate of a viewpoint list, as minimised by refinement.

    Gains are scored sequentially: each viewpoint's simulated ML measurement
    is fused into a scratch belief before the next one is scored, using the
    objective frozen on that viewpoint. Gains are computed at positions
    clamped into the envelope; the raw positions only feed the envelope
    penalty.
    """

    def __init__(
        self,
        viewpoints: Sequence[Viewpoint],
        optimizable: Sequence[int],
        belief: OccupancyGrid,
        sensor: SensorModel,
        thr: ClassificationThresholds,
        envelope: FlightEnvelope,
        limits: DynamicLimits,
        origin: Sequence[float],
        budget_remaining: float,
        config: CmaesConfig,
    ):
        self.viewpoints = list(viewpoints)
        self.optimizable = list(optimizable)
        self.belief = belief
        self.sensor = sensor
        self.thr = thr
        self.envelope = envelope
        self.limits = limits
        self.origin = np.asarray(origin, dtype=float)
        self.budget_remaining = float(budget_remaining)
        self.config = config
        self.base = np.array([v.position for v in self.viewpoints], dtype=float)
        self.objectives = [ObjectiveMode(v.objective or ObjectiveMode.INFO) for v in self.viewpoints]

    def encode(self) -> np.ndarray:
        return self.base[self.optimizable].ravel()

    def positions(self, x: np.ndarray) -> np.ndarray:
        positions = self.base.copy()
        positions[self.optimizable] = np.asarray(x, dtype=float).reshape(-1, 3)
        return positions

    def gain_and_time(self, positions: np.ndarray):
        """
        Simulated gain and fitted travel time of the path the mission would fly.

        Positions are clamped into the envelope and viewpoints closer than
        ``MIN_LEG_M`` to their predecessor are dropped, as the mission does
        before fitting. Travel time is that of the minimum-snap path from
        ``origin`` at rest; it is infinite when no such path exists.
        """
        clamped = self.envelope.clamp(positions)
        kept = flyable_indices(self.origin, clamped)
        if not kept:
            return 0.0, math.inf
        waypoints = [Viewpoint(position=tuple(self.origin))]
        waypoints += [Viewpoint(position=tuple(clamped[i])) for i in kept]
        try:
            path = plan_segments(waypoints, self.limits, StartState(position=tuple(self.origin)))
        except (DegenerateSegmentError, IllConditionedError, InfeasibleTrajectoryError) as e:
            logger.debug("Candidate path not flyable: %s", e)
            return 0.0, math.inf

        scratch = self.belief.copy()
        gain = 0.0
        for i in kept:
            gain += objective_gain(self.objectives[i], scratch, self.sensor, self.thr, clamped[i])
            simulate_measurement(scratch, self.sensor, clamped[i])
        return gain, travel_time(path)

    def __call__(self, x: np.ndarray) -> float:
        positions = self.positions(x)
        gain, travel = self.gain_and_time(positions)
        if not math.isfinite(travel):
            return math.inf
        rate = gain / travel if travel > 0 else 0.0
        penalty = self.config.budget_penalty * max(0.0, travel - self.budget_remaining)
        penalty += self.config.envelope_penalty * self.envelope.violation(positions)
        return -rate + penalty


def path_fitness(
    viewpoints: Sequence[Viewpoint],
    belief: OccupancyGrid,
    sensor: SensorModel,
    thr: ClassificationThresholds,
    envelope: FlightEnvelope,
    limits: DynamicLimits,
    origin: Sequence[float],
    budget_remaining: float,
    config: Optional[CmaesConfig] = None,
) -> float:
    """Refinement fitness of a fixed viewpoint list (lower is better)."""
    objective = PathObjective(
        viewpoints, [], belief, sensor, thr, envelope, limits, origin, budget_remaining,
        config or CmaesConfig(),
    )
    return objective(np.zeros(0))


def refine_path(
    viewpoints: Sequence[Viewpoint],
    mode: OptimizerMode,
    belief: OccupancyGrid,
    sensor: SensorModel,
    thr: ClassificationThresholds,
    budget_remaining: float,
    limits: DynamicLimits,
    config: CmaesConfig,
    rng: np.random.Generator,
    envelope: FlightEnvelope,
    origin: Sequence[float],
    recorder=None,
) -> List[Viewpoint]:
    """
    Move the optimisable viewpoints to improve gain per unit travel time.

    Local mode moves intermediate viewpoints only; global mode moves every
    viewpoint. The belief is never modified. Returned positions are the
    best CMA-ES sample clamped into the envelope, so the result scores no
    worse than the input and always fits a minimum-snap path from
    ``origin``. If no sample fits, the input is returned unchanged.

    Args:
        viewpoints: Planned list, in flight order
        mode: Which viewpoints may move
        belief: Current mission belief (read only)
        sensor: Sensor used to simulate measurements
        thr: Thresholds for the classification objective
        budget_remaining: Seconds left in the mission
        limits: Dynamic limits the fitted path must respect
        config: CMA-ES settings and penalty weights
        rng: Random stream for the search
        envelope: Allowed flight volume
        origin: Current UAV position, start of the first leg
        recorder: Optional EventRecorder receiving per-generation traces

    Returns:
        New viewpoint list with the same kinds and objectives
    """
    viewpoints = list(viewpoints)
    mode = OptimizerMode(mode)
    optimizable = _optimizable_index(viewpoints, mode)
    if not optimizable:
        return viewpoints

    objective = PathObjective(
        viewpoints, optimizable, belief, sensor, thr, envelope, limits, origin,
        budget_remaining, config,
    )
    x0 = objective.encode()

    def trace(gen: CmaesGeneration) -> None:
        if recorder is not None:
            recorder.record(
                "cmaes_generation", mode=mode.value, generation=gen.generation,
                best_f=gen.best_f, sigma=gen.sigma, evals=gen.eval_count,
            )

    result = cmaes_minimize(objective, x0, config, rng, callback=trace)
    if not math.isfinite(result.f_best):
        logger.warning("No flyable refinement of %d viewpoints; keeping the plan", len(viewpoints))
        return viewpoints
    refined = envelope.clamp(objective.positions(result.x_best))
    if logger.isEnabledFor(logging.DEBUG):
        logger.debug(
            "Refined %d of %d viewpoints (%s): f %.6g -> %.6g in %d evals",
            len(optimizable), len(viewpoints), mode.value, objective(x0), result.f_best,
            result.eval_count,
        )
    return [
        Viewpoint(position=tuple(float(c) for c in p), kind=v.kind, objective=v.objective)
        for p, v in zip(refined, viewpoints)
    ]
