"""
ABOUTME: Probabilistic 2D weed map with Bayesian log-odds fusion
ABOUTME: Provides geometry, beliefs, entropy accounting and classification thresholds
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Set, Tuple, Union

import numpy as np

from .errors import ConfigurationError, GridIndexError, InvalidObservationError

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]  # (row, col); row runs along y, col along x


def logit(p):
    """Natural-log odds of a probability (scalar or array)."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.log(p) - np.log1p(-p)
    return float(out) if out.ndim == 0 else out


def sigmoid(x):
    """Inverse of :func:`logit` (scalar or array)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-x))
    return float(out) if out.ndim == 0 else out


LOGODDS_CLAMP = logit(0.999)


@dataclass(frozen=True)
class GridGeometry:
    """Rectangular map extent tiled exactly by square cells."""
    width_m: float = 50.0
    height_m: float = 50.0
    resolution_m: float = 1.0
    origin: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.resolution_m > 0:
            raise ConfigurationError(f"must be > 0, got {self.resolution_m}", key="resolution_m")
        for key, extent in (("width_m", self.width_m), ("height_m", self.height_m)):
            cells = extent / self.resolution_m
            if extent <= 0 or abs(cells - round(cells)) > 1e-9 or round(cells) < 1:
                raise ConfigurationError(
                    f"{extent} m is not a positive whole number of {self.resolution_m} m cells",
                    key=key,
                )

    @property
    def n_cols(self) -> int:
        return int(round(self.width_m / self.resolution_m))

    @property
    def n_rows(self) -> int:
        return int(round(self.height_m / self.resolution_m))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def cell_count(self) -> int:
        return self.n_rows * self.n_cols

    @property
    def center(self) -> Tuple[float, float]:
        return (self.origin[0] + self.width_m / 2.0, self.origin[1] + self.height_m / 2.0)

    def in_bounds(self, cell: Cell) -> bool:
        row, col = cell
        return 0 <= row < self.n_rows and 0 <= col < self.n_cols

    def cell_center(self, cell: Cell) -> Tuple[float, float]:
        row, col = cell
        return (
            self.origin[0] + (col + 0.5) * self.resolution_m,
            self.origin[1] + (row + 0.5) * self.resolution_m,
        )

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Column-centre x values and row-centre y values."""
        xs = self.origin[0] + (np.arange(self.n_cols) + 0.5) * self.resolution_m
        ys = self.origin[1] + (np.arange(self.n_rows) + 0.5) * self.resolution_m
        return xs, ys

    def square_window(self, center: Tuple[float, float], side: float) -> Tuple[slice, slice]:
        """
        Row and column slices of the cells whose centres lie in a square.

        The square is closed on its low edges and open on its high edges so
        that abutting squares never share a cell. Cells off the map are
        dropped; a square entirely off the map yields empty slices.
        """
        half = side / 2.0
        cols = self._axis_slice(center[0] - half, center[0] + half, self.origin[0], self.n_cols)
        rows = self._axis_slice(center[1] - half, center[1] + half, self.origin[1], self.n_rows)
        return rows, cols

    def _axis_slice(self, lo: float, hi: float, origin: float, count: int) -> slice:
        # centre_j = origin + (j + 0.5) * res; keep lo <= centre_j < hi
        start = math.ceil((lo - origin) / self.resolution_m - 0.5)
        stop = math.ceil((hi - origin) / self.resolution_m - 0.5)
        start = min(max(start, 0), count)
        stop = min(max(stop, start), count)
        return slice(start, stop)


@dataclass(frozen=True)
class ClassificationThresholds:
    """Probability thresholds splitting cells into non-weed, unclassified and weed."""
    delta_nw: float = 0.25
    delta_w: float = 0.75

    def __post_init__(self):
        if not self.delta_nw < self.delta_w:
            raise ConfigurationError(
                f"delta_nw ({self.delta_nw}) must be below delta_w ({self.delta_w})",
                key="delta_w",
            )
        if not 0.0 < self.delta_nw <= 0.5:
            raise ConfigurationError(f"must lie in (0, 0.5], got {self.delta_nw}", key="delta_nw")
        if not 0.5 <= self.delta_w < 1.0:
            raise ConfigurationError(f"must lie in [0.5, 1), got {self.delta_w}", key="delta_w")


@dataclass(frozen=True)
class GroundTruthMap:
    """Latent weed field the simulated sensor observes."""
    geometry: GridGeometry
    occupied: np.ndarray

    @property
    def weed_count(self) -> int:
        return int(np.count_nonzero(self.occupied))


@dataclass
class Observation:
    """
    One footprint worth of per-cell weed probabilities.

    The observed cells form a rectangular window of the grid; iterating
    yields ``((row, col), p_obs)`` pairs in row-major order.
    """
    rows: slice
    cols: slice
    p_obs: np.ndarray
    altitude: float = 0.0

    def __len__(self) -> int:
        return int(self.p_obs.size)

    def __iter__(self) -> Iterator[Tuple[Cell, float]]:
        for i, row in enumerate(range(self.rows.start, self.rows.stop)):
            for j, col in enumerate(range(self.cols.start, self.cols.stop)):
                yield (row, col), float(self.p_obs[i, j])


class OccupancyGrid:
    """Bernoulli weed-occupancy beliefs stored as clamped log-odds."""

    def __init__(
        self,
        geometry: GridGeometry,
        prior: float = 0.5,
        clamp: float = LOGODDS_CLAMP,
        logodds: Optional[np.ndarray] = None,
    ):
        if not clamp > 0:
            raise ConfigurationError(f"must be > 0, got {clamp}", key="clamp")
        self.geometry = geometry
        self.clamp = clamp
        if logodds is None:
            if not 0.0 < prior < 1.0:
                raise ConfigurationError(f"must lie in (0, 1), got {prior}", key="prior")
            logodds = np.full(geometry.shape, logit(prior), dtype=float)
        elif logodds.shape != geometry.shape:
            raise ConfigurationError(
                f"log-odds shape {logodds.shape} does not match grid {geometry.shape}",
                key="logodds",
            )
        self.logodds = np.clip(np.asarray(logodds, dtype=float), -clamp, clamp)

    @classmethod
    def from_probabilities(
        cls,
        geometry: GridGeometry,
        probabilities: np.ndarray,
        clamp: float = LOGODDS_CLAMP,
    ) -> "OccupancyGrid":
        probabilities = np.asarray(probabilities, dtype=float).reshape(geometry.shape)
        return cls(geometry, clamp=clamp, logodds=logit(probabilities))

    @property
    def probabilities(self) -> np.ndarray:
        return sigmoid(self.logodds)

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.geometry, clamp=self.clamp, logodds=self.logodds.copy())

    def probability(self, cell: Cell) -> float:
        self._check_cell(cell)
        return sigmoid(self.logodds[cell])

    def fuse_observation(self, cell: Cell, p_obs: float) -> "OccupancyGrid":
        """Add ``logit(p_obs)`` to one cell's log-odds and clamp. Mutates and returns self."""
        self._check_cell(cell)
        if not 0.0 < p_obs < 1.0:
            raise InvalidObservationError(f"p_obs must lie in (0, 1), got {p_obs}")
        value = self.logodds[cell] + logit(p_obs)
        self.logodds[cell] = min(max(value, -self.clamp), self.clamp)
        return self

    def fuse(self, observation: Observation) -> "OccupancyGrid":
        """Fuse a whole footprint observation in one vectorised update."""
        if len(observation) == 0:
            return self
        p_obs = observation.p_obs
        if np.any(p_obs <= 0.0) or np.any(p_obs >= 1.0):
            raise InvalidObservationError("p_obs must lie in (0, 1) for every observed cell")
        block = self.logodds[observation.rows, observation.cols]
        self.logodds[observation.rows, observation.cols] = np.clip(
            block + logit(p_obs), -self.clamp, self.clamp
        )
        return self

    def _check_cell(self, cell: Cell) -> None:
        if not self.geometry.in_bounds(cell):
            raise GridIndexError(f"cell {cell} outside grid of shape {self.geometry.shape}")


def binary_entropy(p) -> np.ndarray:
    """Elementwise Bernoulli entropy in bits, with 0*log2(0) taken as 0."""
    p = np.asarray(p, dtype=float)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log2(p), 0.0) - np.where(q > 0, q * np.log2(q), 0.0)
    return h


def cell_entropy(p: float) -> float:
    """Entropy in bits of one Bernoulli cell."""
    return float(binary_entropy(p))


def map_entropy(grid: OccupancyGrid) -> float:
    """Sum of the independent cell entropies."""
    return float(binary_entropy(grid.probabilities).sum())


def unclassified_mask(probabilities: np.ndarray, thr: ClassificationThresholds) -> np.ndarray:
    return (probabilities > thr.delta_nw) & (probabilities < thr.delta_w)


def unclassified_count(grid: OccupancyGrid, thr: ClassificationThresholds) -> int:
    return int(np.count_nonzero(unclassified_mask(grid.probabilities, thr)))


def unclassified_set(grid: OccupancyGrid, thr: ClassificationThresholds) -> Set[Cell]:
    """Cells with delta_nw < p < delta_w (strict on both sides)."""
    rows, cols = np.nonzero(unclassified_mask(grid.probabilities, thr))
    return {(int(r), int(c)) for r, c in zip(rows, cols)}


def generate_ground_truth(
    geometry: GridGeometry,
    weed_count: int,
    rng_seed: Union[int, np.random.SeedSequence],
) -> GroundTruthMap:
    """
    Scatter a fixed number of weeds uniformly over distinct cells.

    Given the count, a homogeneous spatial Poisson process places points
    uniformly, so cells are drawn without replacement.

    Raises:
        ConfigurationError: If weed_count is negative or exceeds the cell count
    """
    if weed_count < 0 or weed_count > geometry.cell_count:
        raise ConfigurationError(
            f"{weed_count} weeds do not fit in {geometry.cell_count} cells", key="weed_count"
        )
    rng = np.random.default_rng(rng_seed)
    occupied = np.zeros(geometry.cell_count, dtype=bool)
    occupied[rng.choice(geometry.cell_count, size=weed_count, replace=False)] = True
    logger.debug("Generated ground truth with %d weeds", weed_count)
    return GroundTruthMap(geometry=geometry, occupied=occupied.reshape(geometry.shape))
