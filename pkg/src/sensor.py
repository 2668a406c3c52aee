"""
ABOUTME: Down-looking camera model with altitude-dependent weed classification accuracy
ABOUTME: Produces noisy observations from ground truth and maximum-likelihood predictions from belief
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, InvalidStateError
from .grid import GridGeometry, GroundTruthMap, Observation, OccupancyGrid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SensorModel:
    """
    Square-footprint classifier whose accuracy decays linearly with altitude.

    Accuracy is ``accuracy_ceiling`` at or below ``h_min``, falls linearly to
    ``accuracy_floor`` at ``h_max`` and stays there above it. False-positive
    and false-negative rates are both ``1 - accuracy``.
    """
    half_angle_rad: float = math.radians(45.0)
    accuracy_floor: float = 0.5
    accuracy_ceiling: float = 0.95
    h_min: float = 2.0
    h_max: float = 45.0

    def __post_init__(self):
        if not 0.0 < self.half_angle_rad < math.pi / 2:
            raise ConfigurationError(
                f"must lie in (0, pi/2), got {self.half_angle_rad}", key="half_angle_rad"
            )
        if not 0.5 <= self.accuracy_floor < self.accuracy_ceiling < 1.0:
            raise ConfigurationError(
                "need 0.5 <= accuracy_floor < accuracy_ceiling < 1, got "
                f"{self.accuracy_floor} / {self.accuracy_ceiling}",
                key="accuracy_ceiling",
            )
        if not 0.0 < self.h_min < self.h_max:
            raise ConfigurationError(
                f"need 0 < h_min < h_max, got {self.h_min} / {self.h_max}", key="h_max"
            )

    def footprint_side(self, altitude: float) -> float:
        return 2.0 * altitude * math.tan(self.half_angle_rad)


@dataclass(frozen=True)
class Footprint:
    """Ground square seen from one camera pose."""
    center: Tuple[float, float]
    side_m: float


def accuracy_at(model: SensorModel, altitude: float) -> float:
    """
    Probability that a single cell is classified correctly from ``altitude``.

    Raises:
        InvalidStateError: If altitude is not strictly positive
    """
    if not altitude > 0:
        raise InvalidStateError(f"altitude must be > 0, got {altitude}")
    if altitude <= model.h_min:
        return model.accuracy_ceiling
    if altitude >= model.h_max:
        return model.accuracy_floor
    span = model.accuracy_ceiling - model.accuracy_floor
    return model.accuracy_floor + span * (model.h_max - altitude) / (model.h_max - model.h_min)


def footprint_at(model: SensorModel, position: Sequence[float]) -> Footprint:
    """Footprint centred under ``position`` (x, y, altitude)."""
    x, y, altitude = position
    if not altitude > 0:
        raise InvalidStateError(f"altitude must be > 0, got {altitude}")
    return Footprint(center=(float(x), float(y)), side_m=model.footprint_side(altitude))


def footprint_window(
    model: SensorModel, geometry: GridGeometry, position: Sequence[float]
) -> Tuple[slice, slice]:
    footprint = footprint_at(model, position)
    return geometry.square_window(footprint.center, footprint.side_m)


def observe(
    model: SensorModel,
    truth: GroundTruthMap,
    position: Sequence[float],
    rng: np.random.Generator,
) -> Observation:
    """
    Draw one noisy classification of every cell in the footprint.

    Each label is correct with probability ``a = accuracy_at(altitude)``
    and flipped otherwise; a weed label reports ``a``, a non-weed label
    ``1 - a``. A footprint entirely off the map yields an empty observation.
    """
    rows, cols = footprint_window(model, truth.geometry, position)
    a = accuracy_at(model, position[2])
    occupied = truth.occupied[rows, cols]
    correct = rng.random(occupied.shape) < a
    says_weed = np.where(correct, occupied, ~occupied)
    p_obs = np.where(says_weed, a, 1.0 - a)
    logger.debug("Observed %d cells at altitude %.2f m (accuracy %.3f)", p_obs.size, position[2], a)
    return Observation(rows=rows, cols=cols, p_obs=p_obs, altitude=float(position[2]))


def simulate_ml_observation(
    model: SensorModel,
    belief: OccupancyGrid,
    position: Sequence[float],
) -> Observation:
    """
    Predict the observation at ``position`` assuming each cell's most likely label.

    A cell is labelled weed iff p >= 0.5 (ties go to weed). Deterministic.
    """
    rows, cols = footprint_window(model, belief.geometry, position)
    a = accuracy_at(model, position[2])
    says_weed = belief.logodds[rows, cols] >= 0.0
    p_obs = np.where(says_weed, a, 1.0 - a)
    return Observation(rows=rows, cols=cols, p_obs=p_obs, altitude=float(position[2]))
