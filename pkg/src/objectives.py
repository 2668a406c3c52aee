"""
ABOUTME: Viewpoint scoring objectives evaluated without touching the belief
ABOUTME: Entropy reduction and unclassified-set reduction under simulated ML measurements
"""

import logging
from enum import Enum
from typing import Sequence, Tuple

import numpy as np

from .grid import (
    ClassificationThresholds,
    OccupancyGrid,
    binary_entropy,
    logit,
    sigmoid,
    unclassified_mask,
)
from .sensor import SensorModel, simulate_ml_observation

logger = logging.getLogger(__name__)


class ObjectiveMode(str, Enum):
    INFO = "info"
    CLASSIFY = "classify"
    TIME_VARYING = "time_varying"


def simulate_measurement(
    belief: OccupancyGrid, sensor: SensorModel, candidate: Sequence[float]
) -> OccupancyGrid:
    """Fuse the simulated ML observation at ``candidate`` into ``belief`` in place."""
    return belief.fuse(simulate_ml_observation(sensor, belief, candidate))


def _window_posterior(
    belief: OccupancyGrid, sensor: SensorModel, candidate: Sequence[float]
) -> Tuple[np.ndarray, np.ndarray]:
    # fusion only changes the footprint window, so gains are local to it
    observation = simulate_ml_observation(sensor, belief, candidate)
    block = belief.logodds[observation.rows, observation.cols]
    before = np.asarray(sigmoid(block))
    if len(observation) == 0:
        return before, before
    after = sigmoid(np.clip(block + logit(observation.p_obs), -belief.clamp, belief.clamp))
    return before, np.asarray(after)


def info_gain(belief: OccupancyGrid, sensor: SensorModel, candidate: Sequence[float]) -> float:
    """Expected entropy reduction in bits from measuring at ``candidate``."""
    before, after = _window_posterior(belief, sensor, candidate)
    return float(binary_entropy(before).sum() - binary_entropy(after).sum())


def classify_gain(
    belief: OccupancyGrid,
    sensor: SensorModel,
    thr: ClassificationThresholds,
    candidate: Sequence[float],
) -> int:
    """Reduction in the number of unclassified cells from measuring at ``candidate``."""
    before, after = _window_posterior(belief, sensor, candidate)
    return int(unclassified_mask(before, thr).sum()) - int(unclassified_mask(after, thr).sum())


def objective_gain(
    objective: ObjectiveMode,
    belief: OccupancyGrid,
    sensor: SensorModel,
    thr: ClassificationThresholds,
    candidate: Sequence[float],
) -> float:
    """Gain under a fixed objective; ``time_varying`` must be resolved by the caller."""
    objective = ObjectiveMode(objective)
    if objective is ObjectiveMode.INFO:
        return info_gain(belief, sensor, candidate)
    if objective is ObjectiveMode.CLASSIFY:
        return float(classify_gain(belief, sensor, thr, candidate))
    raise ValueError("time_varying must be resolved to info or classify before scoring")
