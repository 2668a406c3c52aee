"""
ABOUTME: Per-trial mapping metrics and the record of one mission
ABOUTME: Map entropy, classification rate and weed F1-score at each measurement event
"""

import logging
from dataclasses import dataclass, field
from typing import Any, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from .errors import ConfigurationError
from .grid import (
    ClassificationThresholds,
    GroundTruthMap,
    OccupancyGrid,
    map_entropy,
    unclassified_count,
)

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("entropy_bits", "classification_rate", "f1")


class ConfusionCounts(NamedTuple):
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass(frozen=True)
class MetricEvent:
    t_s: float
    entropy_bits: float
    classification_rate: float
    f1: float


@dataclass
class TrialRecord:
    """
    Metric time series of one mission.

    The first event is the state before any measurement at t = 0; each later
    event follows one executed measurement. ``flown_path`` lists the
    measurement positions in execution order.
    """
    seed: int
    config_digest: str = ""
    planner: str = "adaptive"
    events: List[MetricEvent] = field(default_factory=list)
    flown_path: List[Tuple[float, float, float]] = field(default_factory=list)
    # executed PolynomialSegments in flight order
    segments: List[Any] = field(default_factory=list, repr=False, compare=False)

    @property
    def final(self) -> Optional[MetricEvent]:
        return self.events[-1] if self.events else None

    @property
    def n_measurements(self) -> int:
        return max(len(self.events) - 1, 0)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(e.t_s, e.entropy_bits, e.classification_rate, e.f1) for e in self.events],
            columns=["t_s", *METRIC_COLUMNS],
        )


def classification_rate(belief: OccupancyGrid, thr: ClassificationThresholds) -> float:
    """Fraction of cells outside the unclassified set."""
    total = belief.geometry.cell_count
    return (total - unclassified_count(belief, thr)) / total


def confusion_counts(
    belief: OccupancyGrid, truth: GroundTruthMap, thr: ClassificationThresholds
) -> ConfusionCounts:
    """
    Weed-class confusion counts; a cell is predicted weed iff p >= delta_w.

    Raises:
        ConfigurationError: If belief and truth cover different grids
    """
    if belief.geometry != truth.geometry:
        raise ConfigurationError(
            f"belief grid {belief.geometry} does not match truth grid {truth.geometry}",
            key="geometry",
        )
    predicted = belief.probabilities >= thr.delta_w
    actual = truth.occupied
    tp = int(np.count_nonzero(predicted & actual))
    fp = int(np.count_nonzero(predicted & ~actual))
    fn = int(np.count_nonzero(~predicted & actual))
    tn = int(np.count_nonzero(~predicted & ~actual))
    return ConfusionCounts(tp, fp, fn, tn)


def f1_score(belief: OccupancyGrid, truth: GroundTruthMap, thr: ClassificationThresholds) -> float:
    """Harmonic mean of weed precision and recall; 0 when both are 0."""
    counts = confusion_counts(belief, truth, thr)
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def measure(
    t_s: float,
    belief: OccupancyGrid,
    truth: GroundTruthMap,
    thr: ClassificationThresholds,
) -> MetricEvent:
    return MetricEvent(
        t_s=float(t_s),
        entropy_bits=map_entropy(belief),
        classification_rate=classification_rate(belief, thr),
        f1=f1_score(belief, truth, thr),
    )
