"""
ABOUTME: Fixed-altitude lawnmower coverage plan used as the comparison baseline
ABOUTME: Boustrophedon passes of discrete measurement viewpoints spaced by the sensor swath
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .grid import GridGeometry
from .sensor import SensorModel
from .trajectory import FlightEnvelope, Viewpoint, ViewpointKind

logger = logging.getLogger(__name__)


class CoverageDirection(str, Enum):
    ALONG_X = "along-x"
    ALONG_Y = "along-y"


@dataclass(frozen=True)
class CoverageConfig:
    altitude_m: float = 8.66
    overlap_frac: float = 0.0
    direction: CoverageDirection = CoverageDirection.ALONG_X

    def __post_init__(self):
        if not self.altitude_m > 0:
            raise ConfigurationError(f"must be > 0, got {self.altitude_m}", key="altitude_m")
        if not 0.0 <= self.overlap_frac < 1.0:
            raise ConfigurationError(
                f"must lie in [0, 1), got {self.overlap_frac}", key="overlap_frac"
            )
        try:
            object.__setattr__(self, "direction", CoverageDirection(self.direction))
        except ValueError:
            raise ConfigurationError(
                f"must be one of {[d.value for d in CoverageDirection]}, got {self.direction!r}",
                key="direction",
            )


def pass_positions(origin: float, extent: float, swath: float, spacing: float) -> np.ndarray:
    """
    Centre lines of parallel passes across one axis.

    The outer passes sit half a swath inside the edges; the rest are spread
    evenly, never further apart than ``spacing``. A swath as wide as the
    map gives one centred pass.
    """
    count = max(1, math.ceil(extent / spacing - 1e-9))
    if count == 1 or swath >= extent:
        return np.array([origin + extent / 2.0])
    return origin + np.linspace(swath / 2.0, extent - swath / 2.0, count)


def plan_coverage(
    geometry: GridGeometry,
    sensor: SensorModel,
    cfg: CoverageConfig,
    start: Optional[Sequence[float]] = None,
    envelope: Optional[FlightEnvelope] = None,
) -> List[Viewpoint]:
    """
    Boustrophedon measurement viewpoints at a fixed altitude.

    Passes and the viewpoints along them are spaced
    ``swath * (1 - overlap_frac)`` apart, so with overlap 0 the footprints
    cover every cell. Of the four mirror images of the pattern, the one
    whose first viewpoint is nearest ``start`` is returned.

    Args:
        geometry: Map extent
        sensor: Sensor model giving the swath at ``cfg.altitude_m``
        cfg: Altitude, overlap and pass direction
        start: UAV start position, defaults to the map origin corner
        envelope: If given, the altitude must lie inside it

    Returns:
        Ordered global viewpoints

    Raises:
        ConfigurationError: If the altitude is outside the envelope
    """
    if envelope is not None and not envelope.alt_min <= cfg.altitude_m <= envelope.alt_max:
        raise ConfigurationError(
            f"{cfg.altitude_m} m is outside [{envelope.alt_min}, {envelope.alt_max}]",
            key="altitude_m",
        )
    swath = sensor.footprint_side(cfg.altitude_m)
    spacing = swath * (1.0 - cfg.overlap_frac)
    ox, oy = geometry.origin
    xs = pass_positions(ox, geometry.width_m, swath, spacing)
    ys = pass_positions(oy, geometry.height_m, swath, spacing)

    # passes are lines of constant cross-track coordinate
    if cfg.direction is CoverageDirection.ALONG_X:
        cross, along = ys, xs
    else:
        cross, along = xs, ys

    start_xy = np.asarray(start[:2] if start is not None else (ox, oy), dtype=float)
    best: Optional[List[Viewpoint]] = None
    best_distance = math.inf
    for reverse_cross in (False, True):
        for reverse_along in (False, True):
            plan = _boustrophedon(cross, along, reverse_cross, reverse_along, cfg)
            distance = float(np.linalg.norm(np.asarray(plan[0].position[:2]) - start_xy))
            if distance < best_distance - 1e-12:
                best, best_distance = plan, distance

    logger.debug(
        "Lawnmower: %d passes x %d viewpoints at %.2f m (swath %.2f m)",
        len(cross), len(along), cfg.altitude_m, swath,
    )
    return best


def _boustrophedon(
    cross: np.ndarray,
    along: np.ndarray,
    reverse_cross: bool,
    reverse_along: bool,
    cfg: CoverageConfig,
) -> List[Viewpoint]:
    cross = cross[::-1] if reverse_cross else cross
    plan: List[Viewpoint] = []
    for i, c in enumerate(cross):
        forward = (i % 2 == 0) != reverse_along
        line = along if forward else along[::-1]
        for a in line:
            if cfg.direction is CoverageDirection.ALONG_X:
                xy = (float(a), float(c))
            else:
                xy = (float(c), float(a))
            plan.append(
                Viewpoint(position=(*xy, float(cfg.altitude_m)), kind=ViewpointKind.GLOBAL)
            )
    return plan


def coverage_length(plan: Sequence[Viewpoint]) -> float:
    """Straight-line length of the plan in metres."""
    if len(plan) < 2:
        return 0.0
    pts = np.array([v.position for v in plan], dtype=float)
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())
