"""
ABOUTME: Exception hierarchy for the weed-map path planner
ABOUTME: Domain errors also subclass the matching builtin so callers may catch either
"""

from typing import Optional


class IppError(Exception):
    """Base class for all planner errors."""


class ConfigurationError(IppError, ValueError):
    """Invalid parameter or scenario configuration value."""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        if key:
            message = f"{key}: {message}"
        super().__init__(message)


class GridIndexError(IppError, IndexError):
    """Cell index outside the map."""


class InvalidObservationError(IppError, ValueError):
    """Observation probability outside the open interval (0, 1)."""


class InvalidStateError(IppError, ValueError):
    """Physically meaningless UAV state, e.g. non-positive altitude."""


class DegenerateSegmentError(IppError, ValueError):
    """Two consecutive waypoints coincide."""


class IllConditionedError(IppError, ArithmeticError):
    """The minimum-snap normal matrix could not be solved reliably."""

    def __init__(self, message: str, segment_index: int):
        self.segment_index = segment_index
        super().__init__(f"{message} (segment {segment_index})")


class InfeasibleTrajectoryError(IppError, RuntimeError):
    """Time scaling did not bring the path within its dynamic limits."""
