"""
ABOUTME: Shared plumbing for missions and experiments
ABOUTME: Trial progress bars, timed operations with memory stats, atomic writes and the planner event stream
"""

import json
import logging
import os
import tempfile
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

import numpy as np
import psutil
from tqdm import tqdm

logger = logging.getLogger(__name__)


@dataclass
class MemoryStats:
    """Process memory snapshot."""
    current_mb: float
    peak_mb: float
    available_mb: float
    percent_used: float


_peak_rss_mb = 0.0


def monitor_memory() -> MemoryStats:
    """
    Current resident memory of this process plus system availability.

    Example:
        stats = monitor_memory()
        if stats.percent_used > 80:
            logger.warning("High memory usage: %.1f%%", stats.percent_used)
    """
    global _peak_rss_mb
    current_mb = psutil.Process().memory_info().rss / 1024 / 1024
    virtual_memory = psutil.virtual_memory()
    _peak_rss_mb = max(_peak_rss_mb, current_mb)
    return MemoryStats(
        current_mb=current_mb,
        peak_mb=_peak_rss_mb,
        available_mb=virtual_memory.available / 1024 / 1024,
        percent_used=virtual_memory.percent,
    )


class ProgressTracker:
    """tqdm progress bar over trials, usable as a context manager."""

    def __init__(
        self,
        total: int,
        description: str = "Trials",
        unit: str = "trial",
        disable: bool = False,
    ):
        self.total = total
        self.description = description
        self.unit = unit
        self.disable = disable
        self._pbar: Optional[tqdm] = None

    def __enter__(self):
        self._pbar = tqdm(
            total=self.total,
            desc=self.description,
            unit=self.unit,
            disable=self.disable,
            bar_format="{l_bar}{bar}| {n_fmt}/{total_fmt} [{elapsed}<{remaining}]",
        )
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self._pbar:
            self._pbar.close()
        return False

    def update(self, n: int = 1, description: Optional[str] = None):
        if self._pbar:
            if description:
                self._pbar.set_description(description)
            self._pbar.update(n)

    def set_postfix(self, **kwargs):
        """Show running values next to the bar, e.g. ``seed=7``."""
        if self._pbar:
            self._pbar.set_postfix(**kwargs)


def track_progress(
    total: int,
    description: str = "Trials",
    unit: str = "trial",
    disable: bool = False,
) -> ProgressTracker:
    """
    Create a progress tracker context manager.

    Args:
        total: Number of items expected
        description: Text shown left of the bar
        unit: Item unit name
        disable: Suppress the bar entirely (quiet mode)

    Returns:
        ProgressTracker for use in a ``with`` statement

    Example:
        with track_progress(20, "adaptive") as progress:
            for seed in seeds:
                run_trial(seed)
                progress.update(1)
    """
    return ProgressTracker(total, description, unit, disable)


@dataclass
class OperationMetrics:
    """Timing and memory figures for one logged operation."""
    operation_name: str
    start_time: float
    end_time: Optional[float] = None
    duration_seconds: Optional[float] = None
    memory_start_mb: Optional[float] = None
    memory_end_mb: Optional[float] = None
    memory_peak_mb: Optional[float] = None
    items_processed: int = 0
    success: bool = False


class OperationLogger:
    """Context manager logging how long an operation took and how much memory it used."""

    def __init__(self, operation_name: str, log_memory: bool = True):
        self.metrics = OperationMetrics(operation_name=operation_name, start_time=time.monotonic())
        self.log_memory = log_memory
        if self.log_memory:
            self.metrics.memory_start_mb = monitor_memory().current_mb

    def __enter__(self) -> OperationMetrics:
        logger.info("Starting operation: %s", self.metrics.operation_name)
        return self.metrics

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.metrics.end_time = time.monotonic()
        self.metrics.duration_seconds = self.metrics.end_time - self.metrics.start_time
        if self.log_memory:
            stats = monitor_memory()
            self.metrics.memory_end_mb = stats.current_mb
            self.metrics.memory_peak_mb = stats.peak_mb
        self.metrics.success = exc_type is None

        if self.metrics.success:
            logger.info(
                "Completed operation: %s (duration: %s, items: %d)",
                self.metrics.operation_name,
                format_duration(self.metrics.duration_seconds),
                self.metrics.items_processed,
            )
            if self.log_memory:
                logger.info(
                    "Memory usage: start=%.1fMB, end=%.1fMB, peak=%.1fMB",
                    self.metrics.memory_start_mb or 0,
                    self.metrics.memory_end_mb or 0,
                    self.metrics.memory_peak_mb or 0,
                )
        else:
            logger.error(
                "Failed operation: %s (duration: %s, error: %s)",
                self.metrics.operation_name,
                format_duration(self.metrics.duration_seconds),
                exc_type.__name__ if exc_type else "Unknown",
            )
        return False


def log_operation(operation_name: str, log_memory: bool = True) -> OperationLogger:
    """
    Create an operation logger context manager.

    Example:
        with log_operation("experiment adaptive") as metrics:
            records = run_trials()
            metrics.items_processed = len(records)
    """
    return OperationLogger(operation_name, log_memory)


def format_duration(seconds: float) -> str:
    """Human-readable duration, e.g. ``"2m 30s"``."""
    if seconds < 60:
        return f"{seconds:.1f}s"
    minutes = int(seconds // 60)
    remaining_seconds = seconds % 60
    if minutes < 60:
        return f"{minutes}m {remaining_seconds:.0f}s"
    hours = minutes // 60
    return f"{hours}h {minutes % 60}m"


def ensure_directory(path: Union[str, Path]) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


@contextmanager
def atomic_write(path: Union[str, Path], mode: str = "w", **kwargs) -> Iterator[Any]:
    """
    Open a temporary sibling of ``path`` and move it into place on success.

    Readers never see a half-written file; on error the temporary file is
    removed and ``path`` is left as it was.

    Example:
        with atomic_write(out_dir / "summary.csv", newline="") as fh:
            frame.to_csv(fh, index=False)
    """
    path = Path(path)
    ensure_directory(path.parent)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    with atomic_write(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return Path(path)


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (tuple, list)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


class EventRecorder:
    """
    In-memory planner decision stream.

    Events are plain dicts with a ``kind`` key and no wall-clock fields, so
    two runs with the same seeds produce identical streams.
    """

    def __init__(self):
        self.events: List[Dict[str, Any]] = []

    def __len__(self) -> int:
        return len(self.events)

    def record(self, kind: str, **payload: Any) -> None:
        event = {"kind": kind}
        event.update({k: _jsonable(v) for k, v in payload.items()})
        self.events.append(event)

    def of_kind(self, kind: str) -> List[Dict[str, Any]]:
        return [e for e in self.events if e["kind"] == kind]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)

    def write_jsonl(self, path: Union[str, Path]) -> Path:
        return atomic_write_text(path, self.to_jsonl())
