"""
ABOUTME: Output writers for trials, aggregates, plots and map snapshots
ABOUTME: Every file is written atomically and carries no wall-clock content
"""

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from PIL import Image  # noqa: E402

from .config import ScenarioConfig  # noqa: E402
from .grid import GroundTruthMap, OccupancyGrid  # noqa: E402
from .harness import AggregateSeries, ExperimentResult  # noqa: E402
from .metrics import METRIC_COLUMNS, TrialRecord  # noqa: E402
from .trajectory import TrajectorySample  # noqa: E402
from .utils import EventRecorder, atomic_write, atomic_write_text, ensure_directory  # noqa: E402

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"
BELIEF_FLOAT_FORMAT = "%.6f"
METRIC_LABELS = {
    "entropy_bits": "Map entropy [bits]",
    "classification_rate": "Classification rate",
    "f1": "F1-score",
}

# fixed ids and no creation date keep SVG output byte-stable
plt.rcParams["svg.hashsalt"] = "weed-ipp"


def write_frame(
    frame: pd.DataFrame, path: Union[str, Path], float_format: str = FLOAT_FORMAT
) -> Path:
    with atomic_write(path, "w", encoding="utf-8", newline="") as fh:
        frame.to_csv(fh, index=False, float_format=float_format, lineterminator="\n")
    return Path(path)


def write_trial_csv(record: TrialRecord, path: Union[str, Path]) -> Path:
    """Columns: t_s, entropy_bits, classification_rate, f1."""
    return write_frame(record.to_frame(), path)


def write_aggregate_csv(series: AggregateSeries, path: Union[str, Path]) -> Path:
    """Columns: t_s, mean, ci95_low, ci95_high, n_trials."""
    return write_frame(series.to_frame(), path)


def write_samples_csv(samples: Sequence[TrajectorySample], path: Union[str, Path]) -> Path:
    """Columns: t, x, y, z, vx, vy, vz."""
    frame = pd.DataFrame(
        [(s.t, *s.position, *s.velocity) for s in samples],
        columns=["t", "x", "y", "z", "vx", "vy", "vz"],
    )
    return write_frame(frame, path)


def write_belief_csv(belief: OccupancyGrid, path: Union[str, Path]) -> Path:
    """Columns: row, col, x, y, p (one line per cell, row-major, six decimals)."""
    xs, ys = belief.geometry.cell_centers()
    rows, cols = np.indices(belief.geometry.shape)
    frame = pd.DataFrame({
        "row": rows.ravel(),
        "col": cols.ravel(),
        "x": xs[cols.ravel()],
        "y": ys[rows.ravel()],
        "p": belief.probabilities.ravel(),
    })
    return write_frame(frame, path, BELIEF_FLOAT_FORMAT)


def write_pgm(values: np.ndarray, path: Union[str, Path]) -> Path:
    """
    Greyscale snapshot of values in [0, 1], white meaning 1.

    Row 0 of the grid lies at the lowest y, so the image is flipped to put
    north at the top.
    """
    pixels = np.clip(np.round(np.asarray(values, dtype=float) * 255.0), 0, 255).astype(np.uint8)
    image = Image.fromarray(np.ascontiguousarray(np.flipud(pixels)))
    with atomic_write(path, "wb") as fh:
        image.save(fh, format="PPM")
    return Path(path)


def write_belief_pgm(belief: OccupancyGrid, path: Union[str, Path]) -> Path:
    return write_pgm(belief.probabilities, path)


def write_truth_pgm(truth: GroundTruthMap, path: Union[str, Path]) -> Path:
    return write_pgm(truth.occupied.astype(float), path)


def write_events(events: List[dict], path: Union[str, Path]) -> Path:
    recorder = EventRecorder()
    recorder.events = list(events)
    return recorder.write_jsonl(path)


def write_effective_config(scenario: ScenarioConfig, path: Union[str, Path]) -> Path:
    return atomic_write_text(path, scenario.to_toml())


def plot_metric(
    series: Dict[str, AggregateSeries], metric: str, path: Union[str, Path]
) -> Path:
    """Mean curve with shaded 95% bounds for each planner, as SVG."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    try:
        for name, s in series.items():
            line, = ax.plot(s.time_bins, s.mean, label=f"{name} (n={s.n_trials})", linewidth=1.5)
            ax.fill_between(s.time_bins, s.ci95_low, s.ci95_high, color=line.get_color(), alpha=0.2)
        ax.set_xlabel("Time [s]")
        ax.set_ylabel(METRIC_LABELS.get(metric, metric))
        ax.grid(True, alpha=0.3)
        ax.legend(loc="best")
        fig.tight_layout()
        with atomic_write(path, "wb") as fh:
            fig.savefig(fh, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return Path(path)


def write_experiment_outputs(
    result: ExperimentResult, out_dir: Union[str, Path], write_event_streams: bool = True
) -> Path:
    """
    Write one planner's trial, aggregate, CDF, plot and event files.

    Layout under ``out_dir``: ``trial_<seed>.csv``, ``aggregate_<metric>.csv``,
    ``cdf_entropy.csv``, ``plots/<metric>.svg`` and ``events_<seed>.jsonl``.
    """
    out_dir = ensure_directory(out_dir)
    for record in result.records:
        write_trial_csv(record, out_dir / f"trial_{record.seed}.csv")
    for metric in METRIC_COLUMNS:
        write_aggregate_csv(result.aggregates[metric], out_dir / f"aggregate_{metric}.csv")
        plot_metric({result.planner: result.aggregates[metric]}, metric,
                    out_dir / "plots" / f"{metric}.svg")
    write_frame(result.cdf, out_dir / "cdf_entropy.csv")
    if write_event_streams:
        for seed, events in result.events.items():
            write_events(events, out_dir / f"events_{seed}.jsonl")
    logger.info("Wrote %d trials for %s to %s", len(result.records), result.planner, out_dir)
    return out_dir


def write_comparison_outputs(
    results: Dict[str, ExperimentResult],
    summary: pd.DataFrame,
    out_dir: Union[str, Path],
    paired: pd.DataFrame = None,
) -> Path:
    """Side-by-side plots per metric, the summary table and optional paired deltas."""
    out_dir = ensure_directory(out_dir)
    for metric in METRIC_COLUMNS:
        plot_metric(
            {name: r.aggregates[metric] for name, r in results.items()},
            metric,
            out_dir / "plots" / f"compare_{metric}.svg",
        )
    write_frame(summary, out_dir / "summary.csv")
    if paired is not None:
        write_frame(paired, out_dir / "paired_final_entropy.csv")
    return out_dir
