"""
ABOUTME: Monte Carlo experiment runner and metric aggregation over trials
ABOUTME: Seeded trials, carry-forward time series, confidence bounds, entropy CDF tables and paired comparisons
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import ScenarioConfig
from .main import TrialOutcome, simulate_trial
from .metrics import (
    METRIC_COLUMNS,
    MetricEvent,
    TrialRecord,
    classification_rate,
    confusion_counts,
    f1_score,
)
from .utils import log_operation, track_progress

logger = logging.getLogger(__name__)

__all__ = [
    "AggregateSeries",
    "ExperimentResult",
    "MetricEvent",
    "TrialRecord",
    "aggregate",
    "classification_rate",
    "confusion_counts",
    "empirical_cdf",
    "entropy_cdf",
    "f1_score",
    "paired_deltas",
    "run_experiment",
    "run_sweep",
    "step_values",
    "summary_table",
    "time_grid",
    "time_to_reach",
]

CDF_QUANTILES = (0.025, 0.1, 0.25, 0.5, 0.75, 0.9, 0.975)
Z_95 = 1.96

# variant name -> section overrides, all with paired seeds
SWEEPS: Dict[str, Dict[str, Dict[str, dict]]] = {
    "objectives": {
        "info": {"planner": {"objective_mode": "info", "optimizer_mode": "local"}},
        "classify": {"planner": {"objective_mode": "classify", "optimizer_mode": "local"}},
        "time_varying": {"planner": {"objective_mode": "time_varying", "optimizer_mode": "local"}},
    },
    "optimizers": {
        "none": {"planner": {"objective_mode": "time_varying", "optimizer_mode": "none"}},
        "local": {"planner": {"objective_mode": "time_varying", "optimizer_mode": "local"}},
        "global": {"planner": {"objective_mode": "time_varying", "optimizer_mode": "global"}},
    },
}


@dataclass
class AggregateSeries:
    """Per-bin mean and normal-approximation 95% bounds of one metric."""
    metric: str
    time_bins: np.ndarray
    mean: np.ndarray
    ci95_low: np.ndarray
    ci95_high: np.ndarray
    n_trials: int

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t_s": self.time_bins,
            "mean": self.mean,
            "ci95_low": self.ci95_low,
            "ci95_high": self.ci95_high,
            "n_trials": self.n_trials,
        })


@dataclass
class ExperimentResult:
    planner: str
    records: List[TrialRecord]
    aggregates: Dict[str, AggregateSeries]
    cdf: pd.DataFrame
    events: Dict[int, List[dict]] = field(default_factory=dict)

    @property
    def seeds(self) -> List[int]:
        return [r.seed for r in self.records]


def time_grid(budget_s: float, bin_s: float = 1.0) -> np.ndarray:
    """Uniform bins 0, bin, 2 bin, ... up to the budget."""
    n = int(math.floor(budget_s / bin_s + 1e-9))
    return np.arange(n + 1) * bin_s


def step_values(record: TrialRecord, metric: str, time_bins: Sequence[float]) -> np.ndarray:
    """
    Metric value at each bin, carried forward from the latest event at or before it.

    Bins before the first event take the first event's value.
    """
    if metric not in METRIC_COLUMNS:
        raise KeyError(f"unknown metric {metric!r}; expected one of {METRIC_COLUMNS}")
    times = np.array([e.t_s for e in record.events])
    values = np.array([getattr(e, metric) for e in record.events])
    index = np.searchsorted(times, np.asarray(time_bins, dtype=float), side="right") - 1
    return values[np.clip(index, 0, len(values) - 1)]


def _value_matrix(records: Sequence[TrialRecord], metric: str, time_bins) -> np.ndarray:
    return np.vstack([step_values(r, metric, time_bins) for r in records])


def aggregate(
    records: Sequence[TrialRecord], metric: str, time_bins: Sequence[float]
) -> AggregateSeries:
    """
    Mean and 95% bounds across trials per bin.

    Bounds are ``mean +/- 1.96 * sd / sqrt(n)`` with the sample standard
    deviation; a single trial has zero width.
    """
    if not records:
        raise ValueError("need at least one trial record")
    time_bins = np.asarray(time_bins, dtype=float)
    values = _value_matrix(records, metric, time_bins)
    n = values.shape[0]
    mean = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
    half = Z_95 * sd / math.sqrt(n)
    return AggregateSeries(metric, time_bins, mean, mean - half, mean + half, n)


def empirical_cdf(values: Sequence[float], x: float) -> float:
    """Fraction of ``values`` at or below ``x``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empirical CDF of an empty sample")
    return float(np.count_nonzero(values <= x) / values.size)


def entropy_cdf(
    records: Sequence[TrialRecord],
    time_bins: Sequence[float],
    quantiles: Sequence[float] = CDF_QUANTILES,
) -> pd.DataFrame:
    """
    Quantiles of the trial entropies at each time bin.

    Each row holds the inverse empirical CDF (linear interpolation between
    order statistics) of the carried-forward entropies at that bin.
    """
    if not records:
        raise ValueError("need at least one trial record")
    time_bins = np.asarray(time_bins, dtype=float)
    values = _value_matrix(records, "entropy_bits", time_bins)
    table = np.quantile(values, list(quantiles), axis=0, method="linear")
    frame = pd.DataFrame({"t_s": time_bins})
    for q, row in zip(quantiles, table):
        frame[f"q{q:g}"] = row
    return frame


def time_to_reach(record: TrialRecord, metric: str, threshold: float) -> Optional[float]:
    """Time of the first event whose ``metric`` is at least ``threshold``, or None."""
    for event in record.events:
        if getattr(event, metric) >= threshold:
            return event.t_s
    return None


def _trial_job(args: Tuple[ScenarioConfig, str, int, bool]) -> TrialOutcome:
    scenario, planner, seed, record_events = args
    outcome = simulate_trial(scenario, planner, seed, record_events=record_events)
    return outcome


def run_experiment(
    scenario: ScenarioConfig,
    planner: str = "adaptive",
    n_trials: Optional[int] = None,
    jobs: Optional[int] = None,
    base_seed: Optional[int] = None,
    record_events: bool = False,
    show_progress: bool = True,
) -> ExperimentResult:
    """
    Run seeded trials of one planner and aggregate their metrics.

    Trial ``k`` uses seed ``base_seed + k``. With ``jobs > 1`` trials run in
    worker processes; results are ordered by seed before aggregation so the
    output does not depend on ``jobs``.

    Args:
        scenario: Validated scenario
        planner: ``"adaptive"`` or ``"lawnmower"``
        n_trials: Overrides ``scenario.experiment.n_trials``
        jobs: Overrides ``scenario.experiment.jobs``
        base_seed: Overrides ``scenario.experiment.base_seed``
        record_events: Keep each trial's decision stream
        show_progress: Show a tqdm bar

    Returns:
        ExperimentResult with records, per-metric aggregates and the entropy CDF table
    """
    n_trials = n_trials if n_trials is not None else scenario.experiment.n_trials
    jobs = jobs if jobs is not None else scenario.experiment.jobs
    base_seed = base_seed if base_seed is not None else scenario.experiment.base_seed
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")

    seeds = [base_seed + k for k in range(n_trials)]
    tasks = [(scenario, planner, seed, record_events) for seed in seeds]
    outcomes: List[TrialOutcome] = []

    with log_operation(f"experiment {scenario.name}/{planner}") as metrics:
        with track_progress(n_trials, planner, disable=not show_progress) as progress:
            if jobs > 1:
                with ProcessPoolExecutor(max_workers=jobs) as pool:
                    for outcome in pool.map(_trial_job, tasks):
                        outcomes.append(outcome)
                        progress.update(1)
            else:
                for task in tasks:
                    outcomes.append(_trial_job(task))
                    progress.set_postfix(seed=task[2])
                    progress.update(1)
        metrics.items_processed = len(outcomes)

    outcomes.sort(key=lambda o: o.record.seed)
    records = [o.record for o in outcomes]
    bins = time_grid(scenario.planner.budget_s, scenario.experiment.time_bin_s)
    return ExperimentResult(
        planner=planner,
        records=records,
        aggregates={m: aggregate(records, m, bins) for m in METRIC_COLUMNS},
        cdf=entropy_cdf(records, bins),
        events={o.record.seed: o.events for o in outcomes} if record_events else {},
    )


def paired_deltas(
    first: Sequence[TrialRecord], second: Sequence[TrialRecord], metric: str = "entropy_bits"
) -> pd.DataFrame:
    """
    Per-seed final-value differences ``first - second`` over the shared seeds.

    The frame carries the mean delta and its 95% interval as attributes
    ``mean``, ``ci95_low`` and ``ci95_high``.
    """
    a = {r.seed: getattr(r.final, metric) for r in first}
    b = {r.seed: getattr(r.final, metric) for r in second}
    seeds = sorted(set(a) & set(b))
    frame = pd.DataFrame({
        "seed": seeds,
        "first": [a[s] for s in seeds],
        "second": [b[s] for s in seeds],
    })
    frame["delta"] = frame["first"] - frame["second"]
    n = len(frame)
    mean = float(frame["delta"].mean()) if n else math.nan
    sd = float(frame["delta"].std(ddof=1)) if n > 1 else 0.0
    half = Z_95 * sd / math.sqrt(n) if n else math.nan
    frame.attrs.update(mean=mean, ci95_low=mean - half, ci95_high=mean + half)
    return frame


def summary_table(
    results: Dict[str, ExperimentResult], reach_rate: float = 0.5
) -> pd.DataFrame:
    """
    One row per planner or variant with final metric means.

    ``time_to_cr`` averages the time to reach ``reach_rate`` classification
    over the trials that reached it; ``n_unreached`` counts the others.
    """
    rows = []
    for name, result in results.items():
        finals = [r.final for r in result.records]
        initial = np.array([r.events[0].entropy_bits for r in result.records])
        entropy = np.array([f.entropy_bits for f in finals])
        reached = [
            t for t in (time_to_reach(r, "classification_rate", reach_rate) for r in result.records)
            if t is not None
        ]
        n = len(finals)
        sd = float(entropy.std(ddof=1)) if n > 1 else 0.0
        rows.append({
            "planner": name,
            "n_trials": n,
            "final_entropy_mean": float(entropy.mean()),
            "final_entropy_ci95": Z_95 * sd / math.sqrt(n),
            "final_entropy_fraction": float(np.mean(entropy / initial)),
            "final_classification_rate": float(np.mean([f.classification_rate for f in finals])),
            "final_f1": float(np.mean([f.f1 for f in finals])),
            "time_to_cr": float(np.mean(reached)) if reached else math.nan,
            "n_unreached": n - len(reached),
        })
    return pd.DataFrame(rows)


def run_sweep(
    scenario: ScenarioConfig,
    kind: str,
    n_trials: Optional[int] = None,
    jobs: Optional[int] = None,
    base_seed: Optional[int] = None,
    show_progress: bool = True,
    on_variant: Optional[Callable[[str, ScenarioConfig, ExperimentResult], None]] = None,
) -> Dict[str, ExperimentResult]:
    """
    Run the adaptive planner under each variant of an ablation with shared seeds.

    Args:
        scenario: Base scenario
        kind: ``"objectives"`` or ``"optimizers"``
        on_variant: Called after each variant finishes, e.g. to write its outputs

    Raises:
        KeyError: If ``kind`` is not a known sweep
    """
    if kind not in SWEEPS:
        raise KeyError(f"unknown sweep {kind!r}; expected one of {sorted(SWEEPS)}")
    results: Dict[str, ExperimentResult] = {}
    for variant, overrides in SWEEPS[kind].items():
        variant_scenario = scenario.with_overrides(name=f"{scenario.name}-{variant}", **overrides)
        result = run_experiment(
            variant_scenario, "adaptive", n_trials=n_trials, jobs=jobs, base_seed=base_seed,
            show_progress=show_progress,
        )
        results[variant] = result
        if on_variant is not None:
            on_variant(variant, variant_scenario, result)
    return results
