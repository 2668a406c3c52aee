"""
ABOUTME: End-to-end integration tests for weed-ipp
ABOUTME: Tests complete missions, paired comparisons and reproducible experiment runs
"""

import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pytest

from src.config import ScenarioConfig, load_config
from src.harness import paired_deltas, run_experiment, summary_table
from src.main import simulate_trial
from src.metrics import METRIC_COLUMNS
from src.reporting import write_experiment_outputs
from src.trajectory import MIN_LEG_M

SMOKE = Path(__file__).resolve().parents[2] / "scenarios" / "smoke.toml"


@pytest.mark.integration
class TestEndToEndWorkflow(unittest.TestCase):
    """Test complete mission workflows on the smoke scenario."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.scenario = load_config(SMOKE)

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_adaptive_mission_with_refinement(self):
        """Local CMA-ES refinement runs inside a real mission."""
        outcome = simulate_trial(self.scenario, "adaptive", seed=1, record_events=True)
        record = outcome.record
        assert record.n_measurements >= 1
        assert record.final.t_s <= self.scenario.planner.budget_s
        assert record.final.entropy_bits < record.events[0].entropy_bits
        assert any(e["kind"] == "cmaes_generation" for e in outcome.events)
        times = [e.t_s for e in record.events]
        assert times == sorted(times)

    def test_lawnmower_flies_full_plan_with_large_budget(self):
        scenario = self.scenario.with_overrides(planner={"budget_s": 600.0}).validate()
        outcome = simulate_trial(scenario, "lawnmower", seed=1, keep_maps=True)
        # 10 m swath at 5 m over 20 m: two passes of two viewpoints
        assert outcome.record.n_measurements == 4
        assert outcome.record.final.t_s < 600.0

    def test_compare_on_paired_seeds(self):
        adaptive = run_experiment(self.scenario, "adaptive", show_progress=False)
        lawnmower = run_experiment(self.scenario, "lawnmower", show_progress=False)
        paired = paired_deltas(adaptive.records, lawnmower.records)
        assert paired["seed"].tolist() == [1, 2]
        summary = summary_table({"adaptive": adaptive, "lawnmower": lawnmower})
        assert summary["planner"].tolist() == ["adaptive", "lawnmower"]

    def test_jobs_do_not_change_results(self):
        serial = run_experiment(self.scenario, "adaptive", jobs=1, show_progress=False)
        parallel = run_experiment(self.scenario, "adaptive", jobs=2, show_progress=False)
        assert serial.records == parallel.records
        for metric in METRIC_COLUMNS:
            np.testing.assert_array_equal(serial.aggregates[metric].mean, parallel.aggregates[metric].mean)

    def test_outputs_written(self):
        result = run_experiment(self.scenario, "adaptive", record_events=True, show_progress=False)
        out = write_experiment_outputs(result, Path(self.temp_dir) / "adaptive")
        assert (out / "trial_1.csv").is_file()
        assert (out / "events_2.jsonl").is_file()
        assert (out / "plots" / "entropy_bits.svg").is_file()


@pytest.mark.integration
@pytest.mark.slow
class TestReferenceScenarioMissions(unittest.TestCase):
    """Missions on the reference scenario that once produced unflyable refined paths."""

    def test_classification_mission_with_local_refinement(self):
        scenario = ScenarioConfig().with_overrides(
            planner={"objective_mode": "classify", "optimizer_mode": "local"}
        ).validate()
        outcome = simulate_trial(scenario, "adaptive", seed=7, record_events=True)
        record = outcome.record
        assert record.n_measurements > 0
        assert all(e.t_s <= scenario.planner.budget_s for e in record.events)
        paths = [e for e in outcome.events if e["kind"] == "path"]
        assert paths
        for event in paths:
            legs = np.diff(np.array(event["waypoints"], dtype=float), axis=0)
            assert np.all(np.linalg.norm(legs, axis=1) >= MIN_LEG_M)
