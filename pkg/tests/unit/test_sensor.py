"""
ABOUTME: Unit tests for the sensor module
ABOUTME: Tests the accuracy curve, footprint geometry, noisy observations and ML predictions
"""

import math

import numpy as np
import pytest

from src.errors import ConfigurationError, InvalidStateError
from src.grid import GridGeometry, OccupancyGrid, generate_ground_truth
from src.sensor import (
    SensorModel,
    accuracy_at,
    footprint_at,
    footprint_window,
    observe,
    simulate_ml_observation,
)


class TestAccuracy:
    """Tests for accuracy_at."""

    def setup_method(self):
        self.model = SensorModel()

    def test_ceiling_at_and_below_h_min(self):
        assert accuracy_at(self.model, 2.0) == 0.95
        assert accuracy_at(self.model, 0.5) == 0.95

    def test_floor_at_and_above_h_max(self):
        assert accuracy_at(self.model, 45.0) == 0.5
        assert accuracy_at(self.model, 120.0) == 0.5

    def test_linear_in_between(self):
        assert accuracy_at(self.model, 23.5) == pytest.approx(0.725)

    def test_monotone_non_increasing(self):
        values = [accuracy_at(self.model, h) for h in np.linspace(0.5, 60.0, 200)]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_non_positive_altitude_rejected(self):
        with pytest.raises(InvalidStateError):
            accuracy_at(self.model, 0.0)


class TestSensorModel:
    """Tests for SensorModel validation and footprint size."""

    def test_footprint_side_at_default_half_angle(self):
        assert SensorModel().footprint_side(10.0) == pytest.approx(20.0)

    def test_narrow_camera(self):
        model = SensorModel(half_angle_rad=math.radians(30.0))
        assert model.footprint_side(10.0) == pytest.approx(20.0 * math.tan(math.radians(30.0)))

    def test_floor_above_ceiling_rejected(self):
        with pytest.raises(ConfigurationError) as exc:
            SensorModel(accuracy_floor=0.9, accuracy_ceiling=0.8)
        assert exc.value.key == "accuracy_ceiling"

    def test_perfect_ceiling_rejected(self):
        with pytest.raises(ConfigurationError) as exc:
            SensorModel(accuracy_ceiling=1.0)
        assert exc.value.key == "accuracy_ceiling"
        assert SensorModel(accuracy_ceiling=0.999).accuracy_ceiling == 0.999

    def test_bad_half_angle_rejected(self):
        with pytest.raises(ConfigurationError):
            SensorModel(half_angle_rad=math.pi / 2)


class TestFootprint:
    """Tests for footprint_at and footprint_window."""

    def test_footprint_centred_under_pose(self):
        footprint = footprint_at(SensorModel(), (12.0, 30.0, 5.0))
        assert footprint.center == (12.0, 30.0)
        assert footprint.side_m == pytest.approx(10.0)

    def test_window_of_twenty_metre_footprint(self):
        rows, cols = footprint_window(SensorModel(), GridGeometry(), (25.0, 25.0, 10.0))
        assert (rows.start, rows.stop) == (15, 35)
        assert (cols.start, cols.stop) == (15, 35)


class TestObserve:
    """Tests for noisy observations of the ground truth."""

    def setup_method(self):
        self.model = SensorModel()
        self.truth = generate_ground_truth(GridGeometry(), 120, 3)

    def test_reports_only_accuracy_or_its_complement(self):
        rng = np.random.default_rng(0)
        obs = observe(self.model, self.truth, (25.0, 25.0, 20.0), rng)
        a = accuracy_at(self.model, 20.0)
        assert len(obs) == 40 * 40
        assert set(np.unique(obs.p_obs)) <= {a, 1.0 - a}

    def test_label_error_rate_matches_accuracy(self):
        rng = np.random.default_rng(1)
        position = (25.0, 25.0, 2.0)
        rows, cols = footprint_window(self.model, self.truth.geometry, position)
        occupied = self.truth.occupied[rows, cols]
        correct = 0
        total = 0
        for _ in range(1000):
            obs = observe(self.model, self.truth, position, rng)
            says_weed = obs.p_obs > 0.5
            correct += int(np.count_nonzero(says_weed == occupied))
            total += obs.p_obs.size
        assert total == 16000
        assert correct / total == pytest.approx(0.95, abs=0.01)

    def test_same_generator_state_same_observation(self):
        a = observe(self.model, self.truth, (10.0, 40.0, 6.0), np.random.default_rng(4))
        b = observe(self.model, self.truth, (10.0, 40.0, 6.0), np.random.default_rng(4))
        np.testing.assert_array_equal(a.p_obs, b.p_obs)

    def test_footprint_off_map_is_empty(self):
        obs = observe(self.model, self.truth, (500.0, 500.0, 5.0), np.random.default_rng(0))
        assert len(obs) == 0


class TestMaximumLikelihoodObservation:
    """Tests for simulate_ml_observation."""

    def test_labels_follow_belief_with_ties_to_weed(self):
        geometry = GridGeometry(width_m=3, height_m=1)
        belief = OccupancyGrid.from_probabilities(geometry, np.array([[0.6, 0.5, 0.4]]))
        model = SensorModel()
        obs = simulate_ml_observation(model, belief, (1.5, 0.5, 2.0))
        np.testing.assert_allclose(obs.p_obs, [[0.95, 0.95, 0.05]])

    def test_is_deterministic_and_does_not_touch_belief(self):
        belief = OccupancyGrid(GridGeometry())
        before = belief.logodds.copy()
        a = simulate_ml_observation(SensorModel(), belief, (20.0, 20.0, 8.0))
        b = simulate_ml_observation(SensorModel(), belief, (20.0, 20.0, 8.0))
        np.testing.assert_array_equal(a.p_obs, b.p_obs)
        np.testing.assert_array_equal(belief.logodds, before)
