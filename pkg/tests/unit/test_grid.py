"""
ABOUTME: Unit tests for the grid module
ABOUTME: Tests geometry, log-odds fusion against direct Bayes, entropy and ground truth generation
"""

import itertools

import numpy as np
import pytest

from src.errors import ConfigurationError, GridIndexError, InvalidObservationError
from src.grid import (
    LOGODDS_CLAMP,
    ClassificationThresholds,
    GridGeometry,
    Observation,
    OccupancyGrid,
    binary_entropy,
    cell_entropy,
    generate_ground_truth,
    logit,
    map_entropy,
    sigmoid,
    unclassified_count,
    unclassified_mask,
    unclassified_set,
)


def bayes_posterior(prior: float, p_obs: float) -> float:
    return prior * p_obs / (prior * p_obs + (1 - prior) * (1 - p_obs))


class TestLogOdds:
    """Tests for logit/sigmoid helpers."""

    def test_logit_of_half_is_zero(self):
        assert logit(0.5) == 0.0

    def test_sigmoid_inverts_logit(self):
        p = np.linspace(0.01, 0.99, 25)
        np.testing.assert_allclose(sigmoid(logit(p)), p, atol=1e-12)

    def test_scalar_in_scalar_out(self):
        assert isinstance(logit(0.3), float)
        assert isinstance(sigmoid(0.3), float)

    def test_clamp_matches_probability_ceiling(self):
        assert sigmoid(LOGODDS_CLAMP) == pytest.approx(0.999)


class TestGridGeometry:
    """Tests for GridGeometry."""

    def test_default_shape(self):
        geometry = GridGeometry()
        assert geometry.shape == (50, 50)
        assert geometry.cell_count == 2500
        assert geometry.center == (25.0, 25.0)

    def test_non_tiling_extent_rejected(self):
        with pytest.raises(ConfigurationError) as exc:
            GridGeometry(width_m=50.5, height_m=50, resolution_m=1.0)
        assert exc.value.key == "width_m"

    def test_non_positive_resolution_rejected(self):
        with pytest.raises(ConfigurationError):
            GridGeometry(resolution_m=0.0)

    def test_cell_center(self):
        geometry = GridGeometry(width_m=10, height_m=6, resolution_m=2)
        assert geometry.shape == (3, 5)
        assert geometry.cell_center((0, 0)) == (1.0, 1.0)
        assert geometry.cell_center((2, 4)) == (9.0, 5.0)

    def test_square_window_selects_cell_centres_inside(self):
        rows, cols = GridGeometry().square_window((25.0, 25.0), 10.0)
        assert (rows.start, rows.stop) == (20, 30)
        assert (cols.start, cols.stop) == (20, 30)

    def test_abutting_windows_share_no_cell(self):
        geometry = GridGeometry()
        _, left = geometry.square_window((5.0, 5.0), 10.0)
        _, right = geometry.square_window((15.0, 5.0), 10.0)
        assert left.stop == right.start

    def test_window_clipped_to_map(self):
        rows, cols = GridGeometry().square_window((0.0, 0.0), 10.0)
        assert (rows.start, rows.stop) == (0, 5)
        assert (cols.start, cols.stop) == (0, 5)

    def test_window_off_map_is_empty(self):
        rows, cols = GridGeometry().square_window((200.0, 200.0), 10.0)
        assert rows.stop - rows.start == 0
        assert cols.stop - cols.start == 0


class TestClassificationThresholds:
    """Tests for threshold validation."""

    def test_defaults(self):
        thr = ClassificationThresholds()
        assert (thr.delta_nw, thr.delta_w) == (0.25, 0.75)

    def test_ordering_violation_names_delta_w(self):
        with pytest.raises(ConfigurationError) as exc:
            ClassificationThresholds(delta_nw=0.25, delta_w=0.2)
        assert exc.value.key == "delta_w"
        assert "must be below" in str(exc.value)


class TestOccupancyGrid:
    """Tests for belief storage and fusion."""

    def setup_method(self):
        self.cell = GridGeometry(width_m=1, height_m=1, resolution_m=1)

    def test_fresh_grid_is_uniform(self):
        grid = OccupancyGrid(GridGeometry())
        assert np.all(grid.probabilities == 0.5)

    def test_fusion_matches_direct_bayes(self):
        rng = np.random.default_rng(0)
        for prior, p_obs in rng.uniform(0.05, 0.95, size=(1000, 2)):
            grid = OccupancyGrid.from_probabilities(self.cell, np.array([[prior]]))
            grid.fuse_observation((0, 0), p_obs)
            assert grid.probability((0, 0)) == pytest.approx(bayes_posterior(prior, p_obs), abs=1e-9)

    def test_fusion_is_order_independent(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            observations = rng.uniform(0.3, 0.7, size=5)
            results = []
            for order in itertools.islice(itertools.permutations(observations), 6):
                grid = OccupancyGrid(self.cell)
                for p_obs in order:
                    grid.fuse_observation((0, 0), p_obs)
                results.append(grid.probability((0, 0)))
            assert max(results) - min(results) < 1e-12

    def test_fusion_clamps_at_ceiling(self):
        grid = OccupancyGrid(self.cell)
        for _ in range(20):
            grid.fuse_observation((0, 0), 0.95)
        assert grid.probability((0, 0)) == pytest.approx(0.999)

    def test_invalid_observation_rejected(self):
        grid = OccupancyGrid(self.cell)
        for bad in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(InvalidObservationError):
                grid.fuse_observation((0, 0), bad)

    def test_out_of_bounds_cell_rejected(self):
        grid = OccupancyGrid(GridGeometry())
        with pytest.raises(GridIndexError):
            grid.fuse_observation((50, 0), 0.7)
        with pytest.raises(IndexError):
            grid.probability((-1, 3))

    def test_window_fusion_matches_per_cell_fusion(self):
        geometry = GridGeometry(width_m=6, height_m=6)
        rng = np.random.default_rng(2)
        p_obs = rng.uniform(0.1, 0.9, size=(2, 3))
        observation = Observation(rows=slice(1, 3), cols=slice(2, 5), p_obs=p_obs)

        vectorised = OccupancyGrid(geometry).fuse(observation)
        per_cell = OccupancyGrid(geometry)
        for cell, p in observation:
            per_cell.fuse_observation(cell, p)

        np.testing.assert_allclose(vectorised.logodds, per_cell.logodds, atol=1e-12)
        assert len(observation) == 6

    def test_copy_is_independent(self):
        grid = OccupancyGrid(self.cell)
        clone = grid.copy()
        clone.fuse_observation((0, 0), 0.9)
        assert grid.probability((0, 0)) == 0.5


class TestEntropy:
    """Tests for entropy and the unclassified set."""

    def test_binary_entropy_endpoints(self):
        np.testing.assert_array_equal(binary_entropy(np.array([0.0, 1.0])), [0.0, 0.0])
        assert cell_entropy(0.5) == 1.0

    def test_fresh_map_entropy(self):
        assert map_entropy(OccupancyGrid(GridGeometry())) == pytest.approx(2500.0)

    def test_unclassified_thresholds_are_strict(self):
        thr = ClassificationThresholds()
        mask = unclassified_mask(np.array([0.25, 0.5, 0.75, 0.2, 0.8]), thr)
        assert mask.tolist() == [False, True, False, False, False]

    def test_unclassified_set_and_count_agree(self):
        geometry = GridGeometry(width_m=3, height_m=1)
        grid = OccupancyGrid.from_probabilities(geometry, np.array([[0.1, 0.5, 0.9]]))
        thr = ClassificationThresholds()
        assert unclassified_set(grid, thr) == {(0, 1)}
        assert unclassified_count(grid, thr) == 1


class TestGroundTruth:
    """Tests for generate_ground_truth."""

    def test_exact_weed_count(self):
        truth = generate_ground_truth(GridGeometry(), 120, 5)
        assert truth.weed_count == 120
        assert truth.occupied.shape == (50, 50)

    def test_same_seed_same_field(self):
        a = generate_ground_truth(GridGeometry(), 120, 9)
        b = generate_ground_truth(GridGeometry(), 120, 9)
        c = generate_ground_truth(GridGeometry(), 120, 10)
        assert np.array_equal(a.occupied, b.occupied)
        assert not np.array_equal(a.occupied, c.occupied)

    def test_too_many_weeds_rejected(self):
        with pytest.raises(ConfigurationError):
            generate_ground_truth(GridGeometry(width_m=2, height_m=2), 5, 0)
