"""
ABOUTME: Performance and benchmark integration tests
ABOUTME: Tests CMA-ES convergence on standard benchmarks and refinement over many replans
"""

import time
import unittest

import numpy as np
import pytest

from src.grid import ClassificationThresholds, GridGeometry, OccupancyGrid
from src.optimizer import CmaesConfig, cmaes_minimize, path_fitness, refine_path
from src.planner import PlannerConfig, PlanState, build_lattice, replan
from src.sensor import SensorModel
from src.trajectory import DynamicLimits, FlightEnvelope


def sphere(x):
    return float(np.sum(x ** 2))


def rosenbrock(x):
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


@pytest.mark.performance
@pytest.mark.slow
class TestCmaesBenchmarks(unittest.TestCase):
    """CMA-ES convergence on sphere and Rosenbrock."""

    def test_sphere_10d(self):
        config = CmaesConfig(sigma0=0.5, max_evals=5000, f_tol=0.0, x_tol=0.0)
        start = time.time()
        result = cmaes_minimize(sphere, np.ones(10), config, np.random.default_rng(1))
        elapsed = time.time() - start

        assert result.f_best < 1e-10
        assert result.eval_count <= 5000
        print(f"\nSphere 10-D: f={result.f_best:.3e} after {result.eval_count} evals in {elapsed:.2f}s")

    def test_rosenbrock_5d(self):
        """Restarts share one budget of 50000 evaluations."""
        config = CmaesConfig(sigma0=0.5, max_evals=15000, f_tol=0.0, x_tol=1e-12)
        best, used = np.inf, 0
        for seed in range(3):
            result = cmaes_minimize(rosenbrock, np.zeros(5), config, np.random.default_rng(seed))
            best, used = min(best, result.f_best), used + result.eval_count
            if best < 1e-6:
                break

        assert best < 1e-6
        assert used <= 50000
        print(f"\nRosenbrock 5-D: f={best:.3e} after {used} evals")


@pytest.mark.performance
@pytest.mark.slow
class TestRefinementAtScale(unittest.TestCase):
    """Refinement never loses fitness across many replans."""

    def test_fifty_replans_never_worse(self):
        geometry = GridGeometry()
        sensor = SensorModel()
        thr = ClassificationThresholds()
        limits = DynamicLimits()
        envelope = FlightEnvelope(geometry)
        lattice = build_lattice(geometry, sensor, 4, envelope)
        config = PlannerConfig(horizon=7, optimizer_mode="none")
        rng = np.random.default_rng(50)
        start = time.time()

        for k in range(50):
            belief = OccupancyGrid.from_probabilities(geometry, rng.uniform(0.05, 0.95, size=geometry.shape))
            position = (float(rng.uniform(5, 45)), float(rng.uniform(5, 45)), 45.0)
            budget = float(rng.uniform(60.0, 300.0))
            state = PlanState(elapsed_s=300.0 - budget, position=position)
            plan = replan(state, belief, sensor, lattice, config, np.random.default_rng(k))
            mode = "local" if k % 2 == 0 else "global"
            refined = refine_path(
                plan, mode, belief, sensor, thr, budget, limits, CmaesConfig(max_evals=40),
                np.random.default_rng(k), envelope, position,
            )
            before = path_fitness(plan, belief, sensor, thr, envelope, limits, position, budget)
            after = path_fitness(refined, belief, sensor, thr, envelope, limits, position, budget)
            assert after <= before + 1e-12, k

        print(f"\n50 refinements in {time.time() - start:.2f}s")
