"""
ABOUTME: Unit tests for the planner module
ABOUTME: Tests the lattice, objective switching, greedy selection, replanning and mission execution
"""

import numpy as np
import pytest

import src.planner as planner
from src.errors import DegenerateSegmentError, InfeasibleTrajectoryError, InvalidStateError
from src.grid import ClassificationThresholds, GridGeometry, OccupancyGrid, generate_ground_truth, map_entropy
from src.objectives import ObjectiveMode, classify_gain, info_gain
from src.optimizer import CmaesConfig, OptimizerMode
from src.planner import (
    Lattice,
    LatticeLevel,
    PlannerConfig,
    PlanState,
    build_lattice,
    choose_objective,
    insert_intermediate,
    replan,
    run_mission,
    select_viewpoint,
)
from src.sensor import SensorModel
from src.trajectory import DynamicLimits, FlightEnvelope, Viewpoint, ViewpointKind, allocate_time
from src.utils import EventRecorder

START = (25.0, 25.0, 45.0)


def mission(seed, sensor=None, envelope=None, levels=4, recorder=None, selection_hook=None, **overrides):
    geometry = GridGeometry()
    sensor = sensor or SensorModel()
    envelope = envelope or FlightEnvelope(geometry)
    settings = {"budget_s": 60.0, "horizon": 5, "optimizer_mode": "none", "lattice_levels": levels}
    settings.update(overrides)
    config = PlannerConfig(**settings)
    lattice = build_lattice(geometry, sensor, config.lattice_levels, envelope)
    truth = generate_ground_truth(geometry, 120, seed)
    belief = OccupancyGrid(geometry)
    record = run_mission(
        truth, belief, sensor, lattice, config, DynamicLimits(), START,
        np.random.default_rng(seed), envelope, recorder=recorder, selection_hook=selection_hook,
        seed=seed,
    )
    return record, belief


class TestBuildLattice:
    """Tests for the multiresolution lattice."""

    def setup_method(self):
        self.geometry = GridGeometry()
        self.sensor = SensorModel()

    def test_single_level_is_map_centre(self):
        lattice = build_lattice(self.geometry, self.sensor, 1)
        assert lattice.points == [(25.0, 25.0, 45.0)]

    def test_three_levels(self):
        lattice = build_lattice(self.geometry, self.sensor, 3)
        assert [len(level.points) for level in lattice.levels] == [1, 4, 9]
        assert [level.altitude for level in lattice.levels] == pytest.approx([45.0, 22.5, 11.25])
        assert len(lattice) == 14
        assert lattice.lowest_level.altitude == pytest.approx(11.25)

    def test_spacing_equals_footprint(self):
        lattice = build_lattice(self.geometry, self.sensor, 3)
        level = lattice.levels[2]
        xs = sorted({p[0] for p in level.points})
        assert level.spacing == pytest.approx(self.sensor.footprint_side(11.25))
        np.testing.assert_allclose(np.diff(xs), [level.spacing] * 2)
        assert np.mean(xs) == pytest.approx(25.0)

    def test_levels_collapse_onto_alt_min(self):
        envelope = FlightEnvelope(self.geometry, alt_min=10.0, alt_max=45.0)
        four = build_lattice(self.geometry, self.sensor, 4, envelope)
        five = build_lattice(self.geometry, self.sensor, 5, envelope)
        assert [level.altitude for level in four.levels] == pytest.approx([45.0, 22.5, 11.25, 10.0])
        assert len(five.levels) == 4
        assert all(envelope.contains(p) for p in five.points)


class TestChooseObjective:
    """Tests for choose_objective."""

    def test_fixed_modes_pass_through(self):
        rng = np.random.default_rng(0)
        assert choose_objective("info", 50.0, 100.0, rng) is ObjectiveMode.INFO
        assert choose_objective(ObjectiveMode.CLASSIFY, 0.0, 100.0, rng) is ObjectiveMode.CLASSIFY

    def test_time_varying_frequency(self):
        rng = np.random.default_rng(42)
        picks = [choose_objective("time_varying", 30.0, 100.0, rng) for _ in range(10000)]
        share = sum(p is ObjectiveMode.INFO for p in picks) / len(picks)
        assert share == pytest.approx(0.7, abs=0.015)

    def test_classification_only_once_budget_spent(self):
        rng = np.random.default_rng(3)
        picks = {choose_objective("time_varying", 100.0, 100.0, rng) for _ in range(200)}
        assert picks == {ObjectiveMode.CLASSIFY}


class TestSelectViewpoint:
    """Tests for greedy gain-rate selection."""

    def setup_method(self):
        self.geometry = GridGeometry()
        self.sensor = SensorModel()
        self.limits = DynamicLimits()

    def test_single_point_lattice(self):
        lattice = Lattice(levels=(LatticeLevel(10.0, 20.0, ((30.0, 30.0, 10.0),)),))
        chosen = select_viewpoint(
            OccupancyGrid(self.geometry), self.sensor, lattice, "info", START, self.limits
        )
        assert chosen.position == (30.0, 30.0, 10.0)
        assert chosen.kind is ViewpointKind.GLOBAL
        assert chosen.objective == "info"

    def test_equal_gains_prefer_nearer_point(self):
        points = ((10.0, 10.0, 5.0), (40.0, 40.0, 5.0))
        lattice = Lattice(levels=(LatticeLevel(5.0, 10.0, points),))
        chosen = select_viewpoint(
            OccupancyGrid(self.geometry), self.sensor, lattice, "info", (15.0, 15.0, 5.0), self.limits
        )
        assert chosen.position == (10.0, 10.0, 5.0)

    def test_current_position_is_never_chosen(self):
        lattice = build_lattice(self.geometry, self.sensor, 1)
        with pytest.raises(InvalidStateError):
            select_viewpoint(OccupancyGrid(self.geometry), self.sensor, lattice, "info", START, self.limits)

    def test_fresh_map_prefers_informative_altitude(self):
        lattice = build_lattice(self.geometry, self.sensor, 4)
        chosen = select_viewpoint(OccupancyGrid(self.geometry), self.sensor, lattice, "info", START, self.limits)
        assert chosen.z < 45.0

    def test_saturated_map_falls_back_to_lowest_level(self):
        lattice = build_lattice(self.geometry, self.sensor, 3)
        belief = OccupancyGrid.from_probabilities(self.geometry, np.full(self.geometry.shape, 0.999))
        origin = (5.0, 5.0, 20.0)
        chosen = select_viewpoint(belief, self.sensor, lattice, "classify", origin, self.limits)
        lowest = lattice.lowest_level.points
        nearest = min(lowest, key=lambda p: np.linalg.norm(np.subtract(p, origin)))
        assert chosen.position == nearest

        visited = {nearest}
        second = select_viewpoint(belief, self.sensor, lattice, "info", origin, self.limits, visited=visited)
        assert second.position in lowest
        assert second.position != nearest


class TestInsertIntermediate:
    """Tests for insert_intermediate."""

    def test_midpoint(self):
        mid = insert_intermediate(
            Viewpoint((0.0, 0.0, 10.0)), Viewpoint((10.0, 10.0, 20.0), objective="classify")
        )
        assert mid.position == (5.0, 5.0, 15.0)
        assert mid.kind is ViewpointKind.INTERMEDIATE
        assert mid.objective == "classify"

    def test_clamped_into_envelope(self):
        envelope = FlightEnvelope(GridGeometry(), alt_min=10.0, alt_max=45.0)
        mid = insert_intermediate(Viewpoint((0.0, 0.0, 2.0)), Viewpoint((10.0, 10.0, 4.0)), envelope)
        assert mid.position == (5.0, 5.0, 10.0)

    def test_coincident_rejected(self):
        with pytest.raises(DegenerateSegmentError):
            insert_intermediate(Viewpoint((1.0, 1.0, 5.0)), Viewpoint((1.0, 1.0, 5.0)))


class TestReplan:
    """Tests for fixed-horizon replanning."""

    def setup_method(self):
        self.geometry = GridGeometry()
        self.sensor = SensorModel()
        self.lattice = build_lattice(self.geometry, self.sensor, 4)

    def plan(self, horizon, **kwargs):
        config = PlannerConfig(horizon=horizon, optimizer_mode="none", budget_s=300.0)
        state = PlanState(elapsed_s=0.0, position=START)
        belief = kwargs.pop("belief", OccupancyGrid(self.geometry))
        plan = replan(state, belief, self.sensor, self.lattice, config, np.random.default_rng(5), **kwargs)
        return plan, state

    def test_horizon_seven_alternates_kinds(self):
        plan, state = self.plan(7)
        kinds = [vp.kind for vp in plan]
        g, i = ViewpointKind.GLOBAL, ViewpointKind.INTERMEDIATE
        assert kinds == [g, i, g, i, g, i, g]
        assert len(state.global_vps) == 4
        assert len(state.intermediate_vps) == 3

    def test_even_horizon_ends_with_two_globals(self):
        plan, _ = self.plan(6)
        g, i = ViewpointKind.GLOBAL, ViewpointKind.INTERMEDIATE
        assert [vp.kind for vp in plan] == [g, i, g, i, g, g]

    def test_intermediates_are_midpoints_owned_by_next_global(self):
        plan, _ = self.plan(7)
        for k in (1, 3, 5):
            expected = (plan[k - 1].as_array() + plan[k + 1].as_array()) / 2.0
            np.testing.assert_allclose(plan[k].as_array(), expected)
            assert plan[k].objective == plan[k + 1].objective

    def test_belief_is_untouched(self):
        belief = OccupancyGrid(self.geometry)
        before = belief.logodds.copy()
        self.plan(7, belief=belief)
        np.testing.assert_array_equal(belief.logodds, before)

    def test_spent_budget_rejected(self):
        config = PlannerConfig(budget_s=10.0)
        state = PlanState(elapsed_s=10.0, position=START)
        with pytest.raises(InvalidStateError):
            replan(state, OccupancyGrid(self.geometry), self.sensor, self.lattice, config, np.random.default_rng(0))

    def test_selection_matches_brute_force_argmax(self):
        limits = DynamicLimits()
        thr = ClassificationThresholds()
        calls = []

        def check(belief, origin, objective, chosen, visited):
            candidates = []
            for p in self.lattice.points:
                if np.linalg.norm(np.subtract(p, origin)) <= 1e-9:
                    continue
                if objective is ObjectiveMode.INFO:
                    gain = info_gain(belief, self.sensor, p)
                else:
                    gain = classify_gain(belief, self.sensor, thr, p)
                if gain > 0:
                    candidates.append((-gain / allocate_time(origin, p, limits), p[2], p[0], p[1], p))
            if candidates:
                assert chosen.position == min(candidates)[-1]
            calls.append(objective)

        config = PlannerConfig(horizon=7, optimizer_mode="none", objective_mode="time_varying")
        state = PlanState(elapsed_s=150.0, position=START)
        replan(
            state, OccupancyGrid(self.geometry), self.sensor, self.lattice, config,
            np.random.default_rng(8), limits, selection_hook=check,
        )
        assert len(calls) == 4

    def test_records_selection_events(self):
        recorder = EventRecorder()
        self.plan(5, recorder=recorder)
        selects = recorder.of_kind("select")
        assert len(selects) == 3
        assert all(e["gain"] > 0 for e in selects)


class TestRunMission:
    """Tests for run_mission."""

    def test_budget_is_never_exceeded(self):
        record, _ = mission(1)
        times = [e.t_s for e in record.events]
        assert times[0] == 0.0
        assert all(t <= 60.0 for t in times)
        assert all(b > a for a, b in zip(times, times[1:]))
        assert record.n_measurements == len(record.flown_path) == len(record.segments)

    def test_entropy_drops(self):
        record, belief = mission(2)
        assert record.final.entropy_bits < 2500.0
        assert record.final.entropy_bits == pytest.approx(map_entropy(belief))

    def test_budget_shorter_than_first_leg(self):
        record, belief = mission(3, budget_s=0.5)
        assert len(record.events) == 1
        assert record.final.entropy_bits == pytest.approx(2500.0)

    def test_same_seed_same_mission(self):
        config = CmaesConfig(max_evals=60)
        first_events = EventRecorder()
        second_events = EventRecorder()
        first, _ = mission(4, recorder=first_events, optimizer_mode="local", cmaes=config)
        second, _ = mission(4, recorder=second_events, optimizer_mode="local", cmaes=config)
        assert first.events == second.events
        assert first.flown_path == second.flown_path
        assert first_events.to_jsonl() == second_events.to_jsonl()
        assert first_events.of_kind("cmaes_generation")

    def test_uninformative_sensor_still_terminates(self):
        sensor = SensorModel(h_min=2.0, h_max=10.0)
        envelope = FlightEnvelope(GridGeometry(), alt_min=10.0, alt_max=45.0)
        record, _ = mission(5, sensor=sensor, envelope=envelope, levels=3, objective_mode="info")
        assert record.n_measurements > 0
        assert all(e.t_s <= 60.0 for e in record.events)
        assert record.final.entropy_bits == pytest.approx(2500.0)

    def test_fixed_plan_is_flown_once(self):
        geometry = GridGeometry()
        plan = [Viewpoint((10.0, 10.0, 10.0)), Viewpoint((40.0, 40.0, 10.0))]
        record = run_mission(
            generate_ground_truth(geometry, 120, 6), OccupancyGrid(geometry), SensorModel(), None,
            PlannerConfig(budget_s=1000.0), DynamicLimits(), START, np.random.default_rng(6),
            fixed_plan=plan,
        )
        assert record.flown_path == [(10.0, 10.0, 10.0), (40.0, 40.0, 10.0)]

    def fly(self, plan, rng=None, **settings):
        geometry = GridGeometry()
        return run_mission(
            generate_ground_truth(geometry, 120, 6), OccupancyGrid(geometry), SensorModel(), None,
            PlannerConfig(budget_s=1000.0, **settings), DynamicLimits(), START, rng, fixed_plan=plan,
        )

    def test_short_legs_are_not_flown(self):
        plan = [Viewpoint((10.0, 10.0, 10.0)), Viewpoint((10.003, 10.0, 10.0)), Viewpoint((40.0, 40.0, 10.0))]
        record = self.fly(plan, np.random.default_rng(6))
        assert record.flown_path == [(10.0, 10.0, 10.0), (40.0, 40.0, 10.0)]

    def test_unflyable_path_is_cut_to_first_leg(self, mocker):
        real = planner.plan_segments
        calls = []

        def fit(waypoints, limits, start_state=None):
            calls.append(len(waypoints))
            if len(waypoints) > 2:
                raise InfeasibleTrajectoryError("limits violated")
            return real(waypoints, limits, start_state)

        mocker.patch.object(planner, "plan_segments", side_effect=fit)
        plan = [Viewpoint((10.0, 10.0, 10.0)), Viewpoint((40.0, 40.0, 10.0))]
        record = self.fly(plan, np.random.default_rng(6))
        assert calls == [3, 2, 2]
        assert record.flown_path == [(10.0, 10.0, 10.0), (40.0, 40.0, 10.0)]

    def test_unflyable_first_leg_ends_mission(self, mocker):
        mocker.patch.object(
            planner, "plan_segments", side_effect=InfeasibleTrajectoryError("limits violated")
        )
        record = self.fly([Viewpoint((10.0, 10.0, 10.0)), Viewpoint((40.0, 40.0, 10.0))])
        assert len(record.events) == 1
        assert record.flown_path == []

    def test_stream_defaults_to_config_seed(self):
        plan = [Viewpoint((10.0, 10.0, 10.0)), Viewpoint((40.0, 40.0, 10.0))]
        implicit = self.fly(plan, rng_seed=9)
        explicit = self.fly(plan, np.random.default_rng(9))
        assert implicit.events == explicit.events

    def test_start_outside_envelope_rejected(self):
        geometry = GridGeometry()
        with pytest.raises(InvalidStateError):
            run_mission(
                generate_ground_truth(geometry, 120, 0), OccupancyGrid(geometry), SensorModel(),
                build_lattice(geometry, SensorModel(), 2), PlannerConfig(), DynamicLimits(),
                (25.0, 25.0, 80.0), np.random.default_rng(0),
            )


def test_planner_config_coerces_modes():
    config = PlannerConfig(objective_mode="classify", optimizer_mode="global")
    assert config.objective_mode is ObjectiveMode.CLASSIFY
    assert config.optimizer_mode is OptimizerMode.GLOBAL
