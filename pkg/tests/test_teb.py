import math

import numpy as np
import pytest

from core.costmap import Costmap
from core.planners.base import PlanningContext, VehicleState
from core.planners.teb import (
    ElasticBand,
    TebPlanner,
    TebResult,
    _select,
    band_clearance,
    band_objective,
    detour_bands,
    finite_difference_gradient,
    first_segment_command,
    optimize,
    plan_step_teb,
    resize_band,
    seed_band,
)
from core.schemas import Pose2D, TebConfig
from core.vehicle import footprint_offsets


def _node_clearance(band: ElasticBand, obstacles: np.ndarray) -> float:
    gaps = np.linalg.norm(band.nodes[:, None, :2] - obstacles[None, :, :2], axis=-1)
    return float((gaps - obstacles[None, :, 2]).min())


class TestSeed:
    def test_spacing_and_intervals(self, vehicle):
        band = seed_band(Pose2D(), Pose2D(x=3.0), None, TebConfig(), vehicle)
        assert len(band.nodes) == 11
        np.testing.assert_allclose(np.diff(band.nodes[:, 0]), 0.3)
        np.testing.assert_allclose(band.dts, 0.3)

    def test_coincident_endpoints(self, vehicle):
        band = seed_band(Pose2D(x=1.0), Pose2D(x=1.0), None, TebConfig(), vehicle)
        assert len(band.nodes) == 2
        assert band.dts.tolist() == [0.3]

    def test_rejects_mismatched_intervals(self):
        with pytest.raises(ValueError):
            ElasticBand(nodes=np.zeros((3, 3)), dts=np.ones(3))


class TestObjective:
    def test_time_only(self, vehicle):
        cfg = TebConfig(
            weight_vel=0.0,
            weight_acc=0.0,
            weight_turn_radius=0.0,
            weight_obstacle=0.0,
            weight_kinematics=0.0,
        )
        band = seed_band(Pose2D(), Pose2D(x=3.0), None, cfg, vehicle)
        assert band_objective(band, np.empty((0, 3)), cfg, vehicle) == pytest.approx(
            band.total_time
        )

    def test_straight_optimal_band_is_a_fixed_point(self, vehicle):
        cfg = TebConfig(weight_time=0.0)
        band = seed_band(Pose2D(), Pose2D(x=3.0), None, cfg, vehicle)
        optimized = optimize(band, np.empty((0, 3)), cfg, vehicle)
        np.testing.assert_allclose(optimized.nodes, band.nodes, atol=1e-9)
        np.testing.assert_allclose(optimized.dts, band.dts, atol=1e-9)


class TestResize:
    def test_splits_long_interval(self):
        nodes = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        resized = resize_band(ElasticBand(nodes, np.array([0.8])), TebConfig())
        assert resized.dts.tolist() == [0.4, 0.4]
        np.testing.assert_allclose(resized.nodes[1], [0.5, 0.0, 0.0])

    def test_merges_short_intervals(self):
        nodes = np.column_stack([np.arange(4) * 0.1, np.zeros(4), np.zeros(4)])
        band = ElasticBand(nodes, np.array([0.1, 0.1, 0.1]))
        resized = resize_band(band, TebConfig())
        assert resized.dts == pytest.approx([0.2, 0.1])
        np.testing.assert_array_equal(resized.nodes[0], nodes[0])
        np.testing.assert_array_equal(resized.nodes[-1], nodes[-1])


class TestOptimize:
    def test_objective_never_increases(self, vehicle, rng):
        cfg = TebConfig()
        upper = cfg.dt_ref + cfg.dt_hysteresis
        for _ in range(100):
            goal = Pose2D(
                x=rng.uniform(1.0, 3.0),
                y=rng.uniform(-1.0, 1.0),
                theta=rng.uniform(-0.5, 0.5),
            )
            obstacles = np.array(
                [[rng.uniform(0.5, 2.5), rng.uniform(-1.0, 1.0), rng.uniform(0.1, 0.3)]]
            )
            band = seed_band(Pose2D(), goal, None, cfg, vehicle)
            seed_value = band_objective(band, obstacles, cfg, vehicle)
            trace: list[tuple[float, float]] = []
            optimized = optimize(band, obstacles, cfg, vehicle, trace=trace)

            assert all(after < before for before, after in trace)
            assert all(
                nxt[0] <= prev[1] for prev, nxt in zip(trace, trace[1:], strict=False)
            )
            if trace:
                assert trace[0][0] == seed_value
            final = band_objective(optimized, obstacles, cfg, vehicle)
            assert final <= seed_value + 1e-9
            assert (optimized.dts > 0.0).all()
            assert optimized.dts.max() <= upper + 1e-12
            command = first_segment_command(optimized, vehicle)
            assert 0.0 <= command.v <= vehicle.v_max
            assert abs(command.gamma) <= vehicle.gamma_max

    def test_gradient_stable_under_step_size(self, vehicle, rng):
        cfg = TebConfig()
        obstacles = np.array([[1.5, 0.4, 0.1]])
        for _ in range(20):
            band = seed_band(Pose2D(), Pose2D(x=3.0), None, cfg, vehicle)
            nodes = band.nodes.copy()
            nodes[1:-1, :2] += rng.normal(0.0, 0.005, (len(nodes) - 2, 2))
            nodes[1:-1, 2] += rng.normal(0.0, 0.02, len(nodes) - 2)
            dts = band.dts * rng.uniform(1.2, 1.4, len(band.dts))
            perturbed = ElasticBand(nodes, dts)

            coarse, _ = finite_difference_gradient(
                perturbed, obstacles, cfg, vehicle, h=1e-4
            )
            fine, _ = finite_difference_gradient(
                perturbed, obstacles, cfg, vehicle, h=1e-5
            )
            assert np.linalg.norm(coarse - fine) <= 1e-4 * np.linalg.norm(fine)

    @pytest.mark.parametrize("offset", [0.1, 0.2, 0.3])
    def test_detour_keeps_clearance(self, vehicle, offset):
        cfg = TebConfig(max_iterations=200)
        obstacles = np.array([[1.5, offset, 0.1]])
        detours = dict(detour_bands(Pose2D(), Pose2D(x=3.0), obstacles, cfg, vehicle))

        optimized = optimize(detours["right"], obstacles, cfg, vehicle)
        assert _node_clearance(optimized, obstacles) >= cfg.min_obstacle_dist - 0.01


class TestPlanStep:
    def test_centred_obstacle_selects_a_detour(self, vehicle):
        cfg = TebConfig()
        obstacles = np.array([[1.5, 0.0, 0.2]])
        state = VehicleState(pose=Pose2D())
        command, result = plan_step_teb(
            state, Pose2D(x=3.0), None, obstacles, cfg, vehicle
        )
        assert result is not None
        assert result.label in ("left", "right")
        assert result.feasible
        assert command.v > 0.0

    def test_symmetric_pair_picks_cheapest_side(self, vehicle):
        cfg = TebConfig()
        obstacles = np.array([[1.5, 0.25, 0.15], [1.5, -0.25, 0.15]])
        state = VehicleState(pose=Pose2D())
        goal = Pose2D(x=3.0)
        _, safety_radius = footprint_offsets(vehicle)

        candidates = [("incumbent", seed_band(state.pose, goal, None, cfg, vehicle))]
        candidates += detour_bands(state.pose, goal, obstacles, cfg, vehicle)
        assert [label for label, _ in candidates] == ["incumbent", "left", "right"]
        ranked = []
        for rank, (_, band) in enumerate(candidates):
            optimized = optimize(band, obstacles, cfg, vehicle)
            if band_clearance(optimized, obstacles) < safety_radius:
                continue
            ranked.append((band_objective(optimized, obstacles, cfg, vehicle), rank))
        assert ranked
        expected = candidates[min(ranked)[1]][0]

        for _ in range(2):
            _, result = plan_step_teb(state, goal, None, obstacles, cfg, vehicle)
            assert result.label == expected
            assert result.objective == pytest.approx(min(ranked)[0])

    def test_exact_tie_keeps_earlier_candidate(self):
        band = ElasticBand(np.zeros((2, 3)), np.array([0.3]))
        left = TebResult(band, 2.0, "left", True)
        right = TebResult(band, 2.0, "right", True)
        incumbent = TebResult(band, 2.0, "incumbent", True)
        assert _select([left, right]).label == "left"
        assert _select([incumbent, left, right]).label == "incumbent"
        cheaper = TebResult(band, 1.0, "right", True)
        infeasible = TebResult(band, 0.5, "left", False)
        assert _select([incumbent, infeasible, cheaper]).label == "right"

    def test_free_road_keeps_incumbent(self, vehicle):
        state = VehicleState(pose=Pose2D())
        _, result = plan_step_teb(
            state, Pose2D(x=2.0), None, np.empty((0, 3)), TebConfig(), vehicle
        )
        assert result.label == "incumbent"

    def test_deterministic(self, vehicle):
        obstacles = np.array([[1.2, 0.2, 0.2], [2.0, -0.4, 0.15]])
        state = VehicleState(pose=Pose2D(), v=0.5)
        first = plan_step_teb(
            state, Pose2D(x=3.0), None, obstacles, TebConfig(), vehicle
        )
        second = plan_step_teb(
            state, Pose2D(x=3.0), None, obstacles, TebConfig(), vehicle
        )
        assert first[0] == second[0]


class TestFirstSegment:
    def test_command_follows_segment(self, vehicle):
        nodes = np.array([[0.0, 0.0, 0.0], [0.3, 0.0, 0.1]])
        command = first_segment_command(ElasticBand(nodes, np.array([0.5])), vehicle)
        assert command.v == pytest.approx(0.6)
        assert command.gamma == pytest.approx(math.atan(0.33 * 0.1 / 0.3))

    def test_backward_segment_stops(self, vehicle):
        nodes = np.array([[0.0, 0.0, 0.0], [-0.3, 0.0, 0.0]])
        command = first_segment_command(ElasticBand(nodes, np.array([0.3])), vehicle)
        assert command.v == 0.0


class TestPlanner:
    def test_carries_band_between_ticks(self, vehicle):
        planner = TebPlanner(TebConfig(), vehicle)
        ctx = PlanningContext(
            state=VehicleState(pose=Pose2D()),
            goal=Pose2D(x=2.0),
            global_path=None,
            local_map=Costmap(0.1, 10, 10),
            obstacles=np.empty((0, 3)),
        )
        output = planner.plan(ctx)
        assert output.internals["label"] == "incumbent"
        assert len(output.local_plan) >= 2
        planner.reset()
        assert planner.plan(ctx).command == output.command
