import math

import numpy as np
import pytest

from core.planners.apf import (
    detect_local_min,
    forces,
    plan_step_apf,
    repulsion,
    speed_law,
)
from core.planners.base import VehicleState
from core.schemas import ApfConfig, ControlCommand, Pose2D
from core.vehicle import step, transform_points


class TestSpeedLaw:
    def test_no_obstacles_gives_top_speed(self):
        assert speed_law(0, ApfConfig()) == 1.0

    def test_linear_drop(self):
        assert speed_law(3, ApfConfig(v_max=1.0, k_gain=0.2)) == pytest.approx(0.4)

    def test_floor(self):
        assert speed_law(100, ApfConfig(v_min=0.2)) == 0.2


class TestForces:
    def test_repulsion_vanishes_at_influence_radius(self):
        cfg = ApfConfig(rho0=0.6)
        assert repulsion(np.array([0.6, 0.9]), cfg).tolist() == [0.0, 0.0]
        assert repulsion(np.array([0.3]), cfg)[0] > 0.0

    def test_repulsion_grows_as_clearance_shrinks(self):
        cfg = ApfConfig(rho0=0.6, k_rep=0.05)
        clearance = np.linspace(0.59, 0.06, 60)
        magnitude = repulsion(clearance, cfg)
        assert (np.diff(magnitude) > 0.0).all()

    def test_repulsion_sums_each_obstacle(self):
        cfg = ApfConfig(rho0=0.8, k_rep=0.05)
        position = np.array([0.2, -0.1])
        obstacles = np.array([[0.9, 0.2, 0.2], [0.1, -0.8, 0.15], [-0.4, 0.3, 0.1]])
        fs = forces(Pose2D(x=0.2, y=-0.1), (3.0, 0.0), obstacles, cfg)

        expected = np.zeros(2)
        for x, y, radius in obstacles:
            away = position - np.array([x, y])
            rho = math.hypot(*away) - radius
            assert 0.05 < rho <= cfg.rho0
            magnitude = cfg.k_rep * (1.0 / rho - 1.0 / cfg.rho0) / rho**2
            expected += magnitude * away / math.hypot(*away)
        np.testing.assert_allclose(fs.f_rep, expected, rtol=1e-12, atol=1e-12)
        assert fs.n_obstacles == 3

    def test_attraction_only(self):
        fs = forces(Pose2D(), (3.0, 4.0), np.empty((0, 3)), ApfConfig(k_att=2.0))
        np.testing.assert_allclose(fs.f_att, [6.0, 8.0])
        np.testing.assert_allclose(fs.f_rep, [0.0, 0.0])

    def test_rotation_equivariance(self, rng):
        cfg = ApfConfig(rho0=1.0)
        obstacles = np.array([[0.8, 0.2, 0.2], [0.5, -0.6, 0.1]])
        base = forces(Pose2D(), (3.0, 0.5), obstacles, cfg)

        frame = Pose2D(theta=rng.uniform(-math.pi, math.pi))
        moved = np.column_stack(
            [transform_points(frame, obstacles[:, :2]), obstacles[:, 2]]
        )
        goal = transform_points(frame, np.array([3.0, 0.5]))
        rotated = forces(Pose2D(), tuple(goal), moved, cfg)

        c, s = math.cos(frame.theta), math.sin(frame.theta)
        turn = np.array([[c, -s], [s, c]])
        np.testing.assert_allclose(rotated.f_att, turn @ base.f_att, atol=1e-9)
        np.testing.assert_allclose(rotated.f_rep, turn @ base.f_rep, atol=1e-9)

    def test_head_on_is_a_local_minimum(self):
        cfg = ApfConfig(rho0=1.5, k_rep=0.1)
        obstacles = np.array([[2.0, 0.3, 0.2], [2.0, -0.3, 0.2]])
        fs = forces(Pose2D(x=1.0), (5.0, 0.0), obstacles, cfg)
        assert detect_local_min(fs, 4.0, cfg)
        assert not detect_local_min(fs, 0.1, cfg)


class TestDeadlock:
    """Two obstacles straddling the straight line to the goal."""

    goal = (5.0, 0.0)
    obstacles = np.array([[2.0, 0.3, 0.2], [2.0, -0.3, 0.2]])

    def _drive(self, escape_enabled: bool, vehicle) -> tuple[list[float], bool]:
        cfg = ApfConfig(rho0=1.5, k_rep=0.1, escape_enabled=escape_enabled)
        state = VehicleState(pose=Pose2D())
        fs = None
        distances = []
        for _ in range(400):
            command, fs = plan_step_apf(
                state, self.goal, self.obstacles, cfg, vehicle, prev=fs
            )
            pose = state.pose
            distances.append(math.hypot(self.goal[0] - pose.x, self.goal[1] - pose.y))
            if distances[-1] <= cfg.goal_tolerance:
                return distances, True
            if command == ControlCommand.stop():
                break
            state = VehicleState(pose=step(pose, command, 0.05, vehicle), v=command.v)
        return distances, False

    def test_stalls_without_escape(self, vehicle):
        distances, reached = self._drive(False, vehicle)
        assert not reached
        best_first = min(distances[:200])
        best_last = min(distances[200:]) if len(distances) > 200 else best_first
        assert best_first - best_last < 0.1

    def test_escape_reaches_goal(self, vehicle):
        _, reached = self._drive(True, vehicle)
        assert reached
