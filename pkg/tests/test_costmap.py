import math

import numpy as np
import pytest

from core.costmap import (
    INSCRIBED,
    LETHAL,
    Costmap,
    apply_soft_cost,
    inflate,
    inflation_cost,
    mark_obstacles,
    nearest_free_cell,
    raycast_scan,
    traversal_cost,
    visible_obstacles,
)
from core.schemas import Circle, InflationParams, PlannerCostParams, Pose2D


class TestGeometry:
    def test_world_cell_round_trip(self):
        grid = Costmap(0.1, 20, 10, origin=Pose2D(x=-1.0, y=2.0, theta=0.3))
        centers = grid.cell_centers()
        rows, cols, inside = grid.world_to_cell(centers)
        assert inside.all()
        np.testing.assert_array_equal(rows, np.mgrid[0:10, 0:20][0])
        np.testing.assert_array_equal(cols, np.mgrid[0:10, 0:20][1])

    def test_around_is_centred_on_pose(self):
        pose = Pose2D(x=3.0, y=-1.0, theta=1.0)
        grid = Costmap.around(pose, 6.0, 0.1)
        assert grid.shape == (60, 60)
        mean = grid.cell_centers().reshape(-1, 2).mean(axis=0)
        np.testing.assert_allclose(mean, [3.0, -1.0], atol=1e-9)

    def test_cells_are_read_only(self):
        grid = Costmap(0.1, 5, 5)
        with pytest.raises(ValueError):
            grid.cells[0, 0] = 1

    def test_cost_off_map(self):
        grid = Costmap(1.0, 2, 2)
        assert grid.cost_at(np.array([[5.0, 5.0]]), outside=255).tolist() == [255]


class TestMarking:
    def test_marks_cells_with_centre_inside_circle(self):
        grid = Costmap(0.1, 20, 20)
        marked = mark_obstacles(grid, [Circle(x=1.0, y=1.0, radius=0.3)])

        for row in range(20):
            for col in range(20):
                cx, cy = (col + 0.5) * 0.1, (row + 0.5) * 0.1
                inside = math.hypot(cx - 1.0, cy - 1.0) <= 0.3
                assert (marked.cells[row, col] == LETHAL) == inside

    def test_clips_circles_off_the_window(self):
        grid = Costmap(0.1, 10, 10)
        marked = mark_obstacles(grid, [Circle(x=50.0, y=50.0, radius=1.0)])
        assert not marked.cells.any()

    def test_point_obstacle_marks_one_cell(self, rng):
        grid = Costmap(0.1, 20, 20, origin=Pose2D(x=-1.0, y=-1.0))
        centers = grid.cell_centers()
        for _ in range(20):
            row, col = rng.integers(0, 20, size=2)
            x, y = centers[row, col]
            marked = mark_obstacles(grid, np.array([[x, y, 0.0]]))
            assert int((marked.cells == LETHAL).sum()) == 1
            assert marked.cells[row, col] == LETHAL

    def test_no_obstacles_leaves_map_unchanged(self, rng):
        cells = rng.integers(0, 253, size=(10, 12)).astype(np.uint8)
        grid = Costmap(0.1, 12, 10, cells=cells)
        np.testing.assert_array_equal(mark_obstacles(grid, []).cells, cells)
        np.testing.assert_array_equal(
            mark_obstacles(grid, np.empty((0, 3))).cells, cells
        )


class TestInflation:
    params = InflationParams(
        inflation_radius=0.6, cost_scaling_factor=4.0, inscribed_radius=0.25
    )

    def _brute_force(self, lethal: np.ndarray, resolution: float) -> np.ndarray:
        rows, cols = np.nonzero(lethal)
        expected = np.zeros(lethal.shape, dtype=int)
        p = self.params
        for row in range(lethal.shape[0]):
            for col in range(lethal.shape[1]):
                if lethal[row, col]:
                    expected[row, col] = LETHAL
                    continue
                d = resolution * np.min(np.hypot(rows - row, cols - col))
                if d <= p.inscribed_radius:
                    expected[row, col] = INSCRIBED
                elif d <= p.inflation_radius:
                    expected[row, col] = round(
                        252
                        * math.exp(-p.cost_scaling_factor * (d - p.inscribed_radius))
                    )
        return expected

    def test_matches_brute_force(self, rng):
        for _ in range(5):
            lethal = rng.random((30, 30)) < 0.01
            lethal[15, 15] = True
            cells = np.where(lethal, LETHAL, 0)
            grid = inflate(Costmap(0.05, 30, 30, cells=cells), self.params)

            expected = self._brute_force(lethal, 0.05)
            assert np.abs(grid.cells.astype(int) - expected).max() <= 1

    def test_is_idempotent(self):
        cells = np.zeros((20, 20), dtype=np.uint8)
        cells[5, 5] = LETHAL
        once = inflate(Costmap(0.1, 20, 20, cells=cells), self.params)
        twice = inflate(once, self.params)
        np.testing.assert_array_equal(once.cells, twice.cells)

    def test_keeps_higher_prior_cost(self):
        cells = np.full((10, 10), 200, dtype=np.uint8)
        cells[0, 0] = LETHAL
        grid = inflate(Costmap(0.1, 10, 10, cells=cells), self.params)
        assert grid.cells[9, 9] == 200

    def test_adding_obstacles_never_lowers_cost(self, rng):
        grid = Costmap(0.05, 40, 40)
        for _ in range(20):
            obstacles = np.column_stack(
                [
                    rng.uniform(0.0, 2.0, 4),
                    rng.uniform(0.0, 2.0, 4),
                    rng.uniform(0.02, 0.3, 4),
                ]
            )
            fewer = inflate(mark_obstacles(grid, obstacles[:2]), self.params)
            more = inflate(mark_obstacles(grid, obstacles), self.params)
            assert (more.cells >= fewer.cells).all()

    def test_zero_scaling_is_flat(self):
        p = InflationParams(
            inflation_radius=0.6, cost_scaling_factor=0.0, inscribed_radius=0.25
        )
        cells = np.zeros((30, 30), dtype=np.uint8)
        cells[15, 15] = LETHAL
        grid = inflate(Costmap(0.05, 30, 30, cells=cells), p)

        distance = 0.05 * np.hypot(*np.mgrid[0:30, 0:30] - 15)
        band = (distance > p.inscribed_radius) & (distance <= p.inflation_radius)
        assert band.any()
        assert (grid.cells[band] == 252).all()
        assert (grid.cells[distance > p.inflation_radius] == 0).all()

    def test_cost_profile(self):
        p = self.params
        costs = inflation_cost(np.array([0.0, 0.25, 0.26, 0.6, 0.61]), p)
        assert costs[0] == INSCRIBED
        assert costs[1] == INSCRIBED
        assert costs[2] == round(252 * math.exp(-4.0 * 0.01))
        assert costs[3] == round(252 * math.exp(-4.0 * 0.35))
        assert costs[4] == 0

    def test_soft_cost_never_lowers(self):
        cells = np.array([[0, 100, LETHAL]], dtype=np.uint8)
        grid = apply_soft_cost(Costmap(1.0, 3, 1, cells=cells), np.ones((1, 3)), 50)
        assert grid.cells.tolist() == [[50, 100, LETHAL]]


class TestTraversalCost:
    def test_values(self):
        cells = np.array([[0, 100, INSCRIBED, LETHAL]], dtype=np.uint8)
        grid = Costmap(1.0, 4, 1, cells=cells)
        p = PlannerCostParams(cost_factor=0.8, neutral_cost=50.0)

        assert traversal_cost(grid, (0, 0), p) == 50.0
        assert traversal_cost(grid, (0, 1), p) == pytest.approx(130.0)
        assert traversal_cost(grid, (0, 2), p) == math.inf
        assert traversal_cost(grid, (0, 3), p) == math.inf
        with pytest.raises(IndexError):
            traversal_cost(grid, (1, 0), p)

    def test_highest_passable_cost(self):
        grid = Costmap(1.0, 1, 1, cells=np.array([[252]], dtype=np.uint8))
        p = PlannerCostParams(cost_factor=1.0, neutral_cost=1.0)
        assert traversal_cost(grid, (0, 0), p) == 253.0

    def test_nearest_free_cell(self):
        cells = np.zeros((10, 10), dtype=np.uint8)
        cells[4:7, 4:7] = LETHAL
        grid = Costmap(0.1, 10, 10, cells=cells)

        moved = nearest_free_cell(grid, (0.55, 0.55))
        assert grid.cost_at(np.array(moved)) < INSCRIBED
        assert nearest_free_cell(grid, (0.15, 0.15)) == (0.15, 0.15)


class TestLidar:
    def test_single_circle(self):
        obstacles = [Circle(x=2.0, y=0.0, radius=0.5)]
        ranges = raycast_scan(obstacles, Pose2D(), n_beams=4, max_range=4.0)
        assert ranges[0] == pytest.approx(1.5)
        assert ranges[1:].tolist() == [4.0, 4.0, 4.0]

    def test_matches_ray_marching(self, rng):
        for _ in range(10):
            obstacles = np.column_stack(
                [rng.uniform(-3, 3, 6), rng.uniform(-3, 3, 6), rng.uniform(0.1, 0.5, 6)]
            )
            pose = Pose2D(x=0.0, y=0.0, theta=rng.uniform(-math.pi, math.pi))
            if np.any(np.hypot(obstacles[:, 0], obstacles[:, 1]) <= obstacles[:, 2]):
                continue
            ranges = raycast_scan(obstacles, pose, n_beams=36, max_range=4.0)

            t = np.arange(0.0, 4.0, 1e-3)
            for k, measured in enumerate(ranges):
                angle = pose.theta + 2 * math.pi * k / 36
                xs, ys = t * math.cos(angle), t * math.sin(angle)
                gaps = np.hypot(
                    xs[:, None] - obstacles[:, 0], ys[:, None] - obstacles[:, 1]
                )
                hit = np.flatnonzero((gaps <= obstacles[:, 2]).any(axis=1))
                marched = t[hit[0]] if hit.size else 4.0
                assert measured == pytest.approx(marched, abs=2e-3)

    def test_hidden_obstacle_is_not_visible(self):
        obstacles = np.array([[1.0, 0.0, 0.4], [2.5, 0.0, 0.2], [0.0, 2.0, 0.2]])
        seen = visible_obstacles(obstacles, Pose2D(), n_beams=360, max_range=4.0)
        assert seen.tolist() == [[1.0, 0.0, 0.4], [0.0, 2.0, 0.2]]


class TestPgm:
    def test_writes_binary_graymap(self, tmp_path):
        cells = np.zeros((4, 6), dtype=np.uint8)
        cells[0, 0] = LETHAL
        path = Costmap(0.1, 6, 4, cells=cells).save_pgm(tmp_path / "map.pgm")
        data = path.read_bytes()
        assert data.startswith(b"P5")
        # bottom row of the map is the last image row
        assert data[-6] == LETHAL
