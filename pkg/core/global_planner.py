"""
Dijkstra search over a costmap.

Moves are 8-connected; an axial move costs the traversal cost of the entered
cell and a diagonal move ``sqrt(2)`` times that. The frontier is ordered by
``(cost, row-major index)`` so equal-cost expansions are deterministic.
"""

import heapq
import logging
import math
from dataclasses import dataclass

import numpy as np

from core.costmap import INSCRIBED, Costmap, traversal_costs
from core.errors import InvalidEndpointError, UnreachableGoalError
from core.schemas import PlannerCostParams, Point, Pose2D

logger = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)
_MOVES: tuple[tuple[int, int, float], ...] = (
    (-1, -1, _SQRT2),
    (-1, 0, 1.0),
    (-1, 1, _SQRT2),
    (0, -1, 1.0),
    (0, 1, 1.0),
    (1, -1, _SQRT2),
    (1, 0, 1.0),
    (1, 1, _SQRT2),
)


@dataclass(frozen=True)
class GlobalPath:
    """
    Roadmap handed to the local planners.

    Attributes:
        waypoints: World-frame cell centres of shape ``(n, 2)``.
        total_cost: Sum of the move costs along the path.
        cells: Row-major indices of the visited cells.
    """

    waypoints: np.ndarray
    total_cost: float
    cells: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.waypoints)

    @classmethod
    def straight(cls, start: Point, goal: Point, spacing: float) -> "GlobalPath":
        """Evenly spaced fallback path used when the search fails."""
        start_arr = np.asarray(start, dtype=float)
        goal_arr = np.asarray(goal, dtype=float)
        n = max(1, int(math.ceil(np.linalg.norm(goal_arr - start_arr) / spacing)))
        t = np.linspace(0.0, 1.0, n + 1)[:, None]
        waypoints = start_arr + t * (goal_arr - start_arr)
        return cls(waypoints=waypoints, total_cost=math.nan)


def _endpoint_cell(costmap: Costmap, point: Point, label: str) -> tuple[int, int]:
    rows, cols, inside = costmap.world_to_cell(np.asarray(point, dtype=float))
    if not bool(inside):
        raise InvalidEndpointError(f"{label} {point} is outside the map")
    row, col = int(rows), int(cols)
    if costmap.cells[row, col] >= INSCRIBED:
        raise InvalidEndpointError(
            f"{label} {point} lies on an impassable cell "
            f"(cost {costmap.cells[row, col]})"
        )
    return row, col


def plan(
    costmap: Costmap, p: PlannerCostParams, start: Point, goal: Point
) -> GlobalPath:
    """
    Minimum-cost 8-connected path between two world points.

    Args:
        costmap: Map to search.
        p: Edge weighting parameters.
        start: World start point.
        goal: World goal point.

    Returns:
        The optimal path through cell centres.

    Raises:
        InvalidEndpointError: If an endpoint is off the map or impassable.
        UnreachableGoalError: If no passable path exists.
    """
    start_rc = _endpoint_cell(costmap, start, "start")
    goal_rc = _endpoint_cell(costmap, goal, "goal")
    width, height = costmap.width, costmap.height
    start_idx = start_rc[0] * width + start_rc[1]
    goal_idx = goal_rc[0] * width + goal_rc[1]

    weights = traversal_costs(costmap, p).ravel().tolist()
    dist = [math.inf] * (width * height)
    parent = [-1] * (width * height)
    done = [False] * (width * height)
    dist[start_idx] = 0.0
    frontier: list[tuple[float, int]] = [(0.0, start_idx)]

    while frontier:
        cost, idx = heapq.heappop(frontier)
        if done[idx]:
            continue
        done[idx] = True
        if idx == goal_idx:
            break
        row, col = divmod(idx, width)
        for d_row, d_col, factor in _MOVES:
            n_row, n_col = row + d_row, col + d_col
            if not (0 <= n_row < height and 0 <= n_col < width):
                continue
            n_idx = n_row * width + n_col
            weight = weights[n_idx]
            if done[n_idx] or weight == math.inf:
                continue
            candidate = cost + factor * weight
            if candidate < dist[n_idx]:
                dist[n_idx] = candidate
                parent[n_idx] = idx
                heapq.heappush(frontier, (candidate, n_idx))

    if not done[goal_idx]:
        raise UnreachableGoalError(f"no path from {start} to {goal}")

    chain = [goal_idx]
    while chain[-1] != start_idx:
        chain.append(parent[chain[-1]])
    chain.reverse()
    rows, cols = np.divmod(np.asarray(chain), width)
    waypoints = costmap.cell_to_world(rows, cols).reshape(-1, 2)
    logger.debug("Dijkstra path: %d cells, cost %.2f", len(chain), dist[goal_idx])
    return GlobalPath(
        waypoints=waypoints, total_cost=dist[goal_idx], cells=tuple(chain)
    )


def prune_to_window(path: GlobalPath, pose: Pose2D, window_radius: float) -> Point:
    """
    Interim goal for the local planner.

    Returns:
        The last waypoint (in path order) within ``window_radius`` of the pose,
        or the nearest waypoint when none is inside the window.
    """
    if len(path) == 0:
        raise ValueError("cannot prune an empty path")
    offsets = path.waypoints - np.array([pose.x, pose.y])
    distances = np.hypot(offsets[:, 0], offsets[:, 1])
    inside = np.flatnonzero(distances <= window_radius)
    index = int(inside[-1]) if inside.size else int(np.argmin(distances))
    return (float(path.waypoints[index, 0]), float(path.waypoints[index, 1]))
