"""
Occupancy costmap with an exponential inflation layer.

Cell values follow the usual 8-bit legend:

* ``0``        free space
* ``1..252``   inflated cost, decaying with distance from the nearest obstacle
* ``253``      inscribed: the vehicle centre here means certain collision
* ``254``      lethal: the cell centre lies inside an obstacle
* ``255``      unknown

The same class backs the global map (built once from ground-truth obstacles)
and the rolling local window rebuilt every tick from the simulated lidar.
Maps are immutable; every operation returns a new map.
"""

import logging
import math
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from core.schemas import Circle, InflationParams, PlannerCostParams, Pose2D

logger = logging.getLogger(__name__)

FREE = 0
MAX_INFLATED = 252
INSCRIBED = 253
LETHAL = 254
UNKNOWN = 255


def as_circles(obstacles: Sequence[Circle] | np.ndarray | None) -> np.ndarray:
    """Normalise obstacles to an ``(n, 3)`` float array of ``x, y, radius`` rows."""
    if obstacles is None:
        return np.empty((0, 3))
    if isinstance(obstacles, np.ndarray):
        return obstacles.astype(float).reshape(-1, 3)
    rows = [[c.x, c.y, c.radius] for c in obstacles]
    return np.array(rows, dtype=float).reshape(-1, 3)


class Costmap:
    """
    Rectangular grid of 8-bit costs.

    Cell ``(row, col)`` covers the square whose lower-left corner sits at
    ``(col, row) * resolution`` in the map frame; the map frame is placed in
    the world by ``origin``. Rows grow along the map y axis.

    Args:
        resolution: Cell edge length in metres.
        width: Number of columns.
        height: Number of rows.
        origin: World pose of the lower-left corner of cell ``(0, 0)``.
        cells: Initial costs of shape ``(height, width)``; free when omitted.
        inflation: Parameters of the last inflation applied, if any.
    """

    def __init__(
        self,
        resolution: float,
        width: int,
        height: int,
        origin: Pose2D | None = None,
        cells: np.ndarray | None = None,
        inflation: InflationParams | None = None,
    ):
        if resolution <= 0 or width < 1 or height < 1:
            raise ValueError("costmap needs a positive resolution and size")
        self.resolution = float(resolution)
        self.width = int(width)
        self.height = int(height)
        self.origin = origin or Pose2D()
        if cells is None:
            cells = np.zeros((self.height, self.width), dtype=np.uint8)
        cells = np.array(cells, dtype=np.uint8, copy=True)
        if cells.shape != (self.height, self.width):
            raise ValueError(
                f"cells shape {cells.shape} does not match "
                f"({self.height}, {self.width})"
            )
        cells.setflags(write=False)
        self._cells = cells
        self.inflation = inflation
        self._centers: np.ndarray | None = None
        self._distance: np.ndarray | None = None

    @classmethod
    def around(cls, pose: Pose2D, size: float, resolution: float) -> "Costmap":
        """Square window of edge ``size`` centred on ``pose`` and aligned with it."""
        n = max(1, int(round(size / resolution)))
        half = n * resolution / 2.0
        c, s = math.cos(pose.theta), math.sin(pose.theta)
        origin = Pose2D(
            x=pose.x - c * half + s * half,
            y=pose.y - s * half - c * half,
            theta=pose.theta,
        )
        return cls(resolution, n, n, origin=origin)

    @classmethod
    def covering(
        cls, points: np.ndarray, margin: float, resolution: float
    ) -> "Costmap":
        """Axis-aligned map covering ``points`` plus ``margin`` on every side."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        lo = points.min(axis=0) - margin
        hi = points.max(axis=0) + margin
        width = max(1, int(math.ceil((hi[0] - lo[0]) / resolution)))
        height = max(1, int(math.ceil((hi[1] - lo[1]) / resolution)))
        return cls(resolution, width, height, origin=Pose2D(x=lo[0], y=lo[1]))

    @property
    def cells(self) -> np.ndarray:
        return self._cells

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def with_cells(
        self, cells: np.ndarray, inflation: InflationParams | None = None
    ) -> "Costmap":
        return Costmap(
            self.resolution,
            self.width,
            self.height,
            origin=self.origin,
            cells=cells,
            inflation=inflation if inflation is not None else self.inflation,
        )

    def world_to_map(self, points: np.ndarray) -> np.ndarray:
        """Continuous ``(col, row)`` grid coordinates of world points."""
        points = np.asarray(points, dtype=float)
        c, s = math.cos(self.origin.theta), math.sin(self.origin.theta)
        dx = points[..., 0] - self.origin.x
        dy = points[..., 1] - self.origin.y
        local_x = c * dx + s * dy
        local_y = -s * dx + c * dy
        return np.stack([local_x, local_y], axis=-1) / self.resolution

    def world_to_cell(
        self, points: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Integer cell indices of world points.

        Returns:
            ``(rows, cols, inside)`` where ``inside`` flags in-bounds points.
        """
        grid = np.floor(self.world_to_map(points)).astype(np.int64)
        cols, rows = grid[..., 0], grid[..., 1]
        inside = (cols >= 0) & (cols < self.width) & (rows >= 0) & (rows < self.height)
        return rows, cols, inside

    def cell_to_world(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """World coordinates of cell centres."""
        rows = np.asarray(rows, dtype=float)
        cols = np.asarray(cols, dtype=float)
        local_x = (cols + 0.5) * self.resolution
        local_y = (rows + 0.5) * self.resolution
        c, s = math.cos(self.origin.theta), math.sin(self.origin.theta)
        wx = self.origin.x + c * local_x - s * local_y
        wy = self.origin.y + s * local_x + c * local_y
        return np.stack([wx, wy], axis=-1)

    def cell_centers(self) -> np.ndarray:
        """World coordinates of every cell centre, shape ``(height, width, 2)``."""
        if self._centers is None:
            rows, cols = np.mgrid[0 : self.height, 0 : self.width]
            self._centers = self.cell_to_world(rows, cols)
        return self._centers

    def cost_at(self, points: np.ndarray, outside: int = FREE) -> np.ndarray:
        """Cell cost under each world point; ``outside`` for points off the map."""
        rows, cols, inside = self.world_to_cell(points)
        costs = np.full(inside.shape, outside, dtype=np.uint8)
        costs[inside] = self._cells[rows[inside], cols[inside]]
        return costs

    def distance_field(self) -> np.ndarray:
        """
        Metric distance from every cell centre to the nearest lethal cell centre.

        Cells are at ``inf`` when the map holds no lethal cell.
        """
        if self._distance is None:
            lethal = self._cells == LETHAL
            if lethal.any():
                distance = ndimage.distance_transform_edt(~lethal) * self.resolution
            else:
                distance = np.full(self.shape, np.inf)
            distance.setflags(write=False)
            self._distance = distance
        return self._distance

    def distance_at(self, points: np.ndarray, outside: float = math.inf) -> np.ndarray:
        """Distance field sampled under each world point."""
        rows, cols, inside = self.world_to_cell(points)
        distance = np.full(inside.shape, outside, dtype=float)
        distance[inside] = self.distance_field()[rows[inside], cols[inside]]
        return distance

    def to_image(self) -> Image.Image:
        """Grayscale image with the map y axis pointing up."""
        return Image.fromarray(np.ascontiguousarray(self._cells[::-1]))

    def save_pgm(self, path: str | Path) -> Path:
        """Write the map as a binary portable graymap (P5)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_image().save(path, format="PPM")
        logger.info("Costmap %dx%d written to %s", self.width, self.height, path)
        return path


def mark_obstacles(
    costmap: Costmap, obstacles: Sequence[Circle] | np.ndarray
) -> Costmap:
    """
    Mark every cell whose centre lies inside an obstacle circle as lethal.

    Circles outside the window are silently clipped.
    """
    circles = as_circles(obstacles)
    if len(circles) == 0:
        return costmap
    centers = costmap.cell_centers()
    cells = costmap.cells.copy()
    for x, y, radius in circles:
        inside = (centers[..., 0] - x) ** 2 + (centers[..., 1] - y) ** 2 <= radius**2
        cells[inside] = LETHAL
    return costmap.with_cells(cells)


def inflation_cost(distance: np.ndarray, p: InflationParams) -> np.ndarray:
    """
    Inflation cost as a function of distance to the nearest lethal cell.

    Returns ``253`` up to the inscribed radius, the rounded exponential decay
    from ``252`` up to the inflation radius and ``0`` beyond.
    """
    distance = np.asarray(distance, dtype=float)
    decay = np.rint(
        MAX_INFLATED
        * np.exp(-p.cost_scaling_factor * (distance - p.inscribed_radius))
    )
    cost = np.where(distance <= p.inflation_radius, decay, 0.0)
    cost = np.where(distance <= p.inscribed_radius, INSCRIBED, cost)
    return cost.astype(np.uint8)


def inflate(costmap: Costmap, p: InflationParams) -> Costmap:
    """
    Spread cost around lethal cells.

    Distances come from an exact Euclidean distance transform; each non-lethal
    cell keeps the larger of its prior value and the inflation cost.
    """
    lethal = costmap.cells == LETHAL
    if not lethal.any():
        return costmap.with_cells(costmap.cells, inflation=p)
    cost = inflation_cost(costmap.distance_field(), p)
    cells = np.where(lethal, LETHAL, np.maximum(costmap.cells, cost)).astype(np.uint8)
    return costmap.with_cells(cells, inflation=p)


def apply_soft_cost(costmap: Costmap, mask: np.ndarray, cost: int) -> Costmap:
    """Raise masked cells to at least ``cost`` without touching lethal cells."""
    cells = costmap.cells.copy()
    raise_mask = np.asarray(mask, dtype=bool) & (cells < cost)
    cells[raise_mask] = cost
    return costmap.with_cells(cells)


def traversal_costs(costmap: Costmap, p: PlannerCostParams) -> np.ndarray:
    """
    Per-cell edge weight of the global planner.

    Cells at 253 or above (inscribed, lethal, unknown) are impassable and
    carry ``inf``.
    """
    cells = costmap.cells.astype(float)
    cost = p.neutral_cost + p.cost_factor * cells
    return np.where(cells >= INSCRIBED, np.inf, cost)


def traversal_cost(
    costmap: Costmap, cell: tuple[int, int], p: PlannerCostParams
) -> float:
    """
    Cost of entering ``cell`` given as ``(row, col)``.

    Returns:
        ``neutral_cost + cost_factor * cell_cost``, or ``math.inf`` for an
        impassable cell.

    Raises:
        IndexError: If the cell is outside the map.
    """
    row, col = cell
    if not (0 <= row < costmap.height and 0 <= col < costmap.width):
        raise IndexError(f"cell {cell} outside {costmap.height}x{costmap.width} map")
    value = int(costmap.cells[row, col])
    if value >= INSCRIBED:
        return math.inf
    return p.neutral_cost + p.cost_factor * value


def nearest_free_cell(
    costmap: Costmap, point: tuple[float, float]
) -> tuple[float, float]:
    """
    Relocate a planning endpoint onto the closest passable cell.

    Points already on a passable in-bounds cell are returned unchanged; points
    off the map or with no passable cell left are returned unchanged as well.
    """
    rows, cols, inside = costmap.world_to_cell(np.asarray(point, dtype=float))
    if not bool(inside):
        return point
    blocked = costmap.cells >= INSCRIBED
    if not blocked[int(rows), int(cols)] or blocked.all():
        return point
    _, (near_rows, near_cols) = ndimage.distance_transform_edt(
        blocked, return_indices=True
    )
    row, col = int(near_rows[rows, cols]), int(near_cols[rows, cols])
    center = costmap.cell_to_world(row, col)
    return (float(center[0]), float(center[1]))


def _cast(
    obstacles: np.ndarray, pose: Pose2D, n_beams: int, max_range: float
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic ray/circle intersection for every beam; returns ranges and hit ids."""
    if n_beams < 1:
        raise ValueError("n_beams must be at least 1")
    angles = pose.theta + 2.0 * np.pi * np.arange(n_beams) / n_beams
    ranges = np.full(n_beams, float(max_range))
    hits = np.full(n_beams, -1, dtype=int)
    if len(obstacles) == 0:
        return ranges, hits

    directions = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    rel = obstacles[:, :2] - np.array([pose.x, pose.y])
    proj = directions @ rel.T
    dist_sq = np.sum(rel**2, axis=-1)
    disc = proj**2 - (dist_sq - obstacles[:, 2] ** 2)

    entry = proj - np.sqrt(np.maximum(disc, 0.0))
    inside = dist_sq <= obstacles[:, 2] ** 2
    distance = np.where(inside[None, :], 0.0, entry)
    valid = (disc >= 0) & ((distance >= 0) | inside[None, :])
    distance = np.where(valid, distance, np.inf)

    nearest = np.argmin(distance, axis=1)
    best = distance[np.arange(n_beams), nearest]
    seen = best <= max_range
    ranges[seen] = best[seen]
    hits[seen] = nearest[seen]
    return ranges, hits


def raycast_scan(
    obstacles: Sequence[Circle] | np.ndarray,
    pose: Pose2D,
    n_beams: int,
    max_range: float,
) -> np.ndarray:
    """
    Simulated planar lidar.

    Beam ``k`` points at ``pose.theta + 2*pi*k/n_beams``.

    Returns:
        The distance to the nearest obstacle surface along each beam, or
        ``max_range`` when nothing is hit.
    """
    ranges, _ = _cast(as_circles(obstacles), pose, n_beams, max_range)
    return ranges


def visible_obstacles(
    obstacles: Sequence[Circle] | np.ndarray,
    pose: Pose2D,
    n_beams: int,
    max_range: float,
) -> np.ndarray:
    """Obstacle circles hit by at least one beam, in their original order."""
    circles = as_circles(obstacles)
    _, hits = _cast(circles, pose, n_beams, max_range)
    seen = np.unique(hits[hits >= 0])
    return circles[seen]
