"""
Road geometry.

The red centre line is a uniform Catmull-Rom spline through the scenario
control points, densely sampled once so that projections onto the road reduce
to a nearest-neighbour query. Arc-length ``s`` and signed lateral offset
(left positive) are the road coordinates used by rendering and by the
episode metrics.
"""

import math

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.spatial import cKDTree

from core.schemas import Circle, ObstacleSpec, Pose2D, TrackConfig


class Track:
    """
    Sampled centre line with arc-length parametrisation.

    Args:
        config: Track block of the scenario.
        spacing: Target distance between dense samples in metres.
    """

    def __init__(self, config: TrackConfig, spacing: float = 0.01):
        self.config = config
        self.lane_width = config.lane_width
        self.marking_width = config.marking_width

        points = np.asarray(config.control_points, dtype=float)
        head = 2 * points[0] - points[1]
        tail = 2 * points[-1] - points[-2]
        padded = np.vstack([head, points, tail])
        tangents = (padded[2:] - padded[:-2]) / 2.0
        knots = np.arange(len(points), dtype=float)
        self._spline = CubicHermiteSpline(knots, points, tangents, axis=0)

        chord = float(np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1)))
        n_samples = max(2, int(math.ceil(chord / spacing)) + 1)
        u = np.linspace(0.0, knots[-1], n_samples)
        self._samples = self._spline(u)
        first = self._spline.derivative(1)(u)
        second = self._spline.derivative(2)(u)

        steps = np.linalg.norm(np.diff(self._samples, axis=0), axis=1)
        self._s = np.concatenate([[0.0], np.cumsum(steps)])
        self._heading = np.unwrap(np.arctan2(first[:, 1], first[:, 0]))
        speed = np.linalg.norm(first, axis=1)
        self._curvature = (first[:, 0] * second[:, 1] - first[:, 1] * second[:, 0]) / (
            speed**3
        )
        self._tree = cKDTree(self._samples)

    @property
    def length(self) -> float:
        return float(self._s[-1])

    @property
    def samples(self) -> np.ndarray:
        return self._samples

    @property
    def max_curvature(self) -> float:
        return float(np.max(np.abs(self._curvature)))

    def heading_at(self, s: np.ndarray | float) -> np.ndarray:
        return np.interp(s, self._s, self._heading)

    def point_at(
        self, s: np.ndarray | float, lateral: np.ndarray | float = 0.0
    ) -> np.ndarray:
        """World point at arc-length ``s`` shifted ``lateral`` metres to the left."""
        s = np.asarray(s, dtype=float)
        x = np.interp(s, self._s, self._samples[:, 0])
        y = np.interp(s, self._s, self._samples[:, 1])
        heading = self.heading_at(s)
        lateral = np.asarray(lateral, dtype=float)
        return np.stack(
            [x - lateral * np.sin(heading), y + lateral * np.cos(heading)], axis=-1
        )

    def pose_at(self, s: float, lateral: float = 0.0) -> Pose2D:
        x, y = self.point_at(s, lateral)
        return Pose2D(x=float(x), y=float(y), theta=float(self.heading_at(s)))

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Road coordinates of world points.

        Returns:
            Arc-length and signed lateral offset (left positive) of the nearest
            centre-line sample.
        """
        points = np.asarray(points, dtype=float)
        _, index = self._tree.query(points.reshape(-1, 2))
        heading = self._heading[index]
        offset = points.reshape(-1, 2) - self._samples[index]
        lateral = -np.sin(heading) * offset[:, 0] + np.cos(heading) * offset[:, 1]
        along = np.cos(heading) * offset[:, 0] + np.sin(heading) * offset[:, 1]
        s = self._s[index] + along
        shape = points.shape[:-1]
        return s.reshape(shape), lateral.reshape(shape)

    def resolve_obstacles(self, specs: list[ObstacleSpec]) -> list[Circle]:
        """Turn scenario placements into world-frame circles."""
        circles = []
        for spec in specs:
            if spec.s is not None:
                x, y = self.point_at(spec.s, spec.lateral)
            else:
                x, y = spec.x, spec.y
            circles.append(Circle(x=float(x), y=float(y), radius=spec.radius))
        return circles

    def bounds_points(self) -> np.ndarray:
        """Samples of both outer lines, used to size the global costmap."""
        offset = self.lane_width
        left = self.point_at(self._s, offset)
        right = self.point_at(self._s, -offset)
        return np.vstack([left, right])
