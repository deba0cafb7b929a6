"""
Ackermann bicycle kinematics.

The vehicle is reduced to a rear and a front wheel separated by the wheelbase
``L``; a steering angle ``gamma`` makes the rear axle follow a circle of
radius ``R = L / tan(gamma)``. Motion is integrated exactly along that arc, so
results do not depend on the integration step.
"""

import math

import numpy as np

from core.errors import InvalidStateError, LimitViolationError
from core.schemas import ControlCommand, Point, Pose2D, VehicleParams

ARC_EPS = 1e-9
"""Yaw rates at or below this magnitude are integrated as straight lines."""

_LIMIT_TOL = 1e-9


def wrap_angles(angles: np.ndarray) -> np.ndarray:
    """Vectorised :func:`core.schemas.wrap_angle`."""
    angles = np.asarray(angles, dtype=float)
    return np.pi - np.remainder(np.pi - angles, 2.0 * np.pi)


def turning_radius(params: VehicleParams, gamma: float) -> float:
    """
    Signed turning radius for a steering angle.

    Args:
        params: Vehicle geometry and limits.
        gamma: Steering angle in radians, positive to the left.

    Returns:
        ``L / tan(gamma)``, positive for left turns, or ``math.inf`` for a zero
        steering angle.

    Raises:
        LimitViolationError: If ``|gamma|`` exceeds ``gamma_max``.
    """
    if not math.isfinite(gamma):
        raise InvalidStateError(f"steering angle must be finite, got {gamma}")
    if abs(gamma) > params.gamma_max + _LIMIT_TOL:
        raise LimitViolationError(
            f"|gamma|={abs(gamma):.4f} exceeds gamma_max={params.gamma_max:.4f}"
        )
    if gamma == 0.0:
        return math.inf
    return params.wheelbase / math.tan(gamma)


def yaw_rate(v: float, gamma: float, params: VehicleParams) -> float:
    return v * math.tan(gamma) / params.wheelbase


def integrate_arc(
    x: np.ndarray | float,
    y: np.ndarray | float,
    theta: np.ndarray | float,
    v: np.ndarray | float,
    omega: np.ndarray | float,
    t: np.ndarray | float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Closed-form constant-command motion, broadcast over all arguments.

    Returns:
        The ``(x, y, theta)`` arrays after time ``t``; headings are wrapped.
    """
    x, y, theta, v, omega, t = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (x, y, theta, v, omega, t))
    )
    curved = np.abs(omega) > ARC_EPS
    safe_omega = np.where(curved, omega, 1.0)
    radius = v / safe_omega
    heading = theta + omega * t

    x_arc = x + radius * (np.sin(heading) - np.sin(theta))
    y_arc = y - radius * (np.cos(heading) - np.cos(theta))
    x_line = x + v * t * np.cos(theta)
    y_line = y + v * t * np.sin(theta)

    new_x = np.where(curved, x_arc, x_line)
    new_y = np.where(curved, y_arc, y_line)
    new_theta = wrap_angles(np.where(curved, heading, theta))
    return new_x, new_y, new_theta


def check_command(cmd: ControlCommand, params: VehicleParams) -> None:
    """
    Raise if a command is not finite or breaks the vehicle limits.

    Raises:
        InvalidStateError: For non-finite components.
        LimitViolationError: For speed or steering beyond the limits.
    """
    if not (math.isfinite(cmd.v) and math.isfinite(cmd.gamma)):
        raise InvalidStateError(f"command must be finite, got {cmd}")
    if abs(cmd.v) > params.v_max + _LIMIT_TOL:
        raise LimitViolationError(f"|v|={abs(cmd.v):.4f} exceeds v_max={params.v_max}")
    if abs(cmd.gamma) > params.gamma_max + _LIMIT_TOL:
        raise LimitViolationError(
            f"|gamma|={abs(cmd.gamma):.4f} exceeds gamma_max={params.gamma_max}"
        )


def clamp_command(cmd: ControlCommand, params: VehicleParams) -> ControlCommand:
    """Saturate a command to the vehicle limits."""
    return ControlCommand(
        v=min(max(cmd.v, -params.v_max), params.v_max),
        gamma=min(max(cmd.gamma, -params.gamma_max), params.gamma_max),
    )


def step(pose: Pose2D, cmd: ControlCommand, dt: float, params: VehicleParams) -> Pose2D:
    """
    Advance a pose by one constant command.

    Args:
        pose: Current pose.
        cmd: Command held for the whole interval.
        dt: Interval length in seconds.
        params: Vehicle geometry and limits.

    Returns:
        The pose after ``dt`` seconds of exact arc motion.

    Raises:
        InvalidStateError: If any input is non-finite or ``dt <= 0``.
        LimitViolationError: If the command breaks the vehicle limits.
    """
    if not pose.is_finite():
        raise InvalidStateError(f"pose must be finite, got {pose}")
    if not math.isfinite(dt) or dt <= 0:
        raise InvalidStateError(f"dt must be a positive finite number, got {dt}")
    check_command(cmd, params)

    if cmd.v == 0.0:
        return pose
    omega = yaw_rate(cmd.v, cmd.gamma, params)
    x, y, theta = integrate_arc(pose.x, pose.y, pose.theta, cmd.v, omega, dt)
    return Pose2D(x=float(x), y=float(y), theta=float(theta))


def footprint_offsets(params: VehicleParams) -> tuple[np.ndarray, float]:
    """
    Longitudinal offsets and common radius of the covering circles.

    The body is split along its length into two or three equal slices; each
    slice is covered by the circle through its corners.
    """
    n = 2 if params.body_length <= 2.0 * params.body_width else 3
    slice_length = params.body_length / n
    offsets = -params.body_length / 2.0 + slice_length * (np.arange(n) + 0.5)
    radius = math.hypot(slice_length / 2.0, params.body_width / 2.0)
    return offsets, radius


def footprint_centers(
    x: np.ndarray | float,
    y: np.ndarray | float,
    theta: np.ndarray | float,
    params: VehicleParams,
) -> tuple[np.ndarray, float]:
    """
    Circle centres for a batch of poses.

    Returns:
        An array of shape ``(*batch, n_circles, 2)`` and the circle radius.
    """
    offsets, radius = footprint_offsets(params)
    x = np.asarray(x, dtype=float)[..., None]
    y = np.asarray(y, dtype=float)[..., None]
    theta = np.asarray(theta, dtype=float)[..., None]
    cx = x + offsets * np.cos(theta)
    cy = y + offsets * np.sin(theta)
    return np.stack([cx, cy], axis=-1), radius


def footprint_circles(pose: Pose2D, params: VehicleParams) -> list[tuple[Point, float]]:
    """Circles whose union contains the rectangular body at ``pose``."""
    centers, radius = footprint_centers(pose.x, pose.y, pose.theta, params)
    return [((float(cx), float(cy)), radius) for cx, cy in centers]


def footprint_hits(
    pose: Pose2D, params: VehicleParams, obstacles: np.ndarray
) -> np.ndarray:
    """
    Indices of obstacle circles overlapping the footprint.

    Args:
        pose: Vehicle pose.
        params: Vehicle geometry.
        obstacles: Array of shape ``(n, 3)`` holding ``x, y, radius`` rows.
    """
    obstacles = np.asarray(obstacles, dtype=float).reshape(-1, 3)
    if obstacles.size == 0:
        return np.empty(0, dtype=int)
    centers, radius = footprint_centers(pose.x, pose.y, pose.theta, params)
    gaps = np.linalg.norm(centers[:, None, :] - obstacles[None, :, :2], axis=-1)
    overlap = gaps < radius + obstacles[None, :, 2]
    return np.flatnonzero(overlap.any(axis=0))


def transform_points(pose: Pose2D, points: np.ndarray) -> np.ndarray:
    """Map vehicle-frame points (forward, left) into the world frame."""
    points = np.asarray(points, dtype=float)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    wx = pose.x + c * points[..., 0] - s * points[..., 1]
    wy = pose.y + s * points[..., 0] + c * points[..., 1]
    return np.stack([wx, wy], axis=-1)


def inverse_transform_points(pose: Pose2D, points: np.ndarray) -> np.ndarray:
    """Map world points into the vehicle frame of ``pose``."""
    points = np.asarray(points, dtype=float)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    dx = points[..., 0] - pose.x
    dy = points[..., 1] - pose.y
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=-1)
