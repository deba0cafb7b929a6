"""
Artificial potential field planner.

The goal exerts an attractive force ``k_att * (goal - p)``; every obstacle
within ``rho0`` of the vehicle pushes back with the inverse-barrier force
``k_rep * (1/rho - 1/rho0) / rho**2`` along the outward direction. Speed drops
with the number of nearby obstacles. When the attraction and the repulsion
cancel or oppose each other the planner injects a sideways escape force for a
fixed number of ticks.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from core.planners.base import (
    LocalPlanner,
    PlannerOutput,
    PlanningContext,
    VehicleState,
)
from core.schemas import (
    ApfConfig,
    ControlCommand,
    Point,
    Pose2D,
    VehicleParams,
    wrap_angle,
)

logger = logging.getLogger(__name__)

RHO_FLOOR = 0.05
"""Clearances below this are clamped before evaluating the repulsion."""

_ZERO = np.zeros(2)


@dataclass(frozen=True)
class ForceState:
    """
    Force field at the vehicle position.

    Attributes:
        f_att: Attractive force.
        f_rep: Sum of the repulsive forces.
        f_escape: Escape force, zero unless an escape is active.
        n_obstacles: Obstacles within ``rho0``.
        in_local_min: Whether a local minimum was detected this tick.
        escape_ticks_left: Remaining ticks of the held escape.
        escape_side: ``+1`` for left, ``-1`` for right, ``0`` when idle.
        collided: Whether the vehicle position lies inside an obstacle.
    """

    f_att: np.ndarray
    f_rep: np.ndarray
    f_escape: np.ndarray = _ZERO
    n_obstacles: int = 0
    in_local_min: bool = False
    escape_ticks_left: int = 0
    escape_side: int = 0
    collided: bool = False

    @property
    def net(self) -> np.ndarray:
        return self.f_att + self.f_rep + self.f_escape

    def to_dict(self) -> dict:
        return {
            "f_att": self.f_att.tolist(),
            "f_rep": self.f_rep.tolist(),
            "f_escape": self.f_escape.tolist(),
            "n_obstacles": self.n_obstacles,
            "in_local_min": self.in_local_min,
            "escape_ticks_left": self.escape_ticks_left,
        }


def repulsion(clearance: np.ndarray, cfg: ApfConfig) -> np.ndarray:
    """Magnitude of the repulsive force for each clearance."""
    rho = np.maximum(np.asarray(clearance, dtype=float), RHO_FLOOR)
    magnitude = cfg.k_rep * (1.0 / rho - 1.0 / cfg.rho0) / rho**2
    return np.where(np.asarray(clearance) <= cfg.rho0, np.maximum(magnitude, 0.0), 0.0)


def forces(
    pose: Pose2D, goal: Point, obstacles: np.ndarray, cfg: ApfConfig
) -> ForceState:
    """
    Attractive and repulsive forces at the vehicle position.

    Args:
        pose: Vehicle pose; only the position is used.
        goal: World goal point.
        obstacles: Obstacle circles as ``(m, 3)`` rows.
        cfg: Field gains.

    Returns:
        The force state with ``collided`` set when the position is inside an
        obstacle.
    """
    position = np.array([pose.x, pose.y])
    f_att = cfg.k_att * (np.asarray(goal, dtype=float) - position)
    obstacles = np.asarray(obstacles, dtype=float).reshape(-1, 3)
    if len(obstacles) == 0:
        return ForceState(f_att=f_att, f_rep=np.zeros(2))

    outward = position - obstacles[:, :2]
    distance = np.hypot(outward[:, 0], outward[:, 1])
    clearance = distance - obstacles[:, 2]
    units = outward / np.where(distance > 0, distance, 1.0)[:, None]
    f_rep = (repulsion(clearance, cfg)[:, None] * units).sum(axis=0)
    return ForceState(
        f_att=f_att,
        f_rep=f_rep,
        n_obstacles=int(np.count_nonzero(clearance <= cfg.rho0)),
        collided=bool(np.any(clearance <= 0.0)),
    )


def speed_law(n_obstacles: int, cfg: ApfConfig) -> float:
    """``clamp(v_max - k_gain * n_obstacles, v_min, v_max)``."""
    return min(max(cfg.v_max - cfg.k_gain * n_obstacles, cfg.v_min), cfg.v_max)


def detect_local_min(fs: ForceState, dist_to_goal: float, cfg: ApfConfig) -> bool:
    """
    Whether the vehicle is trapped short of the goal.

    True when the goal is still out of tolerance and either the net force has
    vanished or the repulsion points against the attraction.
    """
    if dist_to_goal <= cfg.goal_tolerance:
        return False
    if np.hypot(*(fs.f_att + fs.f_rep)) < cfg.eps_force:
        return True
    att_norm = float(np.hypot(*fs.f_att))
    rep_norm = float(np.hypot(*fs.f_rep))
    if att_norm == 0.0 or rep_norm == 0.0:
        return False
    return float(fs.f_att @ fs.f_rep) / (att_norm * rep_norm) < cfg.antiparallel_cos


def _escape_side(
    pose: Pose2D, f_att: np.ndarray, obstacles: np.ndarray, cfg: ApfConfig
) -> int:
    """Side with fewer obstacles within ``rho0``; left on ties."""
    position = np.array([pose.x, pose.y])
    rel = obstacles[:, :2] - position
    near = np.hypot(rel[:, 0], rel[:, 1]) - obstacles[:, 2] <= cfg.rho0
    cross = f_att[0] * rel[near, 1] - f_att[1] * rel[near, 0]
    left = int(np.count_nonzero(cross > 0))
    right = int(np.count_nonzero(cross < 0))
    return -1 if right < left else 1


def plan_step_apf(
    state: VehicleState,
    goal: Point,
    obstacles: np.ndarray,
    cfg: ApfConfig,
    params: VehicleParams,
    prev: ForceState | None = None,
) -> tuple[ControlCommand, ForceState]:
    """
    One APF decision.

    Args:
        state: Current vehicle state.
        goal: World goal point.
        obstacles: Obstacle circles as ``(m, 3)`` rows.
        cfg: Field gains, speed law and escape settings.
        params: Vehicle limits.
        prev: Force state of the previous tick, carrying the escape hold.

    Returns:
        The command and the new force state.
    """
    pose = state.pose
    obstacles = np.asarray(obstacles, dtype=float).reshape(-1, 3)
    fs = forces(pose, goal, obstacles, cfg)
    dist_to_goal = float(np.hypot(goal[0] - pose.x, goal[1] - pose.y))
    trapped = cfg.escape_enabled and detect_local_min(fs, dist_to_goal, cfg)

    side = 0
    ticks_left = 0
    if trapped:
        side = _escape_side(pose, fs.f_att, obstacles, cfg)
        if prev is not None and prev.escape_ticks_left > 0:
            side = prev.escape_side
        ticks_left = cfg.escape_hold
    elif cfg.escape_enabled and prev is not None and prev.escape_ticks_left > 0:
        side = prev.escape_side
        ticks_left = prev.escape_ticks_left - 1

    f_escape = np.zeros(2)
    if side != 0 and (trapped or ticks_left > 0):
        att_norm = float(np.hypot(*fs.f_att))
        if att_norm > 0.0:
            unit = fs.f_att / att_norm
            perpendicular = side * np.array([-unit[1], unit[0]])
            f_escape = cfg.escape_gain * att_norm * perpendicular

    fs = ForceState(
        f_att=fs.f_att,
        f_rep=fs.f_rep,
        f_escape=f_escape,
        n_obstacles=fs.n_obstacles,
        in_local_min=trapped,
        escape_ticks_left=ticks_left,
        escape_side=side if f_escape.any() else 0,
        collided=fs.collided,
    )
    if fs.collided:
        return ControlCommand.stop(), fs
    if dist_to_goal <= cfg.goal_tolerance:
        return ControlCommand.stop(), fs

    net = fs.net
    target = math.atan2(net[1], net[0])
    gamma = cfg.k_heading * wrap_angle(target - pose.theta)
    gamma = min(max(gamma, -params.gamma_max), params.gamma_max)
    v = min(speed_law(fs.n_obstacles, cfg), params.v_max)
    return ControlCommand(v=v, gamma=gamma), fs


class ApfPlanner(LocalPlanner):
    """APF planner carrying the escape hysteresis between ticks."""

    name = "apf"

    def __init__(self, cfg: ApfConfig, vehicle: VehicleParams):
        super().__init__(vehicle)
        self.cfg = cfg
        self._previous: ForceState | None = None

    def reset(self) -> None:
        self._previous = None

    def plan(self, ctx: PlanningContext) -> PlannerOutput:
        command, fs = plan_step_apf(
            ctx.state,
            ctx.goal.position,
            ctx.obstacles,
            self.cfg,
            self.vehicle,
            prev=self._previous,
        )
        if fs.in_local_min and not (self._previous and self._previous.in_local_min):
            logger.debug(
                "APF local minimum detected, escaping to side %d", fs.escape_side
            )
        self._previous = fs
        return PlannerOutput(
            command=command,
            local_plan=np.array([ctx.state.pose.position, ctx.goal.position]),
            internals=fs.to_dict(),
        )
