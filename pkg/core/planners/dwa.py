"""
Dynamic Window Approach.

Each tick the planner samples ``(v, omega)`` pairs from the velocities
reachable within one control period, rolls every pair forward as a constant
arc, discards rollouts that touch a lethal cell or leave the local window and
executes the best scoring survivor. Only forward speeds and Ackermann-feasible
yaw rates (``|omega| <= v * tan(gamma_max) / L``) are sampled.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from core.costmap import Costmap
from core.global_planner import GlobalPath
from core.planners.base import (
    LocalPlanner,
    PlannerOutput,
    PlanningContext,
    VehicleState,
)
from core.schemas import ControlCommand, DwaConfig, Point, Pose2D, VehicleParams
from core.vehicle import footprint_centers, integrate_arc

logger = logging.getLogger(__name__)

_TOL = 1e-9


@dataclass(frozen=True)
class VelocityWindow:
    """Rectangle of admissible ``(v, omega)`` commands."""

    v_min: float
    v_max: float
    omega_min: float
    omega_max: float

    def contains(self, v: float, omega: float, tol: float = _TOL) -> bool:
        return (
            self.v_min - tol <= v <= self.v_max + tol
            and self.omega_min - tol <= omega <= self.omega_max + tol
        )


@dataclass(frozen=True)
class ScoredTrajectory:
    """
    One evaluated candidate.

    Attributes:
        command: The ``(v, omega)`` pair.
        states: Poses ``(k, 3)`` sampled every ``sim_granularity``.
        score: Weighted sum of the four criteria.
        collides: Whether any footprint circle touches a lethal cell.
        terms: The unweighted goal, path, obstacle and speed terms.
    """

    command: tuple[float, float]
    states: np.ndarray
    score: float
    collides: bool
    terms: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)


def _control_period(cfg: DwaConfig) -> float:
    if cfg.control_period is None:
        raise ValueError("DwaConfig.control_period must be set before planning")
    return cfg.control_period


def dynamic_window(
    current: tuple[float, float], params: VehicleParams, cfg: DwaConfig
) -> VelocityWindow:
    """
    Velocities reachable within one control period.

    Args:
        current: Executed ``(v, omega)``.
        params: Vehicle limits; ``omega_max`` derives from the steering limit.
        cfg: Planner configuration providing ``control_period``.

    Returns:
        The intersection of the absolute limits with the acceleration window.
    """
    v, omega = current
    period = _control_period(cfg)
    omega_limit = params.omega_max
    v_lo = max(0.0, v - params.a_max * period)
    v_hi = min(params.v_max, v + params.a_max * period)
    w_lo = max(-omega_limit, omega - params.alpha_max * period)
    w_hi = min(omega_limit, omega + params.alpha_max * period)
    if v_lo > v_hi:
        v_lo = v_hi = min(max(v, 0.0), params.v_max)
    if w_lo > w_hi:
        w_lo = w_hi = min(max(omega, -omega_limit), omega_limit)
    return VelocityWindow(v_lo, v_hi, w_lo, w_hi)


def sample_commands(
    window: VelocityWindow, params: VehicleParams, cfg: DwaConfig
) -> np.ndarray:
    """
    Candidate grid over the window.

    For every speed sample the yaw-rate samples span the part of the window
    reachable under the steering limit; ``omega = 0`` is always included when
    that part contains it.

    Returns:
        Unique ``(v, omega)`` rows of shape ``(n, 2)``.
    """
    curvature_limit = math.tan(params.gamma_max) / params.wheelbase
    speeds = np.linspace(window.v_min, window.v_max, cfg.vx_samples)
    rows = []
    for v in speeds:
        lo = max(window.omega_min, -v * curvature_limit)
        hi = min(window.omega_max, v * curvature_limit)
        if lo > hi + _TOL:
            continue
        hi = max(lo, hi)
        omegas = np.linspace(lo, hi, cfg.vth_samples)
        if lo <= 0.0 <= hi:
            omegas[np.argmin(np.abs(omegas))] = 0.0
        rows.append(np.column_stack([np.full_like(omegas, v), omegas]))
    if not rows:
        return np.empty((0, 2))
    return np.unique(np.vstack(rows), axis=0)


def _times(cfg: DwaConfig) -> np.ndarray:
    n = int(math.floor(cfg.sim_time / cfg.sim_granularity + _TOL))
    return cfg.sim_granularity * np.arange(n + 1)


def rollout_batch(commands: np.ndarray, pose: Pose2D, cfg: DwaConfig) -> np.ndarray:
    """Constant-command arcs for every row of ``commands``, shape ``(n, k, 3)``."""
    commands = np.asarray(commands, dtype=float).reshape(-1, 2)
    t = _times(cfg)[None, :]
    x, y, theta = integrate_arc(
        pose.x, pose.y, pose.theta, commands[:, :1], commands[:, 1:], t
    )
    return np.stack([x, y, theta], axis=-1)


def rollout(
    cmd: tuple[float, float], pose: Pose2D, cfg: DwaConfig, params: VehicleParams
) -> np.ndarray:
    """
    Poses of a constant ``(v, omega)`` arc at ``t = k * sim_granularity``.

    Returns:
        Array of shape ``(k, 3)`` holding ``x, y, theta``.
    """
    return rollout_batch(np.asarray([cmd], dtype=float), pose, cfg)[0]


def _score_batch(
    commands: np.ndarray,
    states: np.ndarray,
    interim_goal: Point,
    global_path: GlobalPath | None,
    local_map: Costmap,
    cfg: DwaConfig,
    params: VehicleParams,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised scoring; returns ``(scores, collides, terms)``."""
    goal = np.asarray(interim_goal, dtype=float)
    end = states[:, -1, :2]
    f_goal = 1.0 / (1.0 + np.linalg.norm(end - goal, axis=-1))

    if global_path is not None and len(global_path):
        gaps = np.linalg.norm(
            states[:, :, None, :2] - global_path.waypoints[None, None, :, :], axis=-1
        )
        f_path = 1.0 / (1.0 + gaps.min(axis=-1).mean(axis=-1))
    else:
        f_path = np.ones(len(states))

    inflation_radius = (
        local_map.inflation.inflation_radius if local_map.inflation is not None else 0.0
    )
    centers, radius = footprint_centers(
        states[..., 0], states[..., 1], states[..., 2], params
    )
    # states off the window are unknown and count as lethal
    distance = local_map.distance_at(centers, outside=0.0)
    # lethal squares can reach res*sqrt(2) closer than the cell-centre distance
    collides = (distance < radius + local_map.resolution * math.sqrt(2.0)).any(
        axis=(1, 2)
    )
    clearance = np.clip((distance - radius).min(axis=(1, 2)), 0.0, None)
    if inflation_radius > 0:
        f_obs = np.minimum(clearance, inflation_radius) / inflation_radius
    else:
        f_obs = (clearance > 0).astype(float)

    f_speed = np.clip(commands[:, 0] / params.v_max, 0.0, 1.0)
    terms = np.column_stack([f_goal, f_path, f_obs, f_speed])
    weights = np.array(
        [cfg.weight_goal, cfg.weight_path, cfg.weight_obstacle, cfg.weight_speed]
    )
    return terms @ weights, collides, terms


def score(
    traj: tuple[tuple[float, float], np.ndarray],
    interim_goal: Point,
    global_path: GlobalPath | None,
    local_map: Costmap,
    cfg: DwaConfig,
    params: VehicleParams,
) -> ScoredTrajectory:
    """
    Score a single rollout.

    Args:
        traj: The command and its rollout states.
        interim_goal: World goal point of the local planner.
        global_path: Roadmap the rollout should stay close to.
        local_map: Inflated local costmap.
        cfg: Planner weights.
        params: Vehicle geometry.
    """
    cmd, states = traj
    commands = np.asarray([cmd], dtype=float)
    batch = np.asarray(states, dtype=float)[None]
    scores, collides, terms = _score_batch(
        commands, batch, interim_goal, global_path, local_map, cfg, params
    )
    return ScoredTrajectory(
        command=(float(cmd[0]), float(cmd[1])),
        states=np.asarray(states),
        score=float(scores[0]),
        collides=bool(collides[0]),
        terms=tuple(float(t) for t in terms[0]),
    )


def best_trajectory(
    state: VehicleState,
    interim_goal: Point,
    global_path: GlobalPath | None,
    local_map: Costmap,
    cfg: DwaConfig,
    params: VehicleParams,
) -> tuple[ScoredTrajectory | None, int]:
    """
    Highest scoring non-colliding candidate.

    Ties are broken by higher speed, then by smaller ``|omega|``.

    Returns:
        The winner (``None`` when every candidate collides) and the number of
        candidates evaluated.
    """
    window = dynamic_window((state.v, state.omega), params, cfg)
    commands = sample_commands(window, params, cfg)
    if len(commands) == 0:
        return None, 0
    states = rollout_batch(commands, state.pose, cfg)
    scores, collides, terms = _score_batch(
        commands, states, interim_goal, global_path, local_map, cfg, params
    )
    free = np.flatnonzero(~collides)
    if free.size == 0:
        return None, len(commands)
    order = np.lexsort(
        (np.abs(commands[free, 1]), -commands[free, 0], -scores[free])
    )
    best = int(free[order[0]])
    return (
        ScoredTrajectory(
            command=(float(commands[best, 0]), float(commands[best, 1])),
            states=states[best],
            score=float(scores[best]),
            collides=False,
            terms=tuple(float(t) for t in terms[best]),
        ),
        len(commands),
    )


def to_ackermann(v: float, omega: float, params: VehicleParams) -> ControlCommand:
    """Convert ``(v, omega)`` into ``(v, gamma)`` with ``gamma = atan(L*omega/v)``."""
    if v <= 0.0:
        return ControlCommand(v=max(v, 0.0), gamma=0.0)
    gamma = math.atan(params.wheelbase * omega / v)
    gamma = min(max(gamma, -params.gamma_max), params.gamma_max)
    return ControlCommand(v=min(v, params.v_max), gamma=gamma)


def plan_step(
    state: VehicleState,
    interim_goal: Point,
    global_path: GlobalPath | None,
    local_map: Costmap,
    cfg: DwaConfig,
    params: VehicleParams,
) -> ControlCommand:
    """
    One DWA decision.

    Returns:
        The Ackermann form of the best command, or the stop command when every
        rollout collides.
    """
    best, _ = best_trajectory(state, interim_goal, global_path, local_map, cfg, params)
    if best is None:
        return ControlCommand.stop()
    return to_ackermann(*best.command, params)


class DwaPlanner(LocalPlanner):
    """
    Stateless DWA planner bound to a configuration.

    Args:
        cfg: DWA configuration; an unset ``control_period`` takes ``tick``.
        vehicle: Vehicle limits.
        tick: Simulation period in seconds.
    """

    name = "dwa"

    def __init__(self, cfg: DwaConfig, vehicle: VehicleParams, tick: float):
        super().__init__(vehicle)
        if cfg.control_period is None:
            cfg = cfg.model_copy(update={"control_period": tick})
        self.cfg = cfg

    def plan(self, ctx: PlanningContext) -> PlannerOutput:
        best, n_candidates = best_trajectory(
            ctx.state,
            ctx.goal.position,
            ctx.global_path,
            ctx.local_map,
            self.cfg,
            self.vehicle,
        )
        if best is None:
            logger.debug("DWA: all %d rollouts collide, stopping", n_candidates)
            return PlannerOutput(
                command=ControlCommand.stop(),
                internals={"score": None, "candidates": n_candidates},
            )
        return PlannerOutput(
            command=to_ackermann(*best.command, self.vehicle),
            local_plan=best.states[:, :2],
            internals={
                "score": best.score,
                "terms": list(best.terms),
                "v": best.command[0],
                "omega": best.command[1],
                "candidates": n_candidates,
            },
        )
