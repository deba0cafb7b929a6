"""
Simplified timed elastic band.

A band is a chain of poses with a time interval between consecutive poses.
Its objective adds the total time to quadratic exterior penalties for speed,
acceleration, turning radius, obstacle clearance and non-holonomic
consistency. The optimizer is a finite-difference gradient descent with a
diagonal curvature scaling and a backtracking line search; band resizing keeps
the time intervals close to ``dt_ref``.

To get out of local optima the planner optimizes the incumbent band together
with detours passing left and right of the nearest blocking obstacle and
keeps the cheapest feasible one.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from core.errors import OptimizationDivergedError
from core.global_planner import GlobalPath
from core.planners.base import (
    LocalPlanner,
    PlannerOutput,
    PlanningContext,
    VehicleState,
)
from core.schemas import ControlCommand, Pose2D, TebConfig, VehicleParams, wrap_angle
from core.vehicle import footprint_offsets, wrap_angles

logger = logging.getLogger(__name__)

DT_MIN = 1e-3
"""Lower bound of every time interval."""

FD_STEP = 1e-5
_CURVATURE_FLOOR = 1.0
_MAX_STEP = 0.5
_ARMIJO = 1e-4
_MAX_BACKTRACKS = 40
_REL_TOL = 1e-6
_DETOUR_MARGIN = 0.1


@dataclass(frozen=True)
class ElasticBand:
    """
    Poses and time intervals of a band.

    Attributes:
        nodes: Array ``(n, 3)`` of ``x, y, theta``.
        dts: Array ``(n - 1,)`` of positive intervals in seconds.
        fixed_ends: Whether the first and last node are held fixed.
    """

    nodes: np.ndarray
    dts: np.ndarray
    fixed_ends: tuple[bool, bool] = (True, True)

    def __post_init__(self) -> None:
        if len(self.nodes) < 2 or len(self.dts) != len(self.nodes) - 1:
            raise ValueError("a band needs n >= 2 nodes and n - 1 intervals")

    @property
    def poses(self) -> list[Pose2D]:
        return [Pose2D(x=x, y=y, theta=t) for x, y, t in self.nodes.tolist()]

    @property
    def total_time(self) -> float:
        return float(np.sum(self.dts))

    def free_nodes(self) -> np.ndarray:
        n = len(self.nodes)
        index = np.arange(n)
        keep = np.ones(n, dtype=bool)
        keep[0] = not self.fixed_ends[0]
        keep[-1] = not self.fixed_ends[1]
        return index[keep]


@dataclass(frozen=True)
class TebResult:
    """Optimized candidate band with its label and evaluation."""

    band: ElasticBand
    objective: float
    label: str
    feasible: bool
    history: list[tuple[float, float]] = field(default_factory=list)


def _band_from_polyline(
    polyline: np.ndarray,
    start_theta: float,
    goal_theta: float,
    cfg: TebConfig,
    params: VehicleParams,
) -> ElasticBand:
    """Resample a polyline at ``dt_ref * v_max`` spacing into a band."""
    steps = np.linalg.norm(np.diff(polyline, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(steps)])
    length = float(arc[-1])
    if length < 1e-9:
        nodes = np.array(
            [
                [polyline[0, 0], polyline[0, 1], start_theta],
                [polyline[-1, 0], polyline[-1, 1], goal_theta],
            ]
        )
        return ElasticBand(nodes=nodes, dts=np.array([cfg.dt_ref]))

    spacing = cfg.dt_ref * params.v_max
    n_seg = max(1, math.ceil(length / spacing - 1e-9))
    n_seg = min(n_seg, cfg.max_nodes - 1)
    s = np.linspace(0.0, length, n_seg + 1)
    x = np.interp(s, arc, polyline[:, 0])
    y = np.interp(s, arc, polyline[:, 1])

    theta = np.empty(n_seg + 1)
    theta[0] = start_theta
    theta[-1] = goal_theta
    if n_seg > 1:
        theta[1:-1] = np.arctan2(y[2:] - y[:-2], x[2:] - x[:-2])
    nodes = np.column_stack([x, y, theta])
    seg = np.hypot(np.diff(x), np.diff(y))
    dts = np.maximum(seg / params.v_max, DT_MIN)
    return ElasticBand(nodes=nodes, dts=dts)


def seed_band(
    pose: Pose2D,
    goal: Pose2D,
    global_path: GlobalPath | None,
    cfg: TebConfig,
    params: VehicleParams,
) -> ElasticBand:
    """
    Initial band along the global path from ``pose`` to ``goal``.

    Nodes are spaced about ``dt_ref * v_max`` apart and every interval starts
    at ``segment_length / v_max``. Coincident endpoints give a two-node band
    with a single ``dt_ref`` interval.
    """
    start = np.array([pose.x, pose.y])
    end = np.array([goal.x, goal.y])
    interior = np.empty((0, 2))
    if global_path is not None and len(global_path) > 2:
        waypoints = global_path.waypoints
        first = int(np.argmin(np.linalg.norm(waypoints - start, axis=1)))
        last = int(np.argmin(np.linalg.norm(waypoints - end, axis=1)))
        if last > first + 1:
            interior = waypoints[first + 1 : last]
    polyline = np.vstack([start, interior, end])
    return _band_from_polyline(polyline, pose.theta, goal.theta, cfg, params)


def _objective_batch(
    nodes: np.ndarray,
    dts: np.ndarray,
    obstacles: np.ndarray,
    cfg: TebConfig,
    params: VehicleParams,
) -> np.ndarray:
    """Objective of a batch of bands ``(b, n, 3)`` / ``(b, n - 1)``."""
    delta = nodes[:, 1:, :2] - nodes[:, :-1, :2]
    seg = np.hypot(delta[..., 0], delta[..., 1])
    vel = seg / dts
    total = cfg.weight_time * dts.sum(axis=-1)

    over_speed = np.maximum(0.0, np.abs(vel) - params.v_max)
    total = total + cfg.weight_vel * np.sum(over_speed**2, axis=-1)

    if vel.shape[-1] >= 2:
        acc = (vel[:, 1:] - vel[:, :-1]) / (0.5 * (dts[:, 1:] + dts[:, :-1]))
        over_acc = np.maximum(0.0, np.abs(acc) - params.a_max)
        total = total + cfg.weight_acc * np.sum(over_acc**2, axis=-1)

    dtheta = wrap_angles(nodes[:, 1:, 2] - nodes[:, :-1, 2])
    turning = np.abs(dtheta) > 1e-9
    radius = seg / np.where(turning, np.abs(dtheta), 1.0)
    tight = np.where(turning, np.maximum(0.0, params.min_turn_radius - radius), 0.0)
    total = total + cfg.weight_turn_radius * np.sum(tight**2, axis=-1)

    if len(obstacles):
        gaps = np.linalg.norm(
            nodes[:, :, None, :2] - obstacles[None, None, :, :2], axis=-1
        )
        clearance = (gaps - obstacles[None, None, :, 2]).min(axis=-1)
        close = np.maximum(0.0, cfg.min_obstacle_dist - clearance)
        total = total + cfg.weight_obstacle * np.sum(close**2, axis=-1)

    moving = seg > 1e-9
    travel = np.arctan2(delta[..., 1], delta[..., 0])
    mean_heading = nodes[:, :-1, 2] + 0.5 * dtheta
    residual = np.where(moving, wrap_angles(travel - mean_heading), 0.0)
    total = total + cfg.weight_kinematics * np.sum(residual**2, axis=-1)
    return total


def band_objective(
    band: ElasticBand, obstacles: np.ndarray, cfg: TebConfig, params: VehicleParams
) -> float:
    """
    Weighted time plus penalty objective of a band.

    Args:
        band: Band to evaluate.
        obstacles: Obstacle circles as ``(m, 3)`` rows.
        cfg: Penalty weights.
        params: Vehicle limits.
    """
    obstacles = np.asarray(obstacles, dtype=float).reshape(-1, 3)
    value = _objective_batch(band.nodes[None], band.dts[None], obstacles, cfg, params)
    return float(value[0])


class _Packing:
    """Maps a band to the flat vector of free coordinates and back."""

    def __init__(self, band: ElasticBand):
        self.base = band
        self.free = band.free_nodes()
        self.n_node_vars = 3 * len(self.free)

    def pack(self, band: ElasticBand) -> np.ndarray:
        return np.concatenate([band.nodes[self.free].ravel(), band.dts])

    def unpack(self, vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        vectors = np.atleast_2d(vectors)
        nodes = np.repeat(self.base.nodes[None], len(vectors), axis=0)
        nodes[:, self.free, :] = vectors[:, : self.n_node_vars].reshape(
            len(vectors), len(self.free), 3
        )
        return nodes, vectors[:, self.n_node_vars :]

    def band(self, vector: np.ndarray) -> ElasticBand:
        nodes, dts = self.unpack(vector)
        return ElasticBand(
            nodes=nodes[0], dts=dts[0].copy(), fixed_ends=self.base.fixed_ends
        )


def _evaluate(
    packing: _Packing,
    vectors: np.ndarray,
    obstacles: np.ndarray,
    cfg: TebConfig,
    params: VehicleParams,
) -> np.ndarray:
    nodes, dts = packing.unpack(vectors)
    return _objective_batch(nodes, dts, obstacles, cfg, params)


def finite_difference_gradient(
    band: ElasticBand,
    obstacles: np.ndarray,
    cfg: TebConfig,
    params: VehicleParams,
    h: float = FD_STEP,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Central-difference gradient and curvature over the free coordinates.

    All perturbed bands are evaluated in one batched objective call.

    Returns:
        The gradient and the diagonal second differences.
    """
    obstacles = np.asarray(obstacles, dtype=float).reshape(-1, 3)
    packing = _Packing(band)
    x = packing.pack(band)
    eye = np.eye(len(x)) * h
    batch = np.vstack([x[None], x + eye, x - eye])
    values = _evaluate(packing, batch, obstacles, cfg, params)
    f0, plus, minus = values[0], values[1 : len(x) + 1], values[len(x) + 1 :]
    gradient = (plus - minus) / (2.0 * h)
    curvature = (plus - 2.0 * f0 + minus) / (h * h)
    return gradient, curvature


def _midpoint(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    theta = a[2] + 0.5 * wrap_angle(float(b[2] - a[2]))
    return np.array([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), wrap_angle(theta)])


def resize_band(band: ElasticBand, cfg: TebConfig) -> ElasticBand:
    """
    Insert or remove nodes so intervals stay near ``dt_ref``.

    An interval above ``dt_ref + dt_hysteresis`` is split at the midpoint; an
    interval below ``dt_ref - dt_hysteresis`` absorbs the next interval when
    the merged interval stays under the upper bound. Endpoints never move.
    """
    upper = cfg.dt_ref + cfg.dt_hysteresis
    lower = cfg.dt_ref - cfg.dt_hysteresis
    nodes = [row for row in band.nodes]
    dts = band.dts.tolist()
    i = 0
    while i < len(dts):
        dt = dts[i]
        if dt > upper and len(nodes) < cfg.max_nodes:
            nodes.insert(i + 1, _midpoint(nodes[i], nodes[i + 1]))
            dts[i : i + 1] = [dt / 2.0, dt / 2.0]
            continue
        if dt < lower and i + 1 < len(dts) and dt + dts[i + 1] <= upper:
            del nodes[i + 1]
            dts[i : i + 2] = [dt + dts[i + 1]]
            continue
        i += 1
    return ElasticBand(
        nodes=np.array(nodes), dts=np.array(dts), fixed_ends=band.fixed_ends
    )


def optimize(
    band: ElasticBand,
    obstacles: np.ndarray,
    cfg: TebConfig,
    params: VehicleParams,
    trace: list[tuple[float, float]] | None = None,
) -> ElasticBand:
    """
    Improve a band by scaled gradient descent with band resizing.

    Every round computes a central-difference gradient, scales each
    coordinate by its positive curvature estimate, and backtracks until the
    Armijo condition holds. Intervals are not allowed to grow past
    ``dt_ref + dt_hysteresis``; a longer segment has to be split instead. A
    resize is kept only when it does not raise the objective, so the
    objective never increases from one round to the next.

    Args:
        band: Seed band.
        obstacles: Obstacle circles as ``(m, 3)`` rows.
        cfg: Weights and resizing parameters.
        params: Vehicle limits.
        trace: Optional list receiving the ``(before, after)`` objective pair
            of every round; each pair starts where the previous one ended.

    Returns:
        The optimized band.

    Raises:
        OptimizationDivergedError: If the objective or its gradient is not
            finite.
    """
    obstacles = np.asarray(obstacles, dtype=float).reshape(-1, 3)
    upper = cfg.dt_ref + cfg.dt_hysteresis
    current = band
    value = band_objective(current, obstacles, cfg, params)
    if not math.isfinite(value):
        raise OptimizationDivergedError(f"seed band objective is {value}")

    for iteration in range(cfg.max_iterations):
        gradient, curvature = finite_difference_gradient(
            current, obstacles, cfg, params
        )
        if not np.all(np.isfinite(gradient)):
            raise OptimizationDivergedError(f"non-finite gradient at round {iteration}")
        if not np.any(gradient):
            break
        direction = -gradient / np.maximum(curvature, _CURVATURE_FLOOR)
        largest = np.max(np.abs(direction))
        if largest > _MAX_STEP:
            direction *= _MAX_STEP / largest

        packing = _Packing(current)
        x = packing.pack(current)
        n_node_vars = packing.n_node_vars
        dt_cap = np.maximum(x[n_node_vars:], upper)
        step = 1.0
        accepted = None
        for _ in range(_MAX_BACKTRACKS):
            candidate = x + step * direction
            candidate[n_node_vars:] = np.clip(
                candidate[n_node_vars:], DT_MIN, dt_cap
            )
            new_value = float(_evaluate(packing, candidate, obstacles, cfg, params)[0])
            if not math.isfinite(new_value):
                raise OptimizationDivergedError(
                    f"objective diverged at round {iteration}"
                )
            if new_value <= value + _ARMIJO * float(gradient @ (candidate - x)):
                accepted = candidate
                break
            step *= 0.5
        if accepted is None or new_value >= value:
            break

        improvement = (value - new_value) / max(abs(value), 1e-12)
        before = value
        stepped = packing.band(accepted)
        resized = resize_band(stepped, cfg)
        resized_value = band_objective(resized, obstacles, cfg, params)
        if resized_value <= new_value:
            current, value = resized, resized_value
        else:
            current, value = stepped, new_value
        if trace is not None:
            trace.append((before, value))
        if improvement < _REL_TOL:
            break

    logger.debug(
        "TEB band optimized: %d nodes, objective %.4f", len(current.nodes), value
    )
    return current


def band_clearance(band: ElasticBand, obstacles: np.ndarray) -> float:
    """Smallest distance from a node or segment midpoint to an obstacle surface."""
    obstacles = np.asarray(obstacles, dtype=float).reshape(-1, 3)
    if len(obstacles) == 0:
        return math.inf
    points = np.vstack(
        [band.nodes[:, :2], 0.5 * (band.nodes[1:, :2] + band.nodes[:-1, :2])]
    )
    gaps = np.linalg.norm(points[:, None, :] - obstacles[None, :, :2], axis=-1)
    return float((gaps - obstacles[None, :, 2]).min())


def first_segment_command(band: ElasticBand, params: VehicleParams) -> ControlCommand:
    """
    Command that drives the first band segment.

    The speed is the segment length over its interval and the steering angle
    follows from the segment curvature, ``tan(gamma) = L * dtheta / length``;
    both are clamped to the vehicle limits.
    """
    start, nxt = band.nodes[0], band.nodes[1]
    delta = nxt[:2] - start[:2]
    length = float(np.hypot(delta[0], delta[1]))
    if length < 1e-6:
        return ControlCommand.stop()
    if delta[0] * math.cos(start[2]) + delta[1] * math.sin(start[2]) < 0.0:
        return ControlCommand.stop()
    v = min(length / float(band.dts[0]), params.v_max)
    dtheta = wrap_angle(float(nxt[2] - start[2]))
    gamma = math.atan(params.wheelbase * dtheta / length)
    gamma = min(max(gamma, -params.gamma_max), params.gamma_max)
    return ControlCommand(v=v, gamma=gamma)


def _blocking_obstacle(
    start: np.ndarray, end: np.ndarray, obstacles: np.ndarray, cfg: TebConfig
) -> np.ndarray | None:
    """Obstacle closest to the start among those near the start-goal segment."""
    axis = end - start
    length = float(np.hypot(axis[0], axis[1]))
    if length < 1e-9 or len(obstacles) == 0:
        return None
    unit = axis / length
    rel = obstacles[:, :2] - start
    along = np.clip(rel @ unit, 0.0, length)
    closest = start + along[:, None] * unit
    gap = np.linalg.norm(obstacles[:, :2] - closest, axis=1) - obstacles[:, 2]
    blocking = np.flatnonzero(gap < cfg.min_obstacle_dist)
    if blocking.size == 0:
        return None
    return obstacles[blocking[np.argmin(along[blocking])]]


def detour_bands(
    pose: Pose2D,
    goal: Pose2D,
    obstacles: np.ndarray,
    cfg: TebConfig,
    params: VehicleParams,
) -> list[tuple[str, ElasticBand]]:
    """Bands passing left and right of the nearest blocking obstacle."""
    obstacles = np.asarray(obstacles, dtype=float).reshape(-1, 3)
    start = np.array([pose.x, pose.y])
    end = np.array([goal.x, goal.y])
    blocker = _blocking_obstacle(start, end, obstacles, cfg)
    if blocker is None:
        return []
    axis = (end - start) / np.linalg.norm(end - start)
    normal = np.array([-axis[1], axis[0]])
    offset = blocker[2] + cfg.min_obstacle_dist + _DETOUR_MARGIN
    bands = []
    for label, sign in (("left", 1.0), ("right", -1.0)):
        via = blocker[:2] + sign * offset * normal
        polyline = np.vstack([start, via, end])
        band = _band_from_polyline(polyline, pose.theta, goal.theta, cfg, params)
        bands.append((label, band))
    return bands


def _evaluate_candidates(
    candidates: list[tuple[str, ElasticBand]],
    obstacles: np.ndarray,
    cfg: TebConfig,
    params: VehicleParams,
) -> list[TebResult]:
    _, safety_radius = footprint_offsets(params)
    results = []
    diverged = 0
    for label, band in candidates:
        history: list[tuple[float, float]] = []
        try:
            optimized = optimize(band, obstacles, cfg, params, trace=history)
        except OptimizationDivergedError as exc:
            logger.warning("TEB %s band diverged: %s", label, exc)
            diverged += 1
            continue
        objective = band_objective(optimized, obstacles, cfg, params)
        feasible = math.isfinite(objective) and (
            band_clearance(optimized, obstacles) >= safety_radius
        )
        results.append(TebResult(optimized, objective, label, feasible, history))
    if candidates and diverged == len(candidates):
        raise OptimizationDivergedError("every candidate band diverged")
    return results


def _select(results: list[TebResult]) -> TebResult | None:
    """Cheapest feasible band; earlier candidates win exact ties."""
    feasible = [(r.objective, rank, r) for rank, r in enumerate(results) if r.feasible]
    if not feasible:
        return None
    return min(feasible, key=lambda item: (item[0], item[1]))[2]


def plan_step_teb(
    state: VehicleState,
    interim_goal: Pose2D,
    global_path: GlobalPath | None,
    obstacles: np.ndarray,
    cfg: TebConfig,
    params: VehicleParams,
    incumbent: ElasticBand | None = None,
) -> tuple[ControlCommand, TebResult | None]:
    """
    One TEB decision over the incumbent and the detour alternatives.

    Candidates are ranked incumbent, left, right; an alternative replaces the
    incumbent only with a strictly lower objective.

    Returns:
        The first-segment command of the selected band (the stop command when
        no band is feasible) and the selected result.
    """
    obstacles = np.asarray(obstacles, dtype=float).reshape(-1, 3)
    if incumbent is None:
        incumbent = seed_band(state.pose, interim_goal, global_path, cfg, params)
    candidates = [("incumbent", incumbent)]
    candidates += detour_bands(state.pose, interim_goal, obstacles, cfg, params)
    candidates = candidates[: cfg.n_alternatives]

    best = _select(_evaluate_candidates(candidates, obstacles, cfg, params))
    if best is None:
        return ControlCommand.stop(), None
    return first_segment_command(best.band, params), best


def reanchor(
    band: ElasticBand,
    pose: Pose2D,
    goal: Pose2D,
    cfg: TebConfig,
    params: VehicleParams,
) -> ElasticBand:
    """Warm start: keep the interior nodes still ahead of ``pose`` and re-seed."""
    start = np.array([pose.x, pose.y])
    heading = np.array([math.cos(pose.theta), math.sin(pose.theta)])
    interior = band.nodes[1:-1, :2]
    ahead = interior[(interior - start) @ heading > 0.05]
    end = np.array([goal.x, goal.y])
    if len(ahead):
        ahead = ahead[(end - ahead) @ heading > 0.05]
    polyline = np.vstack([start, ahead, end])
    return _band_from_polyline(polyline, pose.theta, goal.theta, cfg, params)


class TebPlanner(LocalPlanner):
    """
    TEB planner carrying the selected band from tick to tick.

    Args:
        cfg: TEB configuration.
        vehicle: Vehicle limits.
        goal_jump: Goal displacement in metres above which the carried band is
            dropped and re-seeded from the global path.
    """

    name = "teb"

    def __init__(self, cfg: TebConfig, vehicle: VehicleParams, goal_jump: float = 0.5):
        super().__init__(vehicle)
        self.cfg = cfg
        self.goal_jump = goal_jump
        self._band: ElasticBand | None = None

    def reset(self) -> None:
        self._band = None

    def plan(self, ctx: PlanningContext) -> PlannerOutput:
        incumbent = None
        if self._band is not None:
            previous_goal = self._band.nodes[-1, :2]
            jump = float(np.hypot(*(previous_goal - np.array(ctx.goal.position))))
            if jump <= self.goal_jump:
                incumbent = reanchor(
                    self._band, ctx.state.pose, ctx.goal, self.cfg, self.vehicle
                )
        command, result = plan_step_teb(
            ctx.state,
            ctx.goal,
            ctx.global_path,
            ctx.obstacles,
            self.cfg,
            self.vehicle,
            incumbent=incumbent,
        )
        if result is None:
            self._band = None
            logger.debug("TEB: no feasible band, stopping")
            return PlannerOutput(command=command, internals={"band": [], "label": None})
        self._band = result.band
        return PlannerOutput(
            command=command,
            local_plan=result.band.nodes[:, :2],
            internals={
                "band": result.band.nodes.tolist(),
                "dts": result.band.dts.tolist(),
                "objective": result.objective,
                "label": result.label,
            },
        )
