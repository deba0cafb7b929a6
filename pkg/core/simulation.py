"""
Closed-loop episode runner.

Every tick the runner renders the camera view, detects the red centre line,
picks the drive lane, builds the local costmap from the lidar-visible
obstacles, runs Dijkstra on it towards the lane target, hands the pruned path
to the selected local planner and advances the vehicle model. The run ends at
the finish arc-length, on the first collision or after ``max_ticks``.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from core.costmap import (
    INSCRIBED,
    Costmap,
    apply_soft_cost,
    as_circles,
    inflate,
    mark_obstacles,
    nearest_free_cell,
    visible_obstacles,
)
from core.errors import (
    InvalidEndpointError,
    OptimizationDivergedError,
    UnreachableGoalError,
)
from core.global_planner import GlobalPath, plan, prune_to_window
from core.lane_vision import LanePipeline, lookahead_distance, render_view
from core.planners import LocalPlanner, PlanningContext, VehicleState, build_planner
from core.schemas import (
    ControlCommand,
    LaneTarget,
    Point,
    Pose2D,
    RunMetrics,
    Scenario,
    TraceRecord,
)
from core.track import Track
from core.validation import ScenarioValidator
from core.vehicle import (
    clamp_command,
    footprint_hits,
    inverse_transform_points,
    step,
    transform_points,
    yaw_rate,
)

logger = logging.getLogger(__name__)

HOME = "home"
PASSING = "passing"


@dataclass(frozen=True)
class LaneReference:
    """
    Last accepted lane fit together with the pose it was observed from.

    Lane geometry is expressed in the frame of ``pose`` so a held fit stays
    anchored to the world while the vehicle moves on.
    """

    target: LaneTarget
    pose: Pose2D

    def lateral(self, forward: np.ndarray) -> np.ndarray:
        return np.polyval(self.target.poly, forward)

    def points(self, forward: np.ndarray, offset: float) -> np.ndarray:
        """World points ``offset`` metres left of the red line, normal to it."""
        a, b, _ = self.target.poly
        forward = np.asarray(forward, dtype=float)
        slope = 2.0 * a * forward + b
        norm = np.sqrt(1.0 + slope**2)
        local = np.stack(
            [forward - offset * slope / norm, self.lateral(forward) + offset / norm],
            axis=-1,
        )
        return transform_points(self.pose, local)

    def heading(self, forward: float) -> float:
        a, b, _ = self.target.poly
        return self.pose.theta + math.atan(2.0 * a * forward + b)


@dataclass
class EpisodeState:
    """Mutable bookkeeping of a running episode."""

    pose: Pose2D
    v: float = 0.0
    omega: float = 0.0
    command: ControlCommand = field(default_factory=ControlCommand)
    lane: str = HOME
    tick: int = 0
    collided: bool = False
    completed: bool = False
    lane_exits: int = 0
    off_road: bool = False
    s: float = 0.0
    deviations: list[float] = field(default_factory=list)
    compute_ms: list[float] = field(default_factory=list)


class EpisodeRunner:
    """
    Simulate one scenario with its configured planner.

    Args:
        scenario: Validated scenario.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.track = Track(scenario.track)
        ScenarioValidator(scenario, self.track).validate()

        self.obstacles = as_circles(self.track.resolve_obstacles(scenario.obstacles))
        if len(self.obstacles):
            self.obstacle_s, _ = self.track.project(self.obstacles[:, :2])
        else:
            self.obstacle_s = np.empty(0)
        self.pipeline = LanePipeline(scenario.vision, scenario.camera)
        self.planner: LocalPlanner = build_planner(scenario)
        self.rng = np.random.default_rng(scenario.rng_seed)
        self.half_lane = scenario.track.lane_width / 2.0
        self._reference: LaneReference | None = None

    def start_pose(self) -> Pose2D:
        """Configured start pose, or the home-lane centre at ``start_s``."""
        if self.scenario.start_pose is not None:
            return self.scenario.start_pose
        return self.track.pose_at(self.scenario.start_s, -self.half_lane)

    def build_global_costmap(self) -> Costmap:
        """Inflated costmap of the whole track from the ground-truth obstacles."""
        cfg = self.scenario.costmap
        grid = Costmap.covering(
            self.track.bounds_points(), cfg.global_margin, cfg.resolution
        )
        return inflate(mark_obstacles(grid, self.obstacles), cfg.inflation)

    def run(self) -> tuple[RunMetrics, list[TraceRecord]]:
        """
        Execute the episode.

        Returns:
            The run metrics and one trace record per executed tick.
        """
        scn = self.scenario
        self.planner.reset()
        state = EpisodeState(pose=self.start_pose())
        self._reference = None
        trace: list[TraceRecord] = []

        while state.tick < scn.max_ticks and not (state.collided or state.completed):
            started = time.perf_counter()
            record = self._tick(state)
            state.compute_ms.append((time.perf_counter() - started) * 1000.0)
            trace.append(record)

        metrics = self._metrics(state)
        logger.info(
            "Episode %s/%s: %d/%d avoided, collided=%s, completed=%s in %d ticks",
            scn.name,
            scn.planner,
            metrics.obstacles_avoided,
            metrics.obstacles_total,
            metrics.collided,
            metrics.completed,
            metrics.ticks,
        )
        return metrics, trace

    def _tick(self, state: EpisodeState) -> TraceRecord:
        scn = self.scenario
        pose = state.pose

        image = render_view(
            pose,
            self.track,
            self.pipeline.camera,
            scn.vision.lighting_noise,
            scn.vision.noise_sigma,
            self.rng,
        )
        detected = self.pipeline.detect(image, state.v)
        reference = self._update_reference(detected, pose)

        visible = visible_obstacles(
            self.obstacles, pose, scn.lidar.n_beams, scn.lidar.max_range
        )
        local_map = self._local_costmap(pose, visible, reference)
        lookahead = lookahead_distance(
            state.v, (scn.vision.lookahead_min, scn.vision.lookahead_gain)
        )
        state.lane = self._select_lane(
            state.lane, pose, local_map, reference, lookahead
        )

        forward = self._forward_of(reference, pose, lookahead)
        offset = -self.half_lane if state.lane == HOME else self.half_lane
        lane_goal = reference.points(np.array([forward]), offset)[0]
        lane_heading = reference.heading(forward)
        global_path = self._global_path(local_map, pose, (lane_goal[0], lane_goal[1]))
        interim = self._interim_goal(global_path, pose, lane_heading)

        ctx = PlanningContext(
            state=VehicleState(pose=pose, v=state.v, omega=state.omega),
            goal=interim,
            global_path=global_path,
            local_map=local_map,
            obstacles=visible,
        )
        try:
            output = self.planner.plan(ctx)
            command, local_plan, internals = (
                output.command,
                output.local_plan,
                output.internals,
            )
        except OptimizationDivergedError as exc:
            logger.warning(
                "Tick %d: %s, repeating previous command", state.tick, exc
            )
            command, local_plan, internals = state.command, np.empty((0, 2)), {}

        command = clamp_command(command, scn.vehicle)
        new_pose = step(pose, command, scn.tick, scn.vehicle)
        hits = footprint_hits(new_pose, scn.vehicle, self.obstacles)
        self._advance(state, new_pose, command, collided=bool(len(hits)))
        if len(hits):
            logger.info(
                "Tick %d: collision with obstacle %s", state.tick, hits.tolist()
            )

        record = TraceRecord(
            tick=state.tick,
            time=(state.tick + 1) * scn.tick,
            pose=new_pose,
            command=command,
            lane_target=detected,
            lane=state.lane,
            goal=interim.position,
            local_plan=[(float(x), float(y)) for x, y in np.asarray(local_plan)],
            planner=internals,
            collided=state.collided,
        )
        state.tick += 1
        return record

    def _update_reference(self, detected: LaneTarget, pose: Pose2D) -> LaneReference:
        if detected.valid:
            self._reference = LaneReference(target=detected, pose=pose)
        elif self._reference is None:
            # nothing seen yet: assume the red line runs straight on the left
            fallback = LaneTarget(poly=(0.0, 0.0, self.half_lane))
            self._reference = LaneReference(target=fallback, pose=pose)
        return self._reference

    @staticmethod
    def _forward_of(reference: LaneReference, pose: Pose2D, lookahead: float) -> float:
        """Forward coordinate in the reference frame ``lookahead`` ahead of ``pose``."""
        here = inverse_transform_points(reference.pose, np.array([pose.x, pose.y]))
        return float(here[0]) + lookahead

    def _local_costmap(
        self, pose: Pose2D, visible: np.ndarray, reference: LaneReference
    ) -> Costmap:
        cfg = self.scenario.costmap
        grid = Costmap.around(pose, cfg.local_size, cfg.resolution)
        grid = inflate(mark_obstacles(grid, visible), cfg.inflation)

        local = inverse_transform_points(reference.pose, grid.cell_centers())
        forward, left = local[..., 0], local[..., 1]
        ahead = forward > float(
            inverse_transform_points(reference.pose, np.array([pose.x, pose.y]))[0]
        )
        off_road = np.abs(left - reference.lateral(forward)) > (
            self.scenario.track.lane_width
        )
        return apply_soft_cost(grid, ahead & off_road, cfg.lane_boundary_cost)

    def _lane_blocked(
        self,
        local_map: Costmap,
        reference: LaneReference,
        offset: float,
        forward_span: tuple[float, float],
    ) -> bool:
        step_size = local_map.resolution / 2.0
        forward = np.arange(forward_span[0], forward_span[1] + step_size, step_size)
        costs = local_map.cost_at(reference.points(forward, offset))
        return bool(np.any(costs >= INSCRIBED))

    def _select_lane(
        self,
        lane: str,
        pose: Pose2D,
        local_map: Costmap,
        reference: LaneReference,
        lookahead: float,
    ) -> str:
        """Switch to the passing lane around a blocked home lane and back."""
        cfg = self.scenario.lane_change
        here = self._forward_of(reference, pose, 0.0)
        span = (here - cfg.check_behind, here + lookahead + cfg.check_ahead)
        home_blocked = self._lane_blocked(local_map, reference, -self.half_lane, span)
        if lane == HOME and home_blocked:
            if not self._lane_blocked(local_map, reference, self.half_lane, span):
                logger.debug("Home lane blocked, changing to the passing lane")
                return PASSING
        elif lane == PASSING and not home_blocked:
            logger.debug("Home lane free, returning")
            return HOME
        return lane

    def _global_path(self, local_map: Costmap, pose: Pose2D, goal: Point) -> GlobalPath:
        cfg = self.scenario.costmap
        start = nearest_free_cell(local_map, pose.position)
        target = nearest_free_cell(local_map, goal)
        try:
            return plan(local_map, cfg.planner_cost, start, target)
        except (InvalidEndpointError, UnreachableGoalError) as exc:
            logger.warning("Global planning failed (%s), using a straight path", exc)
            return GlobalPath.straight(pose.position, goal, cfg.resolution)

    def _interim_goal(
        self, path: GlobalPath, pose: Pose2D, lane_heading: float
    ) -> Pose2D:
        x, y = prune_to_window(path, pose, self.scenario.costmap.window_radius)
        gaps = np.hypot(path.waypoints[:, 0] - x, path.waypoints[:, 1] - y)
        index = int(np.argmin(gaps))
        if index >= len(path) - 1:
            heading = lane_heading
        else:
            dx, dy = path.waypoints[index + 1] - path.waypoints[index]
            heading = math.atan2(dy, dx)
        return Pose2D(x=x, y=y, theta=heading)

    def _advance(
        self, state: EpisodeState, pose: Pose2D, command: ControlCommand, collided: bool
    ) -> None:
        scn = self.scenario
        state.pose = pose
        state.command = command
        state.v = command.v
        state.omega = yaw_rate(command.v, command.gamma, scn.vehicle)
        state.collided = collided

        s, lateral = self.track.project(np.array([pose.x, pose.y]))
        lateral = float(lateral)
        state.deviations.append(
            min(abs(lateral - self.half_lane), abs(lateral + self.half_lane))
        )
        limit = scn.track.lane_width - scn.vehicle.body_width / 2.0
        off_road = abs(lateral) > limit
        if off_road and not state.off_road:
            state.lane_exits += 1
        state.off_road = off_road
        state.completed = not collided and float(s) >= scn.goal_s
        state.s = float(s)

    def _metrics(self, state: EpisodeState) -> RunMetrics:
        scn = self.scenario
        avoided = int(np.count_nonzero(self.obstacle_s < state.s))
        if state.collided:
            hits = footprint_hits(state.pose, scn.vehicle, self.obstacles)
            avoided -= int(np.count_nonzero(self.obstacle_s[hits] < state.s))
        deviations = np.asarray(state.deviations)
        return RunMetrics(
            scenario=scn.name,
            planner=scn.planner,
            lighting_noise=scn.vision.lighting_noise,
            obstacles_avoided=max(avoided, 0),
            obstacles_total=len(self.obstacles),
            collided=state.collided,
            completed=state.completed,
            lane_deviation_rms=(
                float(np.sqrt(np.mean(deviations**2))) if deviations.size else 0.0
            ),
            lane_exits=state.lane_exits,
            completion_time=state.tick * scn.tick if state.completed else None,
            ticks=state.tick,
            mean_tick_compute=(
                float(np.mean(state.compute_ms)) if state.compute_ms else 0.0
            ),
        )


def run_episode(scenario: Scenario) -> tuple[RunMetrics, list[TraceRecord]]:
    """Simulate ``scenario``; see :class:`EpisodeRunner`."""
    return EpisodeRunner(scenario).run()


def write_trace(path: str | Path, trace: list[TraceRecord]) -> Path:
    """Write a trace as JSON lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for record in trace:
            handle.write(record.model_dump_json())
            handle.write("\n")
    logger.info("Trace with %d records written to %s", len(trace), path)
    return path


def read_trace(path: str | Path) -> list[TraceRecord]:
    """Read a JSON-lines trace."""
    with Path(path).open(encoding="utf-8") as handle:
        lines = [line for line in handle if line.strip()]
    return [TraceRecord.model_validate_json(line) for line in lines]
