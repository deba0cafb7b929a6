"""
Typed value objects and configuration blocks for the navigation stack.

Every block of a scenario file validates into one of the models below, so the
field constraints here are the single place where parameter invariants are
enforced. Cross-field checks that need the track geometry live in
:mod:`core.validation`.
"""

import math
from typing import Any, Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    TypeAdapter,
    field_validator,
    model_validator,
)

PlannerName = Literal["dwa", "teb", "apf"]
PLANNER_NAMES: tuple[str, ...] = ("dwa", "teb", "apf")

Point = tuple[float, float]


def wrap_angle(angle: float) -> float:
    """Wrap an angle in radians to the half-open interval (-pi, pi]."""
    if -math.pi < angle <= math.pi:
        return angle
    return math.pi - (math.pi - angle) % (2.0 * math.pi)


class Pose2D(BaseModel):
    """
    Planar pose of the vehicle reference point.

    Attributes:
        x: Position along the world x axis in metres.
        y: Position along the world y axis in metres.
        theta: Heading in radians, always wrapped to (-pi, pi].
    """

    model_config = ConfigDict(frozen=True)

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    @field_validator("theta")
    @classmethod
    def _wrap_theta(cls, value: float) -> float:
        if not math.isfinite(value):
            return value
        return wrap_angle(value)

    @property
    def position(self) -> Point:
        return (self.x, self.y)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.x, self.y, self.theta))


class ControlCommand(BaseModel):
    """
    Actuation pair sent to the vehicle.

    Attributes:
        v: Signed linear speed in metres per second.
        gamma: Front wheel steering angle in radians, positive to the left.
    """

    model_config = ConfigDict(frozen=True)

    v: float = 0.0
    gamma: float = 0.0

    @classmethod
    def stop(cls) -> "ControlCommand":
        return cls(v=0.0, gamma=0.0)


class VehicleParams(BaseModel):
    """
    Geometry and actuation limits of the Ackermann vehicle.

    The wheelbase default is an assumption for a 1/10 scale car; the body is
    centred on the pose.

    Attributes:
        wheelbase: Distance between axles in metres.
        v_max: Absolute speed limit in metres per second.
        gamma_max: Steering limit in radians.
        a_max: Linear acceleration bound in metres per second squared.
        alpha_max: Yaw-rate change bound used by the dynamic window.
        body_width: Width of the rectangular body in metres.
        body_length: Length of the rectangular body in metres.
    """

    model_config = ConfigDict(frozen=True)

    wheelbase: PositiveFloat = 0.33
    v_max: PositiveFloat = 1.0
    gamma_max: PositiveFloat = Field(default=0.5, lt=math.pi / 2)
    a_max: PositiveFloat = 2.0
    alpha_max: PositiveFloat = 4.0
    body_width: PositiveFloat = 0.30
    body_length: PositiveFloat = 0.50

    @property
    def min_turn_radius(self) -> float:
        return self.wheelbase / math.tan(self.gamma_max)

    @property
    def omega_max(self) -> float:
        """Largest yaw rate reachable at ``v_max`` under the steering limit."""
        return self.v_max * math.tan(self.gamma_max) / self.wheelbase


class Circle(BaseModel):
    """A circular obstacle in world coordinates."""

    model_config = ConfigDict(frozen=True)

    x: float
    y: float
    radius: PositiveFloat


class ObstacleSpec(BaseModel):
    """
    Obstacle placement as written in a scenario file.

    An obstacle is placed either at absolute world coordinates (``x``, ``y``) or
    relative to the track (``s`` arc-length and signed ``lateral`` offset, left
    positive). Exactly one of the two forms must be given.
    """

    model_config = ConfigDict(frozen=True)

    x: float | None = None
    y: float | None = None
    s: float | None = None
    lateral: float | None = None
    radius: PositiveFloat = 0.2

    @model_validator(mode="after")
    def _check_placement(self) -> "ObstacleSpec":
        world = self.x is not None and self.y is not None
        track = self.s is not None and self.lateral is not None
        partial = (self.x is None) != (self.y is None) or (self.s is None) != (
            self.lateral is None
        )
        if partial or world == track:
            raise ValueError("obstacle needs either x/y or s/lateral, not both")
        return self


class InflationParams(BaseModel):
    """
    Shape of the inflation cost around lethal cells.

    Attributes:
        inflation_radius: Distance in metres beyond which no cost is added.
        cost_scaling_factor: Exponential decay rate in 1/metres.
        inscribed_radius: Distance in metres treated as certain collision.
    """

    model_config = ConfigDict(frozen=True)

    inflation_radius: NonNegativeFloat = 0.6
    cost_scaling_factor: NonNegativeFloat = 4.0
    inscribed_radius: NonNegativeFloat = 0.25

    @model_validator(mode="after")
    def _check_radii(self) -> "InflationParams":
        if self.inflation_radius < self.inscribed_radius:
            raise ValueError("inflation_radius must be >= inscribed_radius")
        return self


class PlannerCostParams(BaseModel):
    """Edge weighting of the global planner: ``neutral + factor * cell_cost``."""

    model_config = ConfigDict(frozen=True)

    cost_factor: NonNegativeFloat = 0.8
    neutral_cost: float = Field(default=50.0, ge=1.0)


class CostmapConfig(BaseModel):
    """
    Costmap block of a scenario.

    Attributes:
        resolution: Cell edge length in metres.
        local_size: Edge length of the square rolling window in metres.
        window_radius: Radius used to pick the interim goal on the global path.
        lane_boundary_cost: Soft cost of cells beyond the outer lane lines.
        global_margin: Padding of the global map around the track.
        inflation: Inflation layer parameters.
        planner_cost: Global planner edge weighting.
    """

    model_config = ConfigDict(frozen=True)

    resolution: PositiveFloat = 0.1
    local_size: PositiveFloat = 8.0
    window_radius: PositiveFloat = 2.0
    lane_boundary_cost: int = Field(default=180, ge=0, le=252)
    global_margin: NonNegativeFloat = 1.0
    inflation: InflationParams = InflationParams()
    planner_cost: PlannerCostParams = PlannerCostParams()


class LidarConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_beams: PositiveInt = 360
    max_range: PositiveFloat = 4.0


class DwaConfig(BaseModel):
    """
    Dynamic window planner tuning.

    ``control_period`` defaults to the simulation tick when left unset.
    """

    model_config = ConfigDict(frozen=True)

    sim_time: PositiveFloat = 3.0
    sim_granularity: PositiveFloat = 0.1
    vx_samples: PositiveInt = 7
    vth_samples: PositiveInt = 15
    weight_goal: NonNegativeFloat = 1.0
    weight_path: NonNegativeFloat = 0.8
    weight_obstacle: NonNegativeFloat = 0.3
    weight_speed: NonNegativeFloat = 0.4
    control_period: PositiveFloat | None = None

    @model_validator(mode="after")
    def _check_horizon(self) -> "DwaConfig":
        if self.sim_time <= self.sim_granularity:
            raise ValueError("sim_time must be greater than sim_granularity")
        weights = (
            self.weight_goal,
            self.weight_path,
            self.weight_obstacle,
            self.weight_speed,
        )
        if not any(w > 0 for w in weights):
            raise ValueError("at least one DWA weight must be positive")
        return self


class TebConfig(BaseModel):
    """Elastic band weights, resizing policy and alternative count."""

    model_config = ConfigDict(frozen=True)

    weight_time: NonNegativeFloat = 1.0
    weight_vel: NonNegativeFloat = 100.0
    weight_acc: NonNegativeFloat = 10.0
    weight_turn_radius: NonNegativeFloat = 10.0
    weight_obstacle: NonNegativeFloat = 500.0
    weight_kinematics: NonNegativeFloat = 100.0
    min_obstacle_dist: NonNegativeFloat = 0.45
    dt_ref: PositiveFloat = 0.3
    dt_hysteresis: PositiveFloat = 0.1
    max_iterations: PositiveInt = 25
    n_alternatives: PositiveInt = 3
    max_nodes: int = Field(default=40, ge=3)

    @model_validator(mode="after")
    def _check_resizing(self) -> "TebConfig":
        if self.dt_ref <= self.dt_hysteresis:
            raise ValueError("dt_ref must be greater than dt_hysteresis")
        return self


class ApfConfig(BaseModel):
    """Potential field gains, speed law and escape behaviour."""

    model_config = ConfigDict(frozen=True)

    k_att: NonNegativeFloat = 1.0
    k_rep: NonNegativeFloat = 0.05
    rho0: PositiveFloat = 0.6
    v_max: PositiveFloat = 1.0
    k_gain: NonNegativeFloat = 0.3
    v_min: NonNegativeFloat = 0.2
    eps_force: NonNegativeFloat = 0.05
    antiparallel_cos: float = Field(default=-0.8, ge=-1.0, le=0.0)
    escape_gain: NonNegativeFloat = 1.0
    escape_hold: PositiveInt = 20
    k_heading: PositiveFloat = 1.5
    goal_tolerance: NonNegativeFloat = 0.3
    escape_enabled: bool = True

    @model_validator(mode="after")
    def _check_speeds(self) -> "ApfConfig":
        if self.v_min > self.v_max:
            raise ValueError("v_min must not exceed v_max")
        return self


class CameraConfig(BaseModel):
    """
    Pinhole-free camera description by four ground/image correspondences.

    Attributes:
        width: Image width in pixels.
        height: Image height in pixels.
        ground_points: Vehicle-frame ground points (forward, left) in metres.
        image_points: Matching pixel coordinates (column, row).
    """

    model_config = ConfigDict(frozen=True)

    width: PositiveInt = 160
    height: PositiveInt = 120
    ground_points: tuple[Point, Point, Point, Point] = (
        (0.4, 0.8),
        (0.4, -0.8),
        (3.0, 2.0),
        (3.0, -2.0),
    )
    image_points: tuple[Point, Point, Point, Point] = (
        (0.0, 119.0),
        (159.0, 119.0),
        (0.0, 0.0),
        (159.0, 0.0),
    )


class LaneVisionConfig(BaseModel):
    """
    Lane detection thresholds and the bird's-eye frame.

    HSV hue bounds are in degrees; a lower bound above the upper bound wraps
    through zero. The thresholds were calibrated on the synthetic renderer.
    """

    model_config = ConfigDict(frozen=True)

    hsv_lo: tuple[float, float, float] = (340.0, 0.5, 0.4)
    hsv_hi: tuple[float, float, float] = (20.0, 1.0, 1.0)
    kernel: PositiveInt = 3
    min_area: int = Field(default=40, ge=0)
    max_area: int = Field(default=20000, ge=0)
    min_aspect: PositiveFloat = 1.1
    birdeye_width: PositiveInt = 160
    birdeye_height: PositiveInt = 160
    meters_per_pixel: PositiveFloat = 0.02
    lookahead_min: PositiveFloat = 0.9
    lookahead_gain: NonNegativeFloat = 0.5
    min_pixels: PositiveInt = 30
    max_residual: PositiveFloat = 0.15
    lighting_noise: float = Field(default=0.0, ge=0.0, le=1.0)
    noise_sigma: PositiveFloat = 6.0

    @field_validator("kernel")
    @classmethod
    def _odd_kernel(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("kernel size must be odd")
        return value

    @model_validator(mode="after")
    def _check_area(self) -> "LaneVisionConfig":
        if self.min_area > self.max_area:
            raise ValueError("min_area must not exceed max_area")
        return self


class TrackConfig(BaseModel):
    """
    Road geometry: a Catmull-Rom centerline (the red line) and lane width.

    The home lane lies to the right of the red line, the passing lane to its
    left; black outer lines sit one lane width away on each side.
    """

    model_config = ConfigDict(frozen=True)

    control_points: list[Point] = Field(min_length=2)
    lane_width: PositiveFloat = 1.0
    marking_width: PositiveFloat = 0.1


class LaneChangeConfig(BaseModel):
    """Look-behind and look-ahead span used to decide on a lane change."""

    model_config = ConfigDict(frozen=True)

    check_behind: NonNegativeFloat = 0.6
    check_ahead: NonNegativeFloat = 1.6


class Scenario(BaseModel):
    """
    Complete description of one closed-loop experiment.

    Attributes:
        format_version: Scenario file format version, currently 1.
        name: Identifier used in result tables.
        track: Road geometry.
        obstacles: Obstacle placements.
        start_pose: Explicit start pose; derived from ``start_s`` when unset.
        start_s: Arc-length of the start point in the home lane.
        goal_s: Arc-length of the finish line.
        planner: Local planner used by ``run`` when none is given.
        tick: Simulation period in seconds.
        max_ticks: Episode length limit.
        rng_seed: Seed of the lighting-noise generator.
    """

    model_config = ConfigDict(frozen=True)

    format_version: Literal[1] = 1
    name: str = "scenario"
    track: TrackConfig
    obstacles: list[ObstacleSpec] = Field(default_factory=list)
    start_pose: Pose2D | None = None
    start_s: NonNegativeFloat = 0.5
    goal_s: PositiveFloat
    vehicle: VehicleParams = VehicleParams()
    planner: PlannerName = "dwa"
    dwa: DwaConfig = DwaConfig()
    teb: TebConfig = TebConfig()
    apf: ApfConfig = ApfConfig()
    costmap: CostmapConfig = CostmapConfig()
    lidar: LidarConfig = LidarConfig()
    camera: CameraConfig = CameraConfig()
    vision: LaneVisionConfig = LaneVisionConfig()
    lane_change: LaneChangeConfig = LaneChangeConfig()
    tick: PositiveFloat = 0.05
    max_ticks: PositiveInt = 4000
    rng_seed: int = 0

    def with_planner(self, planner: PlannerName) -> "Scenario":
        return self.model_copy(update={"planner": planner})

    def with_lighting_noise(self, amplitude: float) -> "Scenario":
        vision = self.vision.model_copy(update={"lighting_noise": amplitude})
        return self.model_copy(update={"vision": vision})


class LaneTarget(BaseModel):
    """
    Output of the lane pipeline.

    Attributes:
        point: Target point in the vehicle frame (forward, left) in metres.
        lookahead: Lookahead distance used for the point.
        poly: Coefficients (a, b, c) of ``left = a*forward**2 + b*forward + c``.
        valid: False when the fit was rejected; consumers then hold the last
            valid target.
        n_pixels: Number of bird's-eye pixels used by the fit.
        residual_rms: Root mean square fit residual in metres.
    """

    model_config = ConfigDict(frozen=True)

    point: Point = (0.0, 0.0)
    lookahead: float = 0.0
    poly: tuple[float, float, float] = (0.0, 0.0, 0.0)
    valid: bool = False
    n_pixels: int = 0
    residual_rms: float = 0.0


class RunMetrics(BaseModel):
    """
    Summary of one episode.

    Attributes:
        scenario: Scenario name.
        planner: Local planner name.
        lighting_noise: Lighting noise amplitude of the run.
        obstacles_avoided: Obstacles passed without contact.
        obstacles_total: Obstacles in the scenario.
        collided: Whether any footprint circle touched an obstacle.
        completed: Whether the finish line was reached without collision.
        lane_deviation_rms: RMS distance to the nearest lane centre in metres.
        lane_exits: Number of times the body left the road.
        completion_time: Simulated seconds to the finish, ``None`` otherwise.
        ticks: Executed ticks.
        mean_tick_compute: Mean wall-clock compute per tick in milliseconds.
        error: Failure message for suite cells that raised.
    """

    scenario: str
    planner: str
    lighting_noise: float = 0.0
    obstacles_avoided: int = 0
    obstacles_total: int = 0
    collided: bool = False
    completed: bool = False
    lane_deviation_rms: float = 0.0
    lane_exits: int = 0
    completion_time: float | None = None
    ticks: int = 0
    mean_tick_compute: float = 0.0
    error: str | None = None

    @model_validator(mode="after")
    def _check_consistency(self) -> "RunMetrics":
        if self.obstacles_avoided > self.obstacles_total:
            raise ValueError("obstacles_avoided cannot exceed obstacles_total")
        if self.collided and self.completed:
            raise ValueError("a collided run cannot be completed")
        return self

    @classmethod
    def get_columns(cls, include_timing: bool = False) -> list[str]:
        """
        Return the CSV column order.

        Wall-clock timing is left out by default so result files are
        reproducible byte for byte.
        """
        columns = list(cls.model_fields.keys())
        if not include_timing:
            columns.remove("mean_tick_compute")
        return columns


class TraceRecord(BaseModel):
    """
    One executed simulation tick.

    ``planner`` holds the planner internals: the DWA score, the TEB band nodes
    or the APF force vectors.
    """

    tick: int
    time: float
    pose: Pose2D
    command: ControlCommand
    lane_target: LaneTarget
    lane: Literal["home", "passing"]
    goal: Point
    local_plan: list[Point] = Field(default_factory=list)
    planner: dict[str, Any] = Field(default_factory=dict)
    collided: bool = False

    @classmethod
    def validate_many(cls, data: list[dict]) -> list["TraceRecord"]:
        return TypeAdapter(list[cls]).validate_python(data)


class EpisodeRequest(BaseModel):
    """Body of ``POST /episodes``."""

    scenario: Scenario
    planner: PlannerName | None = None
