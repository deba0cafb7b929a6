"""
Cross-field validation of scenarios.

Field-level constraints are enforced by the pydantic models in
:mod:`core.schemas`. :class:`ScenarioValidator` adds the checks that need
several blocks at once or the sampled track geometry, raising
:class:`core.errors.ScenarioConfigError` on the first failure.
"""

from core.errors import ScenarioConfigError
from core.schemas import Scenario
from core.track import Track
from core.vehicle import footprint_offsets


class ScenarioValidator:
    """
    Validate that a parsed scenario describes a drivable experiment.

    The validator checks, in sequence:

    1. A lane is wider than the vehicle body.
    2. The track curvature stays below the vehicle's minimum turning radius.
    3. Start, goal and track-relative obstacles lie on the track.
    4. The local window holds the longest DWA rollout and the footprint.
    """

    def __init__(self, scenario: Scenario, track: Track | None = None):
        """
        Args:
            scenario: Scenario validated field by field.
            track: Pre-built track geometry; built from the scenario if omitted.
        """
        self._scenario = scenario
        self._track = track or Track(scenario.track)

    def validate(self) -> None:
        """Run all validation checks, raising on the first failure."""
        self._validate_lane_width()
        self._validate_curvature()
        self._validate_arc_lengths()
        self._validate_window_reach()

    def _validate_lane_width(self) -> None:
        lane_width = self._scenario.track.lane_width
        body_width = self._scenario.vehicle.body_width
        if lane_width <= body_width:
            raise ScenarioConfigError(
                f"lane_width {lane_width} must exceed the body width {body_width}",
                field="track.lane_width",
            )

    def _validate_curvature(self) -> None:
        min_radius = self._scenario.vehicle.min_turn_radius
        curvature = self._track.max_curvature
        if curvature * min_radius > 1.0:
            raise ScenarioConfigError(
                f"track radius {1.0 / curvature:.2f} m is tighter than the "
                f"vehicle minimum turning radius {min_radius:.2f} m",
                field="track.control_points",
            )

    def _validate_arc_lengths(self) -> None:
        length = self._track.length
        if self._scenario.goal_s > length:
            raise ScenarioConfigError(
                f"goal_s {self._scenario.goal_s} beyond track length {length:.2f}",
                field="goal_s",
            )
        scenario = self._scenario
        if scenario.start_pose is None and scenario.start_s >= scenario.goal_s:
            raise ScenarioConfigError(
                "start_s must lie before goal_s",
                field="start_s",
            )
        for i, obstacle in enumerate(self._scenario.obstacles):
            if obstacle.s is not None and not 0.0 <= obstacle.s <= length:
                raise ScenarioConfigError(
                    f"obstacle at s={obstacle.s} is off the track "
                    f"(length {length:.2f})",
                    field=f"obstacles.{i}.s",
                )

    def _validate_window_reach(self) -> None:
        scenario = self._scenario
        offsets, radius = footprint_offsets(scenario.vehicle)
        reach = (
            scenario.vehicle.v_max * scenario.dwa.sim_time
            + float(abs(offsets).max())
            + radius
        )
        half_window = scenario.costmap.local_size / 2.0
        if half_window < reach:
            raise ScenarioConfigError(
                f"local window half-width {half_window:.2f} m is shorter than the "
                f"DWA rollout reach {reach:.2f} m",
                field="costmap.local_size",
            )
