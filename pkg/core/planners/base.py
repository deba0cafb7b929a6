"""Shared types of the local planners."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, ClassVar

import numpy as np

from core.costmap import Costmap
from core.global_planner import GlobalPath
from core.schemas import ControlCommand, Pose2D, VehicleParams


@dataclass(frozen=True)
class VehicleState:
    """Pose plus the currently executed linear speed and yaw rate."""

    pose: Pose2D
    v: float = 0.0
    omega: float = 0.0


@dataclass(frozen=True)
class PlanningContext:
    """
    Everything a local planner sees in one tick.

    Attributes:
        state: Current vehicle state.
        goal: Interim goal pose taken from the pruned global path.
        global_path: Roadmap inside the local window.
        local_map: Inflated rolling costmap.
        obstacles: Detected obstacle circles as ``(n, 3)`` rows.
    """

    state: VehicleState
    goal: Pose2D
    global_path: GlobalPath | None
    local_map: Costmap
    obstacles: np.ndarray


@dataclass(frozen=True)
class PlannerOutput:
    """
    Result of one planning tick.

    Attributes:
        command: Ackermann command to execute.
        local_plan: Planned positions ``(k, 2)`` for plotting.
        internals: JSON-serialisable planner internals for the trace.
    """

    command: ControlCommand
    local_plan: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    internals: dict[str, Any] = field(default_factory=dict)


class LocalPlanner(ABC):
    """Common interface of the DWA, TEB and APF planners."""

    name: ClassVar[str]

    def __init__(self, vehicle: VehicleParams):
        self.vehicle = vehicle

    @abstractmethod
    def plan(self, ctx: PlanningContext) -> PlannerOutput:
        """Compute the command for the current tick."""

    def reset(self) -> None:
        """Forget any state carried between ticks."""
