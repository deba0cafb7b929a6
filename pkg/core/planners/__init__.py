"""Local planners and the factory that binds them to a scenario."""

from core.planners.apf import ApfPlanner
from core.planners.base import (
    LocalPlanner,
    PlannerOutput,
    PlanningContext,
    VehicleState,
)
from core.planners.dwa import DwaPlanner
from core.planners.teb import TebPlanner
from core.schemas import Scenario


def build_planner(scenario: Scenario) -> LocalPlanner:
    """Instantiate the planner named by ``scenario.planner`` with its config block."""
    if scenario.planner == "dwa":
        return DwaPlanner(scenario.dwa, scenario.vehicle, scenario.tick)
    if scenario.planner == "teb":
        return TebPlanner(scenario.teb, scenario.vehicle)
    if scenario.planner == "apf":
        return ApfPlanner(scenario.apf, scenario.vehicle)
    raise ValueError(f"Unknown planner '{scenario.planner}'")


__all__ = [
    "ApfPlanner",
    "DwaPlanner",
    "LocalPlanner",
    "PlannerOutput",
    "PlanningContext",
    "TebPlanner",
    "VehicleState",
    "build_planner",
]
