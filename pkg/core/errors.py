"""Exceptions raised by the navigation stack and the scenario layer."""


class LimitViolationError(ValueError):
    """A command or steering angle lies outside the vehicle limits."""


class InvalidStateError(ValueError):
    """A pose, command or time step is not finite or not admissible."""


class InvalidEndpointError(ValueError):
    """A planning endpoint is outside the map or on an impassable cell."""


class UnreachableGoalError(RuntimeError):
    """No path connects the start cell to the goal cell."""


class OptimizationDivergedError(RuntimeError):
    """The elastic band objective became non-finite during optimization."""


class ScenarioConfigError(ValueError):
    """
    A scenario file could not be parsed or failed validation.

    Args:
        message: Human readable description of the problem.
        field: Dotted path of the offending field, when known.
        line: One-based line number in the scenario file, when known.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        super().__init__(message)
        self.message = message
        self.field = field
        self.line = line

    def __str__(self) -> str:
        location = []
        if self.field:
            location.append(f"field '{self.field}'")
        if self.line is not None:
            location.append(f"line {self.line}")
        if not location:
            return self.message
        return f"{', '.join(location)}: {self.message}"
