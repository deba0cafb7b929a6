"""
Loading scenario files.

Scenarios are YAML documents validated into :class:`core.schemas.Scenario`.
:class:`ScenarioLoader` turns every parse or validation failure into a
:class:`core.errors.ScenarioConfigError` naming the offending field and its
line in the file.
"""

import logging
from pathlib import Path

import yaml
from pydantic import ValidationError

from core.errors import ScenarioConfigError
from core.schemas import Scenario
from core.validation import ScenarioValidator

logger = logging.getLogger(__name__)

SCENARIO_SUFFIXES = (".yaml", ".yml")


class ScenarioLoader:
    """
    Load and validate one scenario file.

    Args:
        path: Path of the YAML scenario.
    """

    def __init__(self, path: str | Path):
        self._path = Path(path)

    def load(self) -> Scenario:
        """
        Return the validated scenario.

        Raises:
            FileNotFoundError: When the file does not exist.
            ScenarioConfigError: When the file is not valid YAML, does not
                match the schema or describes an undrivable experiment.
        """
        if not self._path.exists():
            raise FileNotFoundError(f"Scenario file not found at: {self._path}")
        text = self._path.read_text(encoding="utf-8")
        data = self._parse(text)
        scenario = self._validate_schema(data, text)
        try:
            ScenarioValidator(scenario).validate()
        except ScenarioConfigError as e:
            if e.line is None and e.field:
                e.line = _line_of(text, _field_path(e.field))
            raise
        logger.debug("Loaded scenario '%s' from %s", scenario.name, self._path)
        return scenario

    def _parse(self, text: str) -> dict:
        """
        Parse the YAML document.

        Raises:
            ScenarioConfigError: On syntax errors or a non-mapping document.
        """
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            line = mark.line + 1 if mark is not None else None
            problem = getattr(e, "problem", None) or str(e)
            raise ScenarioConfigError(f"invalid YAML: {problem}", line=line) from e
        if not isinstance(data, dict):
            raise ScenarioConfigError("a scenario must be a mapping", line=1)
        return data

    def _validate_schema(self, data: dict, text: str) -> Scenario:
        """
        Validate the parsed document against :class:`Scenario`.

        Raises:
            ScenarioConfigError: With the first failing field and its line.
        """
        try:
            return Scenario.model_validate(data)
        except ValidationError as e:
            first = e.errors()[0]
            loc = tuple(first["loc"])
            field = ".".join(str(part) for part in loc)
            line = _line_of(text, loc)
            raise ScenarioConfigError(first["msg"], field=field, line=line) from e


def _line_of(text: str, loc: tuple) -> int | None:
    """One-based line of the deepest YAML node along ``loc``."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = node.start_mark.line + 1 if node is not None else None
    for part in loc:
        child = None
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                if key.value == str(part):
                    child = value
                    line = key.start_mark.line + 1
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int):
            if 0 <= part < len(node.value):
                child = node.value[part]
                line = child.start_mark.line + 1
        if child is None:
            break
        node = child
    return line


def _field_path(field: str) -> tuple:
    return tuple(int(part) if part.isdigit() else part for part in field.split("."))


def load_scenario(path: str | Path) -> Scenario:
    """Shorthand for ``ScenarioLoader(path).load()``."""
    return ScenarioLoader(path).load()


def load_dir(directory: str | Path) -> list[Scenario]:
    """
    Load every scenario file of a directory, sorted by file name.

    Raises:
        FileNotFoundError: When the directory holds no scenario file.
    """
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir() if p.suffix in SCENARIO_SUFFIXES)
    if not paths:
        raise FileNotFoundError(f"No scenario files found in: {directory}")
    return [ScenarioLoader(path).load() for path in paths]
