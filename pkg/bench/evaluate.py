"""
Planner comparison over a set of scenarios.

:class:`SuiteEvaluator` runs the cartesian product of scenarios, planners and
lighting-noise levels, one closed-loop episode per cell, optionally in
parallel through joblib. A failing cell becomes a row carrying the error
message; it never aborts the suite. Rows are ordered by
``(scenario, planner, lighting_noise)`` whatever the execution order.
"""

import logging
from collections.abc import Sequence
from pathlib import Path

import pandas as pd
from joblib import Parallel, delayed

from bench.plot import plot_trace
from core.config import settings
from core.schemas import PLANNER_NAMES, PlannerName, RunMetrics, Scenario
from core.simulation import run_episode, write_trace

logger = logging.getLogger(__name__)


def run_cell(
    scenario: Scenario, artifact_dir: str | Path | None = None
) -> tuple[RunMetrics, list[str]]:
    """
    Run one suite cell.

    Args:
        scenario: Scenario with its planner and lighting noise already set.
        artifact_dir: When given, the trace and its plot are written there.

    Returns:
        The metrics (an error row on failure) and the written artefact files.
    """
    try:
        metrics, trace = run_episode(scenario)
    except Exception as e:  # noqa: BLE001
        logger.error("Cell %s/%s failed: %s", scenario.name, scenario.planner, e)
        error_row = RunMetrics(
            scenario=scenario.name,
            planner=scenario.planner,
            lighting_noise=scenario.vision.lighting_noise,
            obstacles_total=len(scenario.obstacles),
            error=f"{type(e).__name__}: {e}",
        )
        return error_row, []

    files: list[str] = []
    if artifact_dir is not None and trace:
        stem = f"{scenario.name}_{scenario.planner}_{scenario.vision.lighting_noise:g}"
        directory = Path(artifact_dir)
        files.append(str(write_trace(directory / f"{stem}.jsonl", trace)))
        svg_path = directory / f"{stem}.svg"
        plot_trace(trace, scenario, out_path=svg_path)
        files.append(str(svg_path))
    return metrics, files


class SuiteEvaluator:
    """
    Run and tabulate a planner comparison.

    Args:
        scenarios: At least one scenario.
        planners: Planners to compare; all three by default.
        noise_levels: Lighting-noise amplitudes; ``None`` keeps each
            scenario's own setting.
        n_jobs: joblib worker count.
        artifact_dir: Directory receiving per-cell traces and plots.

    Attributes:
        runs: Metrics and artefact files of every cell after :meth:`evaluate`.
    """

    def __init__(
        self,
        scenarios: Sequence[Scenario],
        planners: Sequence[PlannerName] = PLANNER_NAMES,
        noise_levels: Sequence[float] | None = None,
        n_jobs: int = settings.SUITE_N_JOBS,
        artifact_dir: str | Path | None = None,
    ):
        if not scenarios:
            raise ValueError("a suite needs at least one scenario")
        self._scenarios = list(scenarios)
        self._planners = list(planners)
        self._noise_levels = list(noise_levels) if noise_levels else [None]
        self._n_jobs = n_jobs
        self._artifact_dir = artifact_dir
        self.runs: list[tuple[RunMetrics, list[str]]] = []

    def cells(self) -> list[Scenario]:
        """Scenario variants of every (scenario, planner, noise) combination."""
        cells = []
        for scenario in self._scenarios:
            for planner in self._planners:
                for noise in self._noise_levels:
                    cell = scenario.with_planner(planner)
                    if noise is not None:
                        cell = cell.with_lighting_noise(noise)
                    cells.append(cell)
        return cells

    def evaluate(self) -> pd.DataFrame:
        """
        Execute all cells.

        Returns:
            One row per cell with the :class:`RunMetrics` columns, sorted by
            scenario, planner and lighting noise.
        """
        cells = self.cells()
        logger.info("Running %d suite cells with n_jobs=%d", len(cells), self._n_jobs)
        results = Parallel(n_jobs=self._n_jobs)(
            delayed(run_cell)(cell, self._artifact_dir) for cell in cells
        )
        self.runs = sorted(
            results,
            key=lambda item: (
                item[0].scenario,
                item[0].planner,
                item[0].lighting_noise,
            ),
        )
        rows = [metrics.model_dump() for metrics, _ in self.runs]
        return pd.DataFrame(rows, columns=RunMetrics.get_columns(include_timing=True))


def run_suite(
    scenarios: Sequence[Scenario],
    planners: Sequence[PlannerName] = PLANNER_NAMES,
    n_jobs: int = settings.SUITE_N_JOBS,
    noise_levels: Sequence[float] | None = None,
) -> pd.DataFrame:
    """Shorthand for ``SuiteEvaluator(...).evaluate()``."""
    return SuiteEvaluator(scenarios, planners, noise_levels, n_jobs).evaluate()


def write_results_csv(
    results: pd.DataFrame, path: str | Path, include_timing: bool = False
) -> Path:
    """
    Write the comparison table.

    Columns follow :meth:`RunMetrics.get_columns`; quoting is minimal
    (RFC 4180) with CRLF line endings and fixed float formatting, so reruns
    of a deterministic suite give identical bytes.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = RunMetrics.get_columns(include_timing=include_timing)
    results[columns].to_csv(
        path, index=False, lineterminator="\r\n", float_format="%.6f"
    )
    logger.info("Suite results (%d rows) written to %s", len(results), path)
    return path
