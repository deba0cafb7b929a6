"""
MLflow-backed experiment tracking for benchmark runs.

:class:`ExperimentStore` logs one MLflow run per suite cell, either locally
(``file:`` URIs) or to a remote MLflow service, so planner comparisons can be
browsed next to their traces and plots.
"""

import logging
from pathlib import Path

import mlflow
from mlflow.tracking import MlflowClient

from core.config import settings
from core.schemas import RunMetrics

logger = logging.getLogger(__name__)


class ExperimentStore:
    """
    Wrapper around MLflow Tracking for benchmark results.

    Attributes:
        _experiment_name: MLflow experiment receiving the runs.
        _tracking_uri: MLflow Tracking URI (runs and artefacts).
        _client: Low-level :class:`mlflow.tracking.MlflowClient` instance.
    """

    def __init__(
        self,
        experiment_name: str = settings.DEFAULT_EXPERIMENT_NAME,
        tracking_uri: str = settings.DEFAULT_TRACKING_URI,
    ):
        """
        Instantiate an :class:`ExperimentStore`.

        Args:
            experiment_name: MLflow experiment name, created when missing.
            tracking_uri: URI of the MLflow Tracking backend.
        """
        self._experiment_name = experiment_name
        self._tracking_uri = tracking_uri
        self._client = MlflowClient(tracking_uri=self._tracking_uri)
        mlflow.set_tracking_uri(self._tracking_uri)
        mlflow.set_experiment(self._experiment_name)

    def log_run(
        self,
        metrics: RunMetrics,
        params: dict[str, object] | None = None,
        artifact_files: list[str | Path] | None = None,
    ) -> str:
        """
        Log one episode.

        Args:
            metrics: Episode metrics; booleans are logged as 0/1 and a missing
                completion time is skipped.
            params: Extra run parameters, for example planner settings.
            artifact_files: Files (trace, plot) attached to the run.

        Returns:
            The MLflow run id.
        """
        run_name = f"{metrics.scenario}_{metrics.planner}_{metrics.lighting_noise:g}"
        with mlflow.start_run(run_name=run_name) as run:
            mlflow.log_params(
                {
                    "scenario": metrics.scenario,
                    "planner": metrics.planner,
                    "lighting_noise": metrics.lighting_noise,
                    **(params or {}),
                }
            )
            mlflow.log_metrics(self._numeric(metrics))
            if metrics.error:
                mlflow.set_tag("error", metrics.error)
            for file in artifact_files or []:
                mlflow.log_artifact(str(file))
        logger.info("Logged run %s (%s)", run_name, run.info.run_id)
        return run.info.run_id

    def runs(self) -> list:
        """Runs of the experiment, newest first."""
        experiment = self._client.get_experiment_by_name(self._experiment_name)
        if experiment is None:
            return []
        return self._client.search_runs(
            [experiment.experiment_id], order_by=["attributes.start_time DESC"]
        )

    @staticmethod
    def _numeric(metrics: RunMetrics) -> dict[str, float]:
        values = {}
        for name, value in metrics.model_dump(exclude={"scenario", "planner"}).items():
            if isinstance(value, bool):
                values[name] = float(value)
            elif isinstance(value, int | float):
                values[name] = float(value)
        return values
