"""
Runtime configuration for the planner-bench project.

The module defines a :class:`Settings` model that centralises
environment-driven configuration. Everything that describes an experiment
(track, obstacles, planner tuning) lives in scenario files instead; the
settings only cover where things are read from and written to. All public
constants should be accessed via the module-level singleton :data:`settings`.
"""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Container for application-wide settings.

    Field values are resolved in the following order of precedence: explicit
    keyword arguments, environment variables (loaded from ``.env``), and finally
    the default literals defined below.

    Attributes:
        API_KEY: Shared secret for authenticating requests to the FastAPI
            service. When unset every protected endpoint rejects the caller.
        DEFAULT_SCENARIO_DIR: Directory scanned by ``bench suite`` when no
            directory is given on the command line.
        DEFAULT_SCENARIO_FILE: Scenario whose camera and vision blocks are used
            by ``lane-detect`` and the ``/lane-detect`` endpoint.
        DEFAULT_TRACKING_URI: URI of the MLflow Tracking backend used by
            ``bench suite --track``.
        DEFAULT_EXPERIMENT_NAME: MLflow experiment that receives suite runs.
        SUITE_N_JOBS: Number of worker processes for ``bench suite``.
        LOG_LEVEL: Root logging level for the application.
    """

    API_KEY: str | None = None
    DEFAULT_SCENARIO_DIR: str = "scenarios"
    DEFAULT_SCENARIO_FILE: str = "scenarios/reference.yaml"
    DEFAULT_TRACKING_URI: str = "file:./mlruns"
    DEFAULT_EXPERIMENT_NAME: str = "planner-benchmark"
    SUITE_N_JOBS: int = 1
    LOG_LEVEL: str = "INFO"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
    )


settings = Settings()
"""Public, eagerly-instantiated singleton holding the resolved configuration."""
