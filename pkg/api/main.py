"""
FastAPI application exposing lane detection and closed-loop episodes.

Key points
----------
* API-key header security (`X-API-Key`) on the episode endpoint.
* Logging of request id, scenario, planner and outcome.

Endpoints
---------
/health
    Quick liveness check.
/lane-detect
    Lane target of one raw P6 camera frame.
/episodes
    Simulate a scenario and return its metrics (requires `X-API-Key`).
"""

from __future__ import annotations

import logging
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path
from typing import Annotated

from fastapi import Body, Depends, FastAPI, HTTPException, Query, Request, status
from fastapi.security.api_key import APIKeyHeader
from PIL import UnidentifiedImageError

from bench.data import ScenarioLoader
from core.config import settings
from core.errors import ScenarioConfigError
from core.imageio import read_ppm
from core.lane_vision import LanePipeline
from core.schemas import (
    CameraConfig,
    EpisodeRequest,
    LaneTarget,
    LaneVisionConfig,
    RunMetrics,
)
from core.simulation import run_episode

logging.basicConfig(
    level=settings.LOG_LEVEL,
    format="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
)
logger = logging.getLogger("api")

api_key_header = APIKeyHeader(name="X-API-Key", auto_error=False)


def require_api_key(
    api_key: Annotated[str | None, Depends(api_key_header)],
) -> str:
    """
    Guard for endpoints that run simulations.

    Args:
        api_key: Content of the `X-API-Key` header, ``None`` when missing.

    Returns:
        The accepted key.

    Raises:
        HTTPException: If the header is missing, no key is configured, or the
            key does not match :pydataattr:`core.config.settings.API_KEY`.
    """
    if api_key and settings.API_KEY and api_key == settings.API_KEY:
        return api_key
    raise HTTPException(
        status_code=status.HTTP_401_UNAUTHORIZED,
        detail="Invalid or missing API key.",
    )


@lru_cache(maxsize=1)
def get_lane_pipeline() -> LanePipeline:
    """
    Build a single :class:`core.lane_vision.LanePipeline` instance.

    The camera and vision blocks come from
    :pydataattr:`core.config.settings.DEFAULT_SCENARIO_FILE` when it exists,
    otherwise from the schema defaults.
    """
    path = Path(settings.DEFAULT_SCENARIO_FILE)
    if path.exists():
        scenario = ScenarioLoader(path).load()
        vision, camera = scenario.vision, scenario.camera
        logger.info("Lane pipeline configured from %s", path)
    else:
        vision, camera = LaneVisionConfig(), CameraConfig()
        logger.info("Lane pipeline configured with defaults")
    return LanePipeline(vision, camera)


app = FastAPI(
    title="Planner Bench API",
    version="0.1.0",
    description="Lane detection and local-planner episodes over HTTP.",
)


@app.get("/health", tags=["Utility"])
def health() -> dict[str, str]:
    """Liveness check with the server time in UTC."""
    return {"status": "ok", "timestamp": datetime.now(tz=timezone.utc).isoformat()}


@app.post("/lane-detect", response_model=LaneTarget, tags=["Vision"])
def lane_detect(
    image: Annotated[bytes, Body(media_type="application/octet-stream")],
    pipeline: Annotated[LanePipeline, Depends(get_lane_pipeline)],
    speed: Annotated[float, Query(ge=0.0)] = 0.0,
) -> LaneTarget:
    """
    Detect the red centre line in one camera frame.

    Args:
        image: Raw binary P6 file.
        pipeline: Dependency-injected lane pipeline.
        speed: Vehicle speed used by the lookahead law.

    Returns:
        The :class:`core.schemas.LaneTarget` in the vehicle frame.
    """
    try:
        frame = read_ppm(image)
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail="Body is not a valid P6 image.",
        ) from e
    return pipeline.detect(frame, speed)


@app.post(
    "/episodes",
    response_model=RunMetrics,
    dependencies=[Depends(require_api_key)],
    tags=["Simulation"],
)
def episodes(payload: EpisodeRequest, request: Request) -> RunMetrics:
    """
    Run one closed-loop episode.

    Args:
        payload: Scenario and an optional planner override.
        request: Incoming request; its `X-Request-ID` header tags the log line.

    Returns:
        The episode :class:`core.schemas.RunMetrics`.
    """
    scenario = payload.scenario
    if payload.planner is not None:
        scenario = scenario.with_planner(payload.planner)
    try:
        metrics, _ = run_episode(scenario)
    except ScenarioConfigError as e:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e)
        ) from e

    logger.info(
        "request_id=%s | scenario=%s | planner=%s | avoided=%d/%d | collided=%s",
        request.headers.get("X-Request-ID", "n/a"),
        metrics.scenario,
        metrics.planner,
        metrics.obstacles_avoided,
        metrics.obstacles_total,
        metrics.collided,
    )
    return metrics
