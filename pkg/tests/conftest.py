"""Shared fixtures."""

import os
from pathlib import Path

import numpy as np
import pytest

from bench.data import ScenarioLoader
from core.schemas import Scenario, VehicleParams

# MLflow >= 3.x refuses file: tracking URIs unless explicitly allowed.
os.environ.setdefault("MLFLOW_ALLOW_FILE_STORE", "true")

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def vehicle() -> VehicleParams:
    return VehicleParams()


@pytest.fixture
def scenario_dir() -> Path:
    return SCENARIO_DIR


@pytest.fixture
def reference_scenario() -> Scenario:
    return ScenarioLoader(SCENARIO_DIR / "reference.yaml").load()


@pytest.fixture
def straight_scenario() -> Scenario:
    return ScenarioLoader(SCENARIO_DIR / "straight.yaml").load()


@pytest.fixture
def blocked_scenario() -> Scenario:
    return ScenarioLoader(SCENARIO_DIR / "blocked_lane.yaml").load()
