# tests/conftest.py
import json
from pathlib import Path

import numpy as np
import pytest

from uavplan.config import settings
from uavplan.models.config_model import ScaConfig
from uavplan.models.scenario_model import Scenario, ScenarioSpec

SCENARIO_DIR = Path(settings.SCENARIO_DIR)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-size scenario tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def small_spec(**overrides) -> ScenarioSpec:
    """Two GNs 300 m apart, one-minute period, 12 slots"""
    values = dict(
        gn_positions=[[-150.0, 0.0], [150.0, 0.0]],
        altitude_m=100.0,
        period_s=60.0,
        slots=12,
        ref_snr_db=80.0,
        peak_power_dbm=10.0,
        prop_limit_w=150.0,
        bandwidth_hz=1e6,
        v_min=3.0,
        v_max=100.0,
        a_max=5.0,
    )
    values.update(overrides)
    return ScenarioSpec(**values)


@pytest.fixture
def scenario() -> Scenario:
    return small_spec().to_scenario()


@pytest.fixture
def single_gn_scenario() -> Scenario:
    return small_spec(gn_positions=[[0.0, 0.0]]).to_scenario()


@pytest.fixture
def default_scenario() -> Scenario:
    return ScenarioSpec.model_validate_json((SCENARIO_DIR / "paper_default.json").read_text()).to_scenario()


@pytest.fixture
def cfg() -> ScaConfig:
    return ScaConfig(max_outer_iters=15, max_dinkelbach_rounds=10, max_alternations=8, audit_tol=1e-5)


@pytest.fixture
def scenario_file(tmp_path) -> Path:
    path = tmp_path / "small.json"
    path.write_text(small_spec().model_dump_json())
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload))
    return path
