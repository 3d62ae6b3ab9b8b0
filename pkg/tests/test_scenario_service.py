# tests/test_scenario_service.py
import pytest

from tests.conftest import SCENARIO_DIR, small_spec, write_json
from uavplan.errors import InfeasibleScenarioError, ScenarioValidationError
from uavplan.models.scenario_model import DEFAULT_C1
from uavplan.services.scenario_service import generate_layout, list_scenarios, load_scenario, write_scenario


def test_bundled_default_scenario():
    scenario = load_scenario(SCENARIO_DIR / "paper_default.json")
    assert scenario.ref_snr == pytest.approx(1e8)
    assert scenario.peak_power == pytest.approx(0.01)
    assert scenario.c1 == DEFAULT_C1
    assert scenario.prop_limit == 150.0


def test_prop_limit_override(scenario_file):
    assert load_scenario(scenario_file, prop_limit=None).prop_limit is None
    assert load_scenario(scenario_file, prop_limit=200.0).prop_limit == 200.0
    assert load_scenario(scenario_file).prop_limit == 150.0


def test_invalid_field_is_named(tmp_path):
    payload = small_spec().model_dump()
    payload["slots"] = 0
    with pytest.raises(ScenarioValidationError, match="slots"):
        load_scenario(write_json(tmp_path / "bad.json", payload))


def test_physics_violation_is_rejected(tmp_path):
    payload = small_spec().model_dump()
    payload["v_min"] = 200.0
    with pytest.raises(ScenarioValidationError):
        load_scenario(write_json(tmp_path / "slow.json", payload))


def test_prop_limit_below_minimum_power_is_infeasible(scenario_file, tmp_path):
    starved = write_json(tmp_path / "starved.json", small_spec(prop_limit_w=50.0).model_dump())
    with pytest.raises(InfeasibleScenarioError, match="minimum achievable"):
        load_scenario(starved)
    with pytest.raises(InfeasibleScenarioError):
        load_scenario(scenario_file, prop_limit=50.0)
    assert load_scenario(starved, prop_limit=None).prop_limit is None


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ScenarioValidationError, match="not found"):
        load_scenario(tmp_path / "absent.json")
    garbage = tmp_path / "garbage.json"
    garbage.write_text("{not json")
    with pytest.raises(ScenarioValidationError, match="not valid JSON"):
        load_scenario(garbage)


def test_list_scenarios_is_sorted():
    paths = list_scenarios()
    assert [p.name for p in paths] == sorted(p.name for p in paths)
    assert "paper_default.json" in [p.name for p in paths]
    with pytest.raises(ScenarioValidationError):
        list_scenarios(SCENARIO_DIR / "missing")


def test_generate_layout_is_deterministic():
    first = generate_layout(4, side_m=500.0, seed=3)
    assert first == generate_layout(4, side_m=500.0, seed=3)
    assert first != generate_layout(4, side_m=500.0, seed=4)
    assert all(abs(x) <= 250.0 and abs(y) <= 250.0 for x, y in first)
    with pytest.raises(ValueError):
        generate_layout(0)


def test_written_scenario_loads_back(tmp_path):
    spec = small_spec(gn_positions=generate_layout(3))
    path = write_scenario(spec, tmp_path / "nested" / "generated.json")
    scenario = load_scenario(path)
    assert scenario.num_gns == 3
    assert scenario.slots == spec.slots
