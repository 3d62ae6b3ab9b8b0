# tests/test_results_service.py
import json

import numpy as np
import pandas as pd
import pytest

from uavplan.errors import ScenarioValidationError
from uavplan.models.plan_model import PlanReport
from uavplan.services.circular import circular_report, circular_state_from_radius, init_plan
from uavplan.services.oracle import recompute_metrics
from uavplan.services.results_service import (
    dump_results,
    evaluate_files,
    load_plan,
    trace_frame,
    trajectory_frame,
)
from uavplan.services.system_model import evaluate_plan


@pytest.fixture
def stored(tmp_path, scenario):
    plan = init_plan(scenario)
    report = evaluate_plan(scenario, plan, "minrate", objective_trace=[0.5, 0.6], surrogate_trace=[0.6])
    paths = dump_results(scenario, plan, report, tmp_path / "run")
    return plan, report, paths


def test_trajectory_frame_layout(scenario):
    plan = init_plan(scenario)
    frame = trajectory_frame(scenario, plan)
    assert list(frame.columns) == ["n", "t", "qx", "qy", "vx", "vy", "ax", "ay", "speed", "p_prop_w", "p_1", "p_2"]
    assert len(frame) == scenario.slots + 1
    assert frame["t"].iloc[-1] == pytest.approx(scenario.period)
    # slot 0 repeats slot N's powers
    np.testing.assert_array_equal(frame[["p_1", "p_2"]].iloc[0], plan.link.p[:, -1])


def test_trace_frame_marks_round_starts():
    report = PlanReport(problem="ee", objective_trace=[1.0, 2.0, 3.0, 4.0, 5.0], trace_round=[0, 0, 0, 1, 1],
                        surrogate_trace=[2.5, 3.5, 5.5])
    frame = trace_frame(report)
    assert frame["round"].tolist() == [0, 0, 0, 1, 1]
    surrogate = frame["surrogate"].to_numpy()
    assert np.isnan(surrogate[0]) and np.isnan(surrogate[3])
    np.testing.assert_array_equal(surrogate[[1, 2, 4]], [2.5, 3.5, 5.5])


def test_dump_writes_every_file(stored):
    _, report, paths = stored
    assert set(paths) == {"trajectory", "powers", "metrics", "trace"}
    assert all(path.is_file() for path in paths.values())
    metrics = json.loads(paths["metrics"].read_text())
    assert metrics["problem"] == "minrate"
    assert metrics["min_avg_rate"] == report.min_avg_rate
    powers = pd.read_csv(paths["powers"])
    assert powers["n"].tolist() == list(range(1, 13))


def test_dinkelbach_file_only_for_fractional_runs(tmp_path, scenario):
    plan = init_plan(scenario, mode="ee")
    report = evaluate_plan(scenario, plan, "ee", objective_trace=[1.0, 2.0], trace_round=[0, 1],
                           lambda_trace=[0.0, 1e3], dinkelbach_trace=[5.0, 0.1])
    paths = dump_results(scenario, plan, report, tmp_path)
    frame = pd.read_csv(paths["dinkelbach"])
    assert frame.columns.tolist() == ["round", "lambda_bits_per_joule", "F"]
    assert frame["lambda_bits_per_joule"].tolist() == [0.0, 1e3]


def test_eval_reproduces_dumped_metrics(stored, scenario):
    plan, report, paths = stored
    reloaded, evaluated = evaluate_files(scenario, paths["trajectory"], paths["powers"])
    np.testing.assert_array_equal(reloaded.trajectory.q, plan.trajectory.q)
    np.testing.assert_array_equal(reloaded.link.p, plan.link.p)
    assert evaluated.feasible
    for key in ("min_avg_rate", "avg_prop_power_w", "ee_bits_per_joule", "avg_speed"):
        assert getattr(evaluated, key) == pytest.approx(getattr(report, key), rel=1e-9, abs=1e-12), key


def test_load_plan_rejects_wrong_row_counts(stored, scenario, tmp_path):
    _, _, paths = stored
    short = tmp_path / "short.csv"
    pd.read_csv(paths["powers"]).iloc[:-1].to_csv(short, index=False)
    with pytest.raises(ScenarioValidationError, match="expected 13 trajectory and 12 power rows"):
        load_plan(scenario, paths["trajectory"], short)


def test_load_plan_names_missing_columns(stored, scenario, tmp_path):
    _, _, paths = stored
    broken = tmp_path / "broken.csv"
    pd.read_csv(paths["trajectory"]).drop(columns=["ay"]).to_csv(broken, index=False)
    with pytest.raises(ScenarioValidationError, match="ay"):
        load_plan(scenario, broken, paths["powers"])


def test_load_plan_reports_missing_files(scenario, tmp_path):
    with pytest.raises(ScenarioValidationError):
        load_plan(scenario, tmp_path / "nope.csv", tmp_path / "nope.csv")


def test_dumped_metrics_match_the_oracle(stored, scenario):
    plan, _, paths = stored
    metrics = json.loads(paths["metrics"].read_text())
    reference = recompute_metrics(scenario, plan.trajectory, plan.link.p)
    assert metrics["ee_bits_per_joule"] == pytest.approx(reference["ee_bits_per_joule"], rel=1e-6)
    assert metrics["min_avg_rate"] == pytest.approx(reference["min_avg_rate"], rel=1e-6)


def test_circular_plan_is_evaluated_in_angular_variables(tmp_path, scenario):
    state = circular_state_from_radius(scenario, 200.0)
    plan, report = circular_report(scenario, state, "circular_minrate", 1e-5)
    paths = dump_results(scenario, plan, report, tmp_path, state)
    frame = pd.read_csv(paths["trajectory"])
    assert frame["r"].unique().tolist() == [200.0]
    np.testing.assert_array_equal(frame["theta"], state.theta)

    _, evaluated = evaluate_files(scenario, paths["trajectory"], paths["powers"])
    assert evaluated.feasible == report.feasible
    assert "angular_kinematics" in evaluated.feasibility_residuals
    assert "cartesian_kinematics_position" in evaluated.feasibility_residuals
    assert evaluated.min_avg_rate == pytest.approx(report.min_avg_rate, rel=1e-9)
