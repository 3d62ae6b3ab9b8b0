# tests/test_cli.py
import json

import pytest

from tests.conftest import small_spec, write_json
from uavplan.main import main


def _metrics(outdir) -> dict:
    return json.loads((outdir / "metrics.json").read_text())


def _expected_code(metrics: dict) -> int:
    return 0 if metrics["status"] == "converged" and metrics["feasible"] else 2


def test_usage_error_exits_with_one(capsys):
    assert main([]) == 1
    assert main(["plan-minrate"]) == 1
    assert main(["plan-minrate", "--scenario", "x.json", "--plim-w", "lots"]) == 1


def test_invalid_scenario_exits_with_one(tmp_path):
    payload = small_spec().model_dump()
    payload["slots"] = 0
    bad = write_json(tmp_path / "bad.json", payload)
    assert main(["plan-minrate", "--scenario", str(bad), "--out", str(tmp_path / "out")]) == 1


def test_infeasible_scenario_exits_with_three(tmp_path):
    payload = small_spec(v_min=90.0, v_max=100.0, period_s=100.0, slots=20, prop_limit_w=None).model_dump()
    path = write_json(tmp_path / "tight.json", payload)
    assert main(["plan-minrate", "--scenario", str(path), "--out", str(tmp_path / "out")]) == 3


def test_prop_limit_below_minimum_power_exits_with_three(scenario_file, tmp_path):
    starved = write_json(tmp_path / "starved.json", small_spec(prop_limit_w=50.0).model_dump())
    assert main(["plan-minrate", "--scenario", str(starved), "--out", str(tmp_path / "a")]) == 3
    assert main(["plan-minrate", "--scenario", str(scenario_file), "--out", str(tmp_path / "b"),
                 "--plim-w", "50"]) == 3


def test_plan_then_eval_round_trip(scenario_file, tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["plan-minrate", "--scenario", str(scenario_file), "--out", str(out), "--max-iters", "3"])
    assert code == _expected_code(_metrics(out))
    for name in ("trajectory.csv", "powers.csv", "metrics.json", "trace.csv"):
        assert (out / name).is_file(), name
    planned = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert planned["problem"] == "minrate"

    code = main(["eval", "--scenario", str(scenario_file), "--plan", str(out / "trajectory.csv"),
                 "--powers", str(out / "powers.csv"), "--out", str(tmp_path / "eval")])
    assert code == 0
    evaluated = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert evaluated["feasible"]
    assert evaluated["min_avg_rate_bps_hz"] == pytest.approx(planned["min_avg_rate_bps_hz"], rel=1e-9)
    assert (tmp_path / "eval" / "metrics.json").is_file()


def test_circular_plan_then_eval_round_trip(scenario_file, tmp_path, capsys):
    out = tmp_path / "circle"
    code = main(["baseline-circular-minrate", "--scenario", str(scenario_file), "--out", str(out),
                 "--max-iters", "3"])
    metrics = _metrics(out)
    assert code == _expected_code(metrics)
    planned = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert planned["problem"] == "circular_minrate"

    code = main(["eval", "--scenario", str(scenario_file), "--plan", str(out / "trajectory.csv"),
                 "--powers", str(out / "powers.csv")])
    evaluated = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert evaluated["feasible"] == metrics["feasible"]
    assert code == (0 if metrics["feasible"] else 3)
    assert "angular_kinematics" in evaluated["feasibility_residuals"]
    assert evaluated["min_avg_rate_bps_hz"] == pytest.approx(planned["min_avg_rate_bps_hz"], rel=1e-9)


def test_iteration_cap_reports_max_iter(scenario_file, tmp_path):
    code = main(["plan-minrate", "--scenario", str(scenario_file), "--out", str(tmp_path),
                 "--max-iters", "1", "--tol", "1e-12"])
    metrics = _metrics(tmp_path)
    assert metrics["status"] == "max_iter"
    assert metrics["iterations"] == 1
    assert code == 2


def test_max_iters_caps_the_circular_baseline(scenario_file, tmp_path):
    code = main(["baseline-circular-minrate", "--scenario", str(scenario_file), "--out", str(tmp_path),
                 "--max-iters", "1", "--tol", "1e-12"])
    metrics = _metrics(tmp_path)
    assert metrics["iterations"] <= 1
    assert len(metrics["objective_trace"]) <= 2
    assert code == 2


def test_plim_none_is_accepted(scenario_file, tmp_path):
    code = main(["baseline-circular-minrate", "--scenario", str(scenario_file), "--out", str(tmp_path),
                 "--max-iters", "2", "--plim-w", "none"])
    metrics = _metrics(tmp_path)
    assert metrics["iterations"] <= 2
    assert code == _expected_code(metrics)
    assert "prop_limit" not in metrics["feasibility_residuals"]


def test_directory_run_writes_one_folder_per_scenario(tmp_path):
    scenarios = tmp_path / "scenarios"
    scenarios.mkdir()
    for name in ("a", "b"):
        (scenarios / f"{name}.json").write_text(small_spec(slots=8).model_dump_json())
    out = tmp_path / "out"
    code = main(["plan-ee", "--scenario", str(scenarios), "--out", str(out), "--max-iters", "2", "--jobs", "1"])
    assert code == max(_expected_code(_metrics(out / name)) for name in ("a", "b"))
    assert (out / "a" / "metrics.json").is_file()
    assert (out / "b" / "dinkelbach.csv").is_file()


def test_verify_surrogates_passes(capsys):
    assert main(["verify-surrogates", "--samples", "500"]) == 0
    checks = [json.loads(line) for line in capsys.readouterr().out.strip().splitlines()]
    assert len(checks) == 7
    assert all(check["passed"] for check in checks)
