# uavplan/services/results_service.py
import logging
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from uavplan.errors import ScenarioValidationError, UavPlanError
from uavplan.models.plan_model import CircularState, FlightPlan, LinkPlan, PlanReport, Trajectory
from uavplan.models.scenario_model import Scenario
from uavplan.services.circular import circular_report, circular_state_from_profile
from uavplan.services.system_model import channel_gains, evaluate_plan, propulsion_powers

logger = logging.getLogger(__name__)

# Full double precision so that dump -> eval reproduces the metrics
FLOAT_FORMAT = "%.17g"

TRAJECTORY_FILE = "trajectory.csv"
POWERS_FILE = "powers.csv"
METRICS_FILE = "metrics.json"
TRACE_FILE = "trace.csv"
DINKELBACH_FILE = "dinkelbach.csv"

# Extra trajectory columns of circular plans; eval audits those plans in angular variables
CIRCULAR_COLUMNS = ("r", "theta", "omega", "alpha")


def _power_columns(K: int):
    return [f"p_{k + 1}" for k in range(K)]


def trajectory_frame(scenario: Scenario, plan: FlightPlan, state: Optional[CircularState] = None) -> pd.DataFrame:
    """One row per slot 0..N; slot 0 repeats slot N's transmit powers"""
    traj, p = plan.trajectory, plan.link.p
    N = traj.slots
    frame = pd.DataFrame({
        "n": np.arange(N + 1),
        "t": np.arange(N + 1) * scenario.slot_len,
        "qx": traj.q[:, 0], "qy": traj.q[:, 1],
        "vx": traj.v[:, 0], "vy": traj.v[:, 1],
        "ax": traj.a[:, 0], "ay": traj.a[:, 1],
        "speed": traj.speed,
        "p_prop_w": propulsion_powers(scenario, traj.v, traj.a),
    })
    powers = np.hstack([p[:, -1:], p]).T
    for name, column in zip(_power_columns(p.shape[0]), powers.T):
        frame[name] = column
    if state is not None:
        frame["r"] = state.radius
        frame["theta"], frame["omega"], frame["alpha"] = state.theta, state.omega, state.alpha
    return frame


def trace_frame(report: PlanReport) -> pd.DataFrame:
    """Objective trace with the surrogate optimum that produced each iterate (NaN at each round's start)"""
    rounds = report.trace_round or [0] * len(report.objective_trace)
    surrogate, remaining = [], list(report.surrogate_trace)
    for i, r in enumerate(rounds):
        starts_round = i == 0 or rounds[i - 1] != r
        surrogate.append(np.nan if starts_round or not remaining else remaining.pop(0))
    return pd.DataFrame({
        "iteration": np.arange(len(report.objective_trace)),
        "round": rounds,
        "objective": report.objective_trace,
        "surrogate": surrogate,
    })


def dump_results(scenario: Scenario, plan: FlightPlan, report: PlanReport, outdir: Union[str, Path],
                 state: Optional[CircularState] = None) -> Dict[str, Path]:
    """
    Write trajectory, powers, metrics and trace files; returns the written paths by kind.

    Circular plans pass their state so the trajectory file carries the angular
    profile the plan was audited with.
    """
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {
            "trajectory": outdir / TRAJECTORY_FILE,
            "powers": outdir / POWERS_FILE,
            "metrics": outdir / METRICS_FILE,
            "trace": outdir / TRACE_FILE,
        }
        trajectory_frame(scenario, plan, state).to_csv(paths["trajectory"], index=False, float_format=FLOAT_FORMAT)

        p = plan.link.p
        powers = pd.DataFrame(p.T, columns=_power_columns(p.shape[0]))
        powers.insert(0, "n", np.arange(1, p.shape[1] + 1))
        powers.to_csv(paths["powers"], index=False, float_format=FLOAT_FORMAT)

        paths["metrics"].write_text(report.model_dump_json(indent=2))
        trace_frame(report).to_csv(paths["trace"], index=False, float_format=FLOAT_FORMAT)

        if report.lambda_trace:
            paths["dinkelbach"] = outdir / DINKELBACH_FILE
            pd.DataFrame({
                "round": np.arange(len(report.lambda_trace)),
                "lambda_bits_per_joule": report.lambda_trace,
                "F": report.dinkelbach_trace,
            }).to_csv(paths["dinkelbach"], index=False, float_format=FLOAT_FORMAT)
    except OSError as e:
        raise UavPlanError(f"Cannot write results to {outdir}: {e}") from e

    logger.info("Wrote %s results to %s", report.problem, outdir)
    return paths


def _read_frames(scenario: Scenario, trajectory_path: Union[str, Path],
                 powers_path: Union[str, Path]) -> Tuple[pd.DataFrame, pd.DataFrame]:
    try:
        traj = pd.read_csv(trajectory_path)
        powers = pd.read_csv(powers_path)
    except (OSError, pd.errors.ParserError) as e:
        raise ScenarioValidationError(f"Cannot read plan files: {e}") from e

    N, K = scenario.slots, scenario.num_gns
    missing = [c for c in ("qx", "qy", "vx", "vy", "ax", "ay") if c not in traj.columns]
    missing += [c for c in _power_columns(K) if c not in powers.columns]
    if missing:
        raise ScenarioValidationError(f"Plan files are missing columns: {', '.join(missing)}")
    if len(traj) != N + 1 or len(powers) != N:
        raise ScenarioValidationError(
            f"Plan files do not match the scenario: expected {N + 1} trajectory and {N} power rows, "
            f"got {len(traj)} and {len(powers)}"
        )
    return traj, powers


def load_plan(scenario: Scenario, trajectory_path: Union[str, Path],
              powers_path: Union[str, Path]) -> Tuple[Trajectory, np.ndarray]:
    """Read a trajectory CSV (slots 0..N) and a power CSV (slots 1..N)"""
    traj, powers = _read_frames(scenario, trajectory_path, powers_path)
    trajectory = Trajectory(
        q=traj[["qx", "qy"]].to_numpy(dtype=float),
        v=traj[["vx", "vy"]].to_numpy(dtype=float),
        a=traj[["ax", "ay"]].to_numpy(dtype=float),
    )
    return trajectory, powers[_power_columns(scenario.num_gns)].to_numpy(dtype=float).T


def evaluate_files(scenario: Scenario, trajectory_path: Union[str, Path], powers_path: Union[str, Path],
                   audit_tol: float = 1e-5) -> Tuple[FlightPlan, PlanReport]:
    """Metrics and audit of a plan stored on disk; circular plans get the angular audit"""
    trajectory, p = load_plan(scenario, trajectory_path, powers_path)
    columns = pd.read_csv(trajectory_path, nrows=0).columns
    try:
        if all(c in columns for c in CIRCULAR_COLUMNS):
            traj = pd.read_csv(trajectory_path)
            state = circular_state_from_profile(
                scenario, float(traj["r"].iloc[0]), traj["theta"].to_numpy(dtype=float),
                traj["omega"].to_numpy(dtype=float), traj["alpha"].to_numpy(dtype=float), p,
            )
            return circular_report(scenario, state, "eval", audit_tol)
        link = LinkPlan(G=p * channel_gains(scenario, trajectory.q[1:]), p=p)
        plan = FlightPlan(trajectory=trajectory, link=link)
        return plan, evaluate_plan(scenario, plan, "eval", audit_tol)
    except ValueError as e:
        raise ScenarioValidationError(f"Plan cannot be evaluated: {e}") from e
