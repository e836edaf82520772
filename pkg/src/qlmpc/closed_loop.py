"""Receding-horizon simulation and closed-loop cost accounting.

Each step solves the OCP from the current state (warm-shifted guess
after the first step), applies the first input, and propagates the
plant with the same discrete-time model the controller uses, so the
reported suboptimality is not confounded by model mismatch.  A second
run with a tightly converged exact controller provides the reference
for the relative cumulative suboptimality (RCSO).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from time import perf_counter
from typing import Optional

import numpy as np

from .errors import ConfigError, SolverError
from .models import eval_dynamics, get_model
from .solver import IterateTrace, SolverOptions, initial_guess, solve_ocp, warm_shift
from .stacked import StackedProblem, Weights

Array = np.ndarray

REFERENCE_OPTIONS = SolverOptions(variant="exact", mode="converge", stop_tol=1e-10, max_iter=100)

SCENARIO_IDS = ("unicycle", "adip", "tiny-lti", "tiny-qlpv")


@dataclass(frozen=True)
class Scenario:
    name: str
    model_id: str
    x0: Array
    steps: int
    horizon: int
    weights: Weights
    controller: SolverOptions
    reference_controller: SolverOptions = REFERENCE_OPTIONS

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")


@dataclass(frozen=True)
class PerStepStats:
    iterations: int
    solve_time_s: float
    prep_time_s: float
    qp_time_s: float


@dataclass
class ScenarioResult:
    states: Array        # (completed_steps + 1, n_x)
    inputs: Array        # (completed_steps, n_u)
    dr: Array            # cumulative closed-loop cost, per step
    rcso: Array          # relative excess over the reference, nan if undefined
    per_step: list
    reference_dr: Array
    failed: bool = False
    failure_step: Optional[int] = None
    failure_message: Optional[str] = None
    note: Optional[str] = None


def distance_to_reference(states, inputs, Q, R, k: int) -> float:
    """Cumulative weighted cost sum_{i<=k} x_i' Q x_i + u_i' R u_i."""
    series = dr_series(states, inputs, Q, R)
    if not 0 <= k < series.size:
        raise ValueError(f"step index {k} out of range for {series.size} steps")
    return float(series[k])


def dr_series(states, inputs, Q, R) -> Array:
    """Cumulative stage costs; ``inputs`` has one row per applied step."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    states = np.asarray(states, dtype=float).reshape(-1, Q.shape[0])
    inputs = np.asarray(inputs, dtype=float).reshape(-1, R.shape[0])
    n = inputs.shape[0]
    if n == 0:
        return np.zeros(0)
    stage = np.array([
        states[i] @ (Q @ states[i]) + inputs[i] @ (R @ inputs[i]) for i in range(n)
    ])
    return np.cumsum(stage)


def rcso(dr_controller, dr_reference, k: int) -> float:
    """Relative cumulative suboptimality at step k; nan when undefined."""
    num = float(np.asarray(dr_controller)[k])
    den = float(np.asarray(dr_reference)[k])
    if den <= 0.0:
        return math.nan
    return (num - den) / den


def run_control_loop(prob: StackedProblem, x0, steps: int, opts: SolverOptions):
    """Drive the plant for ``steps`` samples; returns partial data on failure.

    Returns (states, inputs, per_step, failure_step, failure_message);
    failure_step is None when the whole horizon completed.
    """
    x0 = prob.check_x0(x0)
    states = [x0]
    inputs = []
    stats = []
    y_prev = None
    for k in range(steps):
        xk = states[-1]
        try:
            if y_prev is None:
                guess = initial_guess(prob, xk)
            else:
                guess = warm_shift(prob, y_prev, xk)
            t0 = perf_counter()
            trace: IterateTrace = solve_ocp(prob, xk, guess, opts)
            solve_s = perf_counter() - t0
        except SolverError as exc:
            return states, inputs, stats, k, str(exc)
        z = trace.final
        u0 = z.y[prob.u_slice(0)].copy()
        inputs.append(u0)
        states.append(eval_dynamics(prob.model, xk, u0))
        stats.append(PerStepStats(
            iterations=trace.iterations,
            solve_time_s=solve_s,
            prep_time_s=float(sum(e.prep_time for e in trace.iterates)),
            qp_time_s=float(sum(e.qp_time for e in trace.iterates)),
        ))
        y_prev = z.y
    return states, inputs, stats, None, None


def simulate(scn: Scenario) -> ScenarioResult:
    """Run the configured controller and the converged-exact reference.

    Both closed loops start from the same initial state.  DR uses the
    scenario's Q and R; the RCSO series is the controller's relative
    excess over the reference and is truncated on failure.
    """
    model = get_model(scn.model_id)
    prob = StackedProblem.build(model, scn.horizon, scn.weights)

    states, inputs, stats, fail_step, fail_msg = run_control_loop(
        prob, scn.x0, scn.steps, scn.controller)
    ref_states, ref_inputs, _, ref_fail, ref_msg = run_control_loop(
        prob, scn.x0, scn.steps, scn.reference_controller)

    q, r = scn.weights.Q, scn.weights.R
    dr = dr_series(states, inputs, q, r)
    dr_ref = dr_series(ref_states, ref_inputs, q, r)
    n = min(dr.size, dr_ref.size)
    rcso_vals = np.array([rcso(dr, dr_ref, k) for k in range(n)])

    failed = fail_step is not None or ref_fail is not None
    message = fail_msg if fail_msg is not None else ref_msg
    step = fail_step if fail_step is not None else ref_fail
    return ScenarioResult(
        states=np.asarray(states),
        inputs=np.asarray(inputs).reshape(len(inputs), prob.n_u),
        dr=dr,
        rcso=rcso_vals,
        per_step=stats,
        reference_dr=dr_ref,
        failed=failed,
        failure_step=step,
        failure_message=message,
        note=model.note,
    )


def builtin_scenario(name: str, variant: str = "standard", mode: Optional[str] = None,
                     stop_tol: Optional[float] = None, max_iter: Optional[int] = None) -> Scenario:
    """Benchmark scenarios by name; mode defaults follow the benchmark setup.

    The unicycle runs in real-time single-iteration mode by default, the
    other scenarios iterate to convergence.
    """
    presets = {
        "unicycle": dict(
            model_id="unicycle",
            x0=np.array([1.0, 2.0, 0.0, math.pi, 0.0]),
            steps=100,
            horizon=20,
            weights=Weights(Q=np.diag([1.0, 1.0, 0.1, 1.0, 0.1]),
                            R=np.diag([1.0, 1.0]),
                            P=np.diag([1.0, 1.0, 0.1, 1.0, 0.1])),
            default_mode="real_time_single_iteration",
        ),
        "adip": dict(
            model_id="adip",
            x0=np.array([math.pi / 3.0, 0.0, 0.0, 0.0]),
            steps=200,
            horizon=40,
            weights=Weights(Q=np.diag([200.0, 1000.0, 0.1, 10.0]),
                            R=np.array([[2000.0]]),
                            P=np.diag([200.0, 1000.0, 0.1, 10.0])),
            default_mode="converge",
        ),
        "tiny-lti": dict(
            model_id="tiny-lti",
            x0=np.array([1.0]),
            steps=5,
            horizon=3,
            weights=Weights(Q=np.eye(1), R=np.eye(1), P=np.eye(1)),
            default_mode="converge",
        ),
        "tiny-qlpv": dict(
            model_id="tiny-qlpv",
            x0=np.array([0.5]),
            steps=5,
            horizon=1,
            weights=Weights(Q=np.eye(1), R=np.eye(1), P=np.eye(1)),
            default_mode="converge",
        ),
    }
    if name not in presets:
        raise ConfigError(f"unknown scenario {name!r}, expected one of {SCENARIO_IDS}")
    p = presets[name]
    opts = SolverOptions(
        variant=variant,
        mode=mode if mode is not None else p["default_mode"],
        stop_tol=stop_tol if stop_tol is not None else 1e-6,
        max_iter=max_iter if max_iter is not None else 30,
    )
    return Scenario(
        name=name,
        model_id=p["model_id"],
        x0=p["x0"],
        steps=p["steps"],
        horizon=p["horizon"],
        weights=p["weights"],
        controller=opts,
    )
