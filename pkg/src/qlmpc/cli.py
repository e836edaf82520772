"""Command-line entry point: run scenarios and diagnostics from configs.

Subcommands ``simulate`` and ``diagnose`` read an optional JSON config,
apply flag overrides, and write CSV/JSON outputs suitable for plotting
and tabulation downstream.  Exit codes: 0 success, 2 usage or config
error, 3 numerical failure (partial outputs are still written, flagged).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import statistics
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .closed_loop import (
    Scenario,
    ScenarioResult,
    builtin_scenario,
    run_control_loop,
    simulate,
)
from .diagnostics import (
    contraction_fit,
    sqp_equivalence_max_deviation,
    trace_for_contraction,
    verify_fixpoint_perturbation,
)
from .errors import ConfigError, SolverError
from .models import get_model
from .solver import SolverOptions, initial_guess, solve_ocp
from .stacked import StackedProblem, Weights

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_MODE_ALIASES = {
    "rti": "real_time_single_iteration",
    "converge": "converge",
    "real_time_single_iteration": "real_time_single_iteration",
}


@dataclass
class RunConfig:
    """Merged configuration for one CLI invocation."""

    scenario: object = "unicycle"   # builtin name or inline scenario dict
    variant: str = "standard"
    mode: Optional[str] = None      # None -> scenario default
    tol: Optional[float] = None
    max_iter: Optional[int] = None
    repeat: int = 50
    seed: int = 0
    out: str = "results"

    def __post_init__(self):
        if self.repeat < 1:
            raise ConfigError(f"repeat must be >= 1, got {self.repeat}")


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return data


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """defaults < config file < command-line flags < QLMPC_SEED env var."""
    merged: dict = {}
    if args.config:
        file_cfg = _load_config_file(args.config)
        known = {"scenario", "variant", "mode", "tol", "max_iter", "repeat", "seed", "out"}
        unknown = set(file_cfg) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in ("scenario", "variant", "mode", "tol", "repeat", "out"):
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    if getattr(args, "max_iter", None) is not None:
        merged["max_iter"] = args.max_iter

    env_seed = os.environ.get("QLMPC_SEED")
    if env_seed is not None:
        try:
            merged["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"QLMPC_SEED must be an integer, got {env_seed!r}") from exc

    if "mode" in merged and merged["mode"] is not None:
        mode = str(merged["mode"])
        if mode not in _MODE_ALIASES:
            raise ConfigError(f"mode must be one of {sorted(set(_MODE_ALIASES))}, got {mode!r}")
        merged["mode"] = _MODE_ALIASES[mode]
    try:
        cfg = RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.variant not in ("standard", "exact"):
        raise ConfigError(f"variant must be 'standard' or 'exact', got {cfg.variant!r}")
    return cfg


def _weight_matrix_from_config(value, what: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return np.diag(arr)
    if arr.ndim == 2:
        return arr
    raise ConfigError(f"{what} must be a scalar, vector (diagonal) or matrix")


def make_scenario(cfg: RunConfig) -> Scenario:
    if isinstance(cfg.scenario, str):
        return builtin_scenario(cfg.scenario, variant=cfg.variant, mode=cfg.mode,
                                stop_tol=cfg.tol, max_iter=cfg.max_iter)
    if not isinstance(cfg.scenario, dict):
        raise ConfigError("scenario must be a builtin name or an inline object")
    fields = dict(cfg.scenario)
    try:
        model_id = fields.pop("model")
        x0 = np.asarray(fields.pop("x0"), dtype=float)
        steps = int(fields.pop("steps"))
        horizon = int(fields.pop("horizon"))
        weights = Weights(
            Q=_weight_matrix_from_config(fields.pop("q"), "q"),
            R=_weight_matrix_from_config(fields.pop("r"), "r"),
            P=_weight_matrix_from_config(fields.pop("p"), "p"),
        )
    except KeyError as exc:
        raise ConfigError(f"inline scenario is missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid inline scenario: {exc}") from exc
    name = fields.pop("name", "custom")
    if fields:
        raise ConfigError(f"unknown inline scenario keys: {sorted(fields)}")
    opts = SolverOptions(
        variant=cfg.variant,
        mode=cfg.mode if cfg.mode is not None else "converge",
        stop_tol=cfg.tol if cfg.tol is not None else 1e-6,
        max_iter=cfg.max_iter if cfg.max_iter is not None else 30,
    )
    try:
        get_model(model_id)
    except ConfigError:
        raise
    try:
        return Scenario(name=str(name), model_id=model_id, x0=x0, steps=steps,
                        horizon=horizon, weights=weights, controller=opts)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# output helpers

def _fmt(v: float) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(v))


def _json_safe(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else None
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_json_safe(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def write_trajectory_csv(path: Path, res: ScenarioResult, solve_means, prep_means) -> None:
    n_x = res.states.shape[1]
    n_u = res.inputs.shape[1] if res.inputs.size else 0
    header = (["step"]
              + [f"x_{i + 1}" for i in range(n_x)]
              + [f"u_{i + 1}" for i in range(n_u)]
              + ["dr", "rcso", "iterations", "solve_time_s", "prep_time_s"])
    lines = [",".join(header)]
    for k in range(res.inputs.shape[0]):
        rc = res.rcso[k] if k < res.rcso.size else math.nan
        row = ([str(k)]
               + [_fmt(v) for v in res.states[k]]
               + [_fmt(v) for v in res.inputs[k]]
               + [_fmt(res.dr[k]), "" if math.isnan(rc) else _fmt(rc)]
               + [str(res.per_step[k].iterations), _fmt(solve_means[k]), _fmt(prep_means[k])])
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _time_stats(values) -> dict:
    vals = [float(v) for v in values]
    if not vals:
        return {"median": None, "min": None, "max": None}
    return {"median": statistics.median(vals), "min": min(vals), "max": max(vals)}


def run_simulate(cfg: RunConfig) -> int:
    scn = make_scenario(cfg)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    res = simulate(scn)

    # timing repeats rerun only the configured controller loop
    solve_samples = [np.array([s.solve_time_s for s in res.per_step])]
    prep_samples = [np.array([s.prep_time_s for s in res.per_step])]
    qp_samples = [np.array([s.qp_time_s for s in res.per_step])]
    if not res.failed:
        model = get_model(scn.model_id)
        prob = StackedProblem.build(model, scn.horizon, scn.weights)
        for _ in range(cfg.repeat - 1):
            _, _, stats, fail, _ = run_control_loop(prob, scn.x0, scn.steps, scn.controller)
            if fail is not None:
                break
            solve_samples.append(np.array([s.solve_time_s for s in stats]))
            prep_samples.append(np.array([s.prep_time_s for s in stats]))
            qp_samples.append(np.array([s.qp_time_s for s in stats]))

    solve_means = np.mean(solve_samples, axis=0) if solve_samples[0].size else np.array([])
    prep_means = np.mean(prep_samples, axis=0) if prep_samples[0].size else np.array([])
    qp_means = np.mean(qp_samples, axis=0) if qp_samples[0].size else np.array([])

    stem = f"{scn.name}_{scn.controller.variant}"
    write_trajectory_csv(out_dir / f"{stem}_trajectory.csv", res, solve_means, prep_means)

    final_rcso = float(res.rcso[-1]) if res.rcso.size else math.nan
    summary = {
        "scenario": scn.name,
        "model": scn.model_id,
        "variant": scn.controller.variant,
        "mode": scn.controller.mode,
        "steps_requested": scn.steps,
        "steps_completed": int(res.inputs.shape[0]),
        "repeat": cfg.repeat,
        "terminal_state": res.states[-1],
        "final_dr": float(res.dr[-1]) if res.dr.size else None,
        "final_rcso": final_rcso,
        "iterations_total": int(sum(s.iterations for s in res.per_step)),
        "solve_time_s": _time_stats(solve_means),
        "prep_time_s": _time_stats(prep_means),
        "qp_time_s": _time_stats(qp_means),
        "failed": res.failed,
        "failure_step": res.failure_step,
        "failure_message": res.failure_message,
        "note": res.note,
    }
    (out_dir / f"{stem}_summary.json").write_text(
        json.dumps(_json_safe(summary), indent=2) + "\n", encoding="utf-8", newline="\n")
    return EXIT_NUMERICAL if res.failed else EXIT_OK


def run_diagnose(cfg: RunConfig) -> int:
    scn = make_scenario(cfg)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = get_model(scn.model_id)
    prob = StackedProblem.build(model, scn.horizon, scn.weights)

    # multiplier-recovery accuracy bounds the reachable residual; fall
    # back one decade at a time if 1e-10 sits below that floor
    tight_trace = None
    tight_tol = None
    for tol in (1e-10, 1e-9, 1e-8):
        trace = solve_ocp(prob, scn.x0, initial_guess(prob, scn.x0),
                          SolverOptions(variant="standard", mode="converge",
                                        stop_tol=tol, max_iter=300))
        if trace.converged:
            tight_trace, tight_tol = trace, tol
            break
    if tight_trace is None:
        raise SolverError("standard variant did not converge to tol 1e-8 at the first timestep")
    report = verify_fixpoint_perturbation(prob, tight_trace, scn.x0)

    fit_tol = cfg.tol if cfg.tol is not None else 1e-6
    fit_opts = SolverOptions(variant="standard", mode="converge", stop_tol=fit_tol, max_iter=100)
    fit_trace = trace_for_contraction(prob, scn.x0, fit_opts)
    ref_opts = SolverOptions(variant="standard", mode="converge", stop_tol=1e-12, max_iter=400)
    ref_trace = solve_ocp(prob, scn.x0, initial_guess(prob, scn.x0), ref_opts)
    estimate = contraction_fit(fit_trace, ref_trace.final)

    sqp_dev = sqp_equivalence_max_deviation(prob, scn.x0, n_samples=50, seed=cfg.seed)

    payload = {
        "scenario": scn.name,
        "model": scn.model_id,
        "seed": cfg.seed,
        "fixpoint_tol": tight_tol,
        "e_norm_inf": float(np.max(np.abs(report.e), initial=0.0)),
        "identity_error_inf": report.identity_error_inf,
        "feasibility_residual_inf": report.feasibility_residual_inf,
        "kappa_hat": estimate.kappa_hat,
        "omega_hat": estimate.omega_hat,
        "radius_bound": estimate.radius_bound,
        "fit_residual_inf": estimate.fit_residual_inf,
        "contraction_errors": estimate.errors,
        "sqp_equivalence_max_dev": sqp_dev,
        "note": model.note,
    }
    (out_dir / f"{scn.name}_diagnostics.json").write_text(
        json.dumps(_json_safe(payload), indent=2) + "\n", encoding="utf-8", newline="\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qlmpc",
        description="Iterative quasi-LPV MPC solver: benchmark scenarios and diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("simulate", "run a closed-loop scenario and write CSV/JSON results"),
                            ("diagnose", "run first-timestep diagnostics and write a JSON report")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--scenario", help="builtin scenario name")
        p.add_argument("--variant", choices=["standard", "exact"])
        p.add_argument("--mode", choices=["converge", "rti"])
        p.add_argument("--tol", type=float, help="solver stopping tolerance")
        p.add_argument("--max-iter", dest="max_iter", type=int)
        p.add_argument("--repeat", type=int, help="timing repetitions (simulate only)")
        p.add_argument("--out", help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        if args.command == "simulate":
            return run_simulate(cfg)
        return run_diagnose(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
