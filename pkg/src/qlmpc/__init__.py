"""Iterative quasi-LPV model predictive control without inequality constraints.

Provides the standard (suboptimal) and exact (Gauss-Newton SQP
equivalent) iteration variants, a condensed QP backend, closed-loop
benchmark scenarios, and numerical verification of the convergence and
suboptimality properties of the scheme.
"""

from .closed_loop import (
    PerStepStats,
    Scenario,
    ScenarioResult,
    builtin_scenario,
    distance_to_reference,
    dr_series,
    rcso,
    run_control_loop,
    simulate,
)
from .condensing import CondensedQp, condense, expand, recover_multipliers, solve_condensed
from .diagnostics import (
    ContractionEstimate,
    PerturbationReport,
    contraction_fit,
    fd_jacobian,
    sqp_equivalence_max_deviation,
    trace_for_contraction,
    verify_fixpoint_perturbation,
)
from .errors import ConfigError, QlmpcError, SolverError
from .models import (
    ExactExtension,
    LpvModel,
    ModelDims,
    builtin_adip,
    builtin_tiny,
    builtin_unicycle,
    euler_discretize,
    eval_dynamics,
    eval_rho,
    get_model,
)
from .solver import (
    IterateTrace,
    SolverOptions,
    initial_guess,
    qlmpc_iterate,
    solve_ocp,
    sqp_step,
    stopping_residual,
    warm_shift,
)
from .stacked import (
    KktPoint,
    StackedProblem,
    Weights,
    constraint_matrix,
    cost_perturbation,
    coupling_correction,
    fonc_jacobian,
    fonc_residual,
    frozen_constraint_matrix,
    kkt_matrix,
    linearized_constraint,
    true_fonc_residual,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CondensedQp",
    "ContractionEstimate",
    "ExactExtension",
    "IterateTrace",
    "KktPoint",
    "LpvModel",
    "ModelDims",
    "PerStepStats",
    "PerturbationReport",
    "QlmpcError",
    "Scenario",
    "ScenarioResult",
    "SolverError",
    "SolverOptions",
    "StackedProblem",
    "Weights",
    "builtin_adip",
    "builtin_scenario",
    "builtin_tiny",
    "builtin_unicycle",
    "condense",
    "constraint_matrix",
    "contraction_fit",
    "cost_perturbation",
    "coupling_correction",
    "distance_to_reference",
    "dr_series",
    "euler_discretize",
    "eval_dynamics",
    "eval_rho",
    "expand",
    "fd_jacobian",
    "fonc_jacobian",
    "fonc_residual",
    "frozen_constraint_matrix",
    "get_model",
    "initial_guess",
    "kkt_matrix",
    "linearized_constraint",
    "qlmpc_iterate",
    "rcso",
    "recover_multipliers",
    "run_control_loop",
    "simulate",
    "solve_condensed",
    "solve_ocp",
    "sqp_equivalence_max_deviation",
    "sqp_step",
    "stopping_residual",
    "trace_for_contraction",
    "true_fonc_residual",
    "verify_fixpoint_perturbation",
    "warm_shift",
]
