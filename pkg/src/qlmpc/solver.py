"""Iteration engine for the two qLMPC variants.

Each iteration freezes data extracted from the previous solution and
solves one equality-constrained QP through the condensed path:

* standard: freeze the parameter trajectory rho(y[l]) and use the
  frozen-parameter constraint matrix.  Fixpoints are feasible but
  suboptimal for the original NLP; they optimize a linearly perturbed
  cost instead.
* exact: freeze the constraint Jacobian at y[l] and carry the coupling
  correction as a constant disturbance offset.  One iterate equals a
  Gauss-Newton SQP step, so fixpoints satisfy the true first-order
  conditions.

Stopping is variant-specific: the standard variant monitors the
refreshed frozen-parameter residual (the root function its own
iteration solves), the exact variant the true-NLP residual.  The
standard variant cannot drive the true stationarity below the norm of
the cost perturbation, so a shared criterion would be meaningless.
"""

from __future__ import annotations

from dataclasses import dataclass
from time import perf_counter

import numpy as np

from .condensing import condense, expand, recover_multipliers, solve_condensed
from .errors import SolverError
from .models import eval_dynamics
from .stacked import (
    KktPoint,
    StackedProblem,
    constraint_matrix,
    fonc_residual,
    frozen_constraint_matrix,
    linearized_constraint,
    true_fonc_residual,
)

Array = np.ndarray

VARIANTS = ("standard", "exact")
MODES = ("converge", "real_time_single_iteration")


@dataclass(frozen=True)
class SolverOptions:
    variant: str = "standard"
    max_iter: int = 30
    stop_tol: float = 1e-6
    mode: str = "converge"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.stop_tol > 0:
            raise ValueError(f"stop_tol must be positive, got {self.stop_tol}")


@dataclass(frozen=True)
class TraceEntry:
    z: KktPoint
    fonc_inf: float
    step_time: float
    prep_time: float
    qp_time: float


@dataclass
class IterateTrace:
    """Iteration record; entry 0 is the initial point, untimed."""

    iterates: list
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    @property
    def final(self) -> KktPoint:
        return self.iterates[-1].z

    @property
    def residuals(self) -> Array:
        return np.array([e.fonc_inf for e in self.iterates])


def initial_guess(prob: StackedProblem, x0hat) -> Array:
    """Zero-input rollout from x0hat; feasible for the NLP with u = 0."""
    x0 = prob.check_x0(x0hat)
    n = prob.n_horizon
    xs = np.zeros((n + 1, prob.n_x))
    xs[0] = x0
    zero_u = np.zeros(prob.n_u)
    # unstable rollouts may overflow to inf; solve_ocp reports that as a
    # numerical failure, so silence the intermediate warning here
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            xs[k + 1] = eval_dynamics(prob.model, xs[k], zero_u)
    return np.concatenate([xs.ravel(), np.zeros(n * prob.n_u)])


def warm_shift(prob: StackedProblem, y_prev, x0hat_new) -> Array:
    """Shift a solution by one stage for the next sampling instant.

    States and inputs move up one slot, the last input is duplicated,
    the new terminal state is the dynamics applied to the old terminal
    state under the duplicated input, and the first state slot is
    overwritten with the new measurement.
    """
    y_prev = prob.check_y(y_prev)
    x0 = prob.check_x0(x0hat_new)
    n = prob.n_horizon
    xs = prob.states(y_prev)
    us = prob.inputs(y_prev)
    xs_new = np.empty_like(xs)
    us_new = np.empty_like(us)
    xs_new[:n] = xs[1:]
    us_new[:n - 1] = us[1:]
    us_new[n - 1] = us[n - 1]
    xs_new[n] = eval_dynamics(prob.model, xs[n], us[n - 1])
    xs_new[0] = x0
    return np.concatenate([xs_new.ravel(), us_new.ravel()])


def stopping_residual(prob: StackedProblem, z: KktPoint, x0hat, variant: str) -> float:
    """Infinity norm of the variant's own optimality residual."""
    if variant == "standard":
        r = fonc_residual(prob, z, x0hat)
    else:
        r = true_fonc_residual(prob, z, x0hat)
    return float(np.max(np.abs(r)))


def _constraint_data(prob, y, variant):
    """Constraint matrix pair for one iterate: (G, None) or (jac, dist)."""
    if variant == "standard":
        return frozen_constraint_matrix(prob, y), None
    return linearized_constraint(prob, y)


def _residual_inf(prob, z, x0hat, data) -> float:
    mat, dist = data
    # non-finite values surface as a non-finite residual, reported by
    # the caller; suppress the intermediate overflow warning
    with np.errstate(over="ignore", invalid="ignore"):
        stat = 2.0 * (prob.weight_matrix @ z.y) + mat.T @ z.lam
        g = mat if dist is None else mat + dist
        feas = g @ z.y + prob.x0_map @ x0hat
        return float(max(np.max(np.abs(stat)), np.max(np.abs(feas))))


def _solve_qp(prob, y, x0hat, data):
    """Condensed solve of the frozen QP described by ``data`` at y."""
    mat, dist = data
    offset = np.zeros(prob.n_eq) if dist is None else dist @ y
    qp = condense(prob, (mat, offset), x0hat)
    t1 = perf_counter()
    u = solve_condensed(qp)
    qp_seconds = perf_counter() - t1
    y_next = expand(qp, u)
    lam = recover_multipliers(prob, mat, y_next)
    return KktPoint(y_next, lam), qp_seconds


def qlmpc_iterate(prob: StackedProblem, z: KktPoint, x0hat, variant: str = "standard") -> KktPoint:
    """Solve one frozen QP and return the next primal-dual iterate."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    y = prob.check_y(z.y)
    x0 = prob.check_x0(x0hat)
    z_next, _ = _solve_qp(prob, y, x0, _constraint_data(prob, y, variant))
    return z_next


def sqp_step(prob: StackedProblem, z: KktPoint, x0hat) -> KktPoint:
    """Gauss-Newton SQP step in the update variable p, via a dense KKT solve.

    Solves for p with the constraint linearized at y[l] and the cost
    Hessian replaced by 2W, then returns (y[l] + p, lam).  Agrees with
    the exact variant's iterate up to solver tolerance; kept on a
    separate dense solve path so the equivalence is a real cross-check.
    """
    x0 = prob.check_x0(x0hat)
    y = prob.check_y(z.y)
    rho_traj = prob.rho_trajectory(y)
    g = constraint_matrix(prob, rho_traj)
    jac, _ = linearized_constraint(prob, y)
    n_y, n_eq = prob.n_y, prob.n_eq
    kkt = np.zeros((n_y + n_eq, n_y + n_eq))
    kkt[:n_y, :n_y] = 2.0 * prob.weight_matrix
    kkt[:n_y, n_y:] = jac.T
    kkt[n_y:, :n_y] = jac
    rhs = np.concatenate([
        -2.0 * (prob.weight_matrix @ y),
        -(g @ y + prob.x0_map @ x0),
    ])
    sol = np.linalg.solve(kkt, rhs)
    return KktPoint(y + sol[:n_y], sol[n_y:])


def solve_ocp(prob: StackedProblem, x0hat, y_init, opts: SolverOptions) -> IterateTrace:
    """Iterate the chosen variant from y_init until its residual passes stop_tol.

    In real-time mode exactly one iteration is performed regardless of
    the residual.  Non-convergence within max_iter yields a trace with
    ``converged=False``; numerical failures raise SolverError.
    """
    x0 = prob.check_x0(x0hat)
    y = prob.check_y(y_init)
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(y))):
        raise SolverError("solve_ocp received non-finite initial data")

    data = _constraint_data(prob, y, opts.variant)
    z = KktPoint(y, recover_multipliers(prob, data[0], y))
    res = _residual_inf(prob, z, x0, data)
    if not np.isfinite(res):
        raise SolverError("optimality residual is non-finite at the initial guess")
    entries = [TraceEntry(z, res, 0.0, 0.0, 0.0)]

    single = opts.mode == "real_time_single_iteration"
    converged = bool(res <= opts.stop_tol) and not single
    while (single and len(entries) == 1) or (not single and not converged
                                             and len(entries) - 1 < opts.max_iter):
        t0 = perf_counter()
        z, qp_s = _solve_qp(prob, z.y, x0, data)
        # constraint data at the new point serves both the residual and
        # the next QP build
        data = _constraint_data(prob, z.y, opts.variant)
        res = _residual_inf(prob, z, x0, data)
        total = perf_counter() - t0
        if not np.isfinite(res):
            raise SolverError(f"iteration diverged after {len(entries)} steps")
        entries.append(TraceEntry(z, res, total, total - qp_s, qp_s))
        converged = bool(res <= opts.stop_tol)
    return IterateTrace(entries, converged=converged)
