"""Stacked equality-constrained form of the finite-horizon OCP.

The decision vector is ``y = (x_0, ..., x_N, u_0, ..., u_{N-1})``.  The
initial condition and the dynamics are collected into one constraint
``G(rho(y)) y + C x0hat = 0`` with block rows

    row 0:    x_0                              (pairs with C x0hat = -x0hat)
    row k+1:  x_{k+1} - A(rho_k) x_k - B(rho_k) u_k

and the cost is ``y' W y`` with ``W = diag(Q, ..., Q, P, R, ..., R)``.
Because the scheduling parameter is a function of y, the constraint map
carries a hidden coupling: its derivative is G plus a correction term
assembled from the per-stage dynamics Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import LpvModel

Array = np.ndarray

_PSD_EIG_FLOOR = -1e-10


def _check_square_symmetric(m, n, what):
    m = np.asarray(m, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.shape != (n, n):
        raise ValueError(f"{what} must be {n}x{n}, got {m.shape}")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12):
        raise ValueError(f"{what} must be symmetric")
    return 0.5 * (m + m.T)


@dataclass(frozen=True)
class Weights:
    """Stage, input and terminal cost matrices.

    Q and P must be positive semidefinite, R positive definite.
    """

    Q: Array
    R: Array
    P: Array

    def __post_init__(self):
        nq = np.atleast_2d(np.asarray(self.Q, dtype=float)).shape[0]
        nr = np.atleast_2d(np.asarray(self.R, dtype=float)).shape[0]
        q = _check_square_symmetric(self.Q, nq, "Q")
        r = _check_square_symmetric(self.R, nr, "R")
        p = _check_square_symmetric(self.P, nq, "P")
        if np.linalg.eigvalsh(q).min() < _PSD_EIG_FLOOR:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(p).min() < _PSD_EIG_FLOOR:
            raise ValueError("P must be positive semidefinite")
        if np.linalg.eigvalsh(r).min() <= 0.0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "Q", q)
        object.__setattr__(self, "R", r)
        object.__setattr__(self, "P", p)


@dataclass(frozen=True)
class KktPoint:
    """Primal-dual pair z = (y, lambda)."""

    y: Array
    lam: Array

    def stack(self) -> Array:
        return np.concatenate([self.y, self.lam])


@dataclass(frozen=True)
class StackedProblem:
    """Immutable problem data for one horizon; all operations are pure."""

    model: LpvModel
    n_horizon: int
    weights: Weights
    weight_matrix: Array   # block-diagonal cost matrix acting on y
    x0_map: Array          # injects x0hat into the constraint stack

    @classmethod
    def build(cls, model: LpvModel, horizon: int, weights: Weights) -> "StackedProblem":
        if horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {horizon}")
        n_x, n_u = model.dims.n_x, model.dims.n_u
        if weights.Q.shape != (n_x, n_x):
            raise ValueError(f"Q must be {n_x}x{n_x}, got {weights.Q.shape}")
        if weights.R.shape != (n_u, n_u):
            raise ValueError(f"R must be {n_u}x{n_u}, got {weights.R.shape}")
        n_states = (horizon + 1) * n_x
        n_y = n_states + horizon * n_u
        w = np.zeros((n_y, n_y))
        for k in range(horizon):
            w[k * n_x:(k + 1) * n_x, k * n_x:(k + 1) * n_x] = weights.Q
        w[horizon * n_x:n_states, horizon * n_x:n_states] = weights.P
        for k in range(horizon):
            i = n_states + k * n_u
            w[i:i + n_u, i:i + n_u] = weights.R
        c = np.zeros((n_states, n_x))
        c[:n_x, :] = -np.eye(n_x)
        return cls(model=model, n_horizon=horizon, weights=weights,
                   weight_matrix=w, x0_map=c)

    # -- layout helpers ----------------------------------------------------

    @property
    def n_x(self) -> int:
        return self.model.dims.n_x

    @property
    def n_u(self) -> int:
        return self.model.dims.n_u

    @property
    def n_y(self) -> int:
        return (self.n_horizon + 1) * self.n_x + self.n_horizon * self.n_u

    @property
    def n_eq(self) -> int:
        return (self.n_horizon + 1) * self.n_x

    def x_slice(self, k: int) -> slice:
        return slice(k * self.n_x, (k + 1) * self.n_x)

    def u_slice(self, k: int) -> slice:
        base = (self.n_horizon + 1) * self.n_x
        return slice(base + k * self.n_u, base + (k + 1) * self.n_u)

    def states(self, y: Array) -> Array:
        return np.asarray(y)[:self.n_eq].reshape(self.n_horizon + 1, self.n_x)

    def inputs(self, y: Array) -> Array:
        return np.asarray(y)[self.n_eq:].reshape(self.n_horizon, self.n_u)

    def check_y(self, y) -> Array:
        y = np.asarray(y, dtype=float).ravel()
        if y.shape != (self.n_y,):
            raise ValueError(f"decision vector must have length {self.n_y}, got {y.shape}")
        return y

    def check_x0(self, x0hat) -> Array:
        x0 = np.atleast_1d(np.asarray(x0hat, dtype=float))
        if x0.shape != (self.n_x,):
            raise ValueError(f"initial state must have length {self.n_x}, got {x0.shape}")
        return x0

    def rho_trajectory(self, y: Array) -> Array:
        """Scheduling parameters extracted stage-wise from y."""
        xs = self.states(y)
        us = self.inputs(y)
        return np.array([self.model.rho(xs[k], us[k]) for k in range(self.n_horizon)])


def _frozen_stage_blocks(prob: StackedProblem, y: Array):
    """Frozen-parameter matrices (A_k, B_k) evaluated along y."""
    xs = prob.states(y)
    us = prob.inputs(y)
    model = prob.model
    a_seq, b_seq = [], []
    for k in range(prob.n_horizon):
        r = model.rho(xs[k], us[k])
        a_seq.append(model.a_of_rho(r))
        b_seq.append(model.b_of_rho(r))
    return a_seq, b_seq


def _assemble_g(prob: StackedProblem, a_seq, b_seq) -> Array:
    g = np.zeros((prob.n_eq, prob.n_y))
    np.fill_diagonal(g[:, :prob.n_eq], 1.0)
    for k in range(prob.n_horizon):
        rows = prob.x_slice(k + 1)
        g[rows, prob.x_slice(k)] = -a_seq[k]
        g[rows, prob.u_slice(k)] = -b_seq[k]
    return g


def _assemble_delta(prob: StackedProblem, y: Array, a_seq, b_seq) -> Array:
    n_x = prob.n_x
    xs = prob.states(y)
    us = prob.inputs(y)
    delta = np.zeros((prob.n_eq, prob.n_y))
    for k in range(prob.n_horizon):
        stage = prob.model.stage_jacobian(xs[k], us[k])
        rows = prob.x_slice(k + 1)
        delta[rows, prob.x_slice(k)] = a_seq[k] - stage[:, :n_x]
        delta[rows, prob.u_slice(k)] = b_seq[k] - stage[:, n_x:]
    return delta


def constraint_matrix(prob: StackedProblem, rho_traj) -> Array:
    """Constraint matrix G for a frozen parameter trajectory."""
    n = prob.n_horizon
    rho_traj = np.asarray(rho_traj, dtype=float).reshape(n, prob.model.dims.n_rho)
    a_seq = [prob.model.a_of_rho(rho_traj[k]) for k in range(n)]
    b_seq = [prob.model.b_of_rho(rho_traj[k]) for k in range(n)]
    return _assemble_g(prob, a_seq, b_seq)


def frozen_constraint_matrix(prob: StackedProblem, y) -> Array:
    """G evaluated at the parameter trajectory extracted from y."""
    a_seq, b_seq = _frozen_stage_blocks(prob, prob.check_y(y))
    return _assemble_g(prob, a_seq, b_seq)


def fonc_residual(prob: StackedProblem, z: KktPoint, x0hat) -> Array:
    """First-order optimality residual with the parameter refreshed from y.

    Stationarity block: 2 W y + G(rho(y))' lam.  Feasibility block:
    G(rho(y)) y + C x0hat.  Both solver variants drive the feasibility
    block to zero; only the standard variant zeroes this stationarity.
    """
    y = prob.check_y(z.y)
    x0 = prob.check_x0(x0hat)
    g = constraint_matrix(prob, prob.rho_trajectory(y))
    stat = 2.0 * (prob.weight_matrix @ y) + g.T @ z.lam
    feas = g @ y + prob.x0_map @ x0
    return np.concatenate([stat, feas])


def kkt_matrix(prob: StackedProblem, z: KktPoint) -> Array:
    """Fixed-parameter KKT matrix [[2W, G'], [G, 0]] at rho(y).

    This is the Newton-type matrix the iteration implicitly applies; it
    is symmetric by construction.
    """
    y = prob.check_y(z.y)
    g = constraint_matrix(prob, prob.rho_trajectory(y))
    n_y, n_eq = prob.n_y, prob.n_eq
    j = np.zeros((n_y + n_eq, n_y + n_eq))
    j[:n_y, :n_y] = 2.0 * prob.weight_matrix
    j[:n_y, n_y:] = g.T
    j[n_y:, :n_y] = g
    return j


def coupling_correction(prob: StackedProblem, y) -> Array:
    """Hidden-coupling term: d[G(rho(y)) y]/dy - G(rho(y)).

    Assembled stage-wise as the difference between the dynamics Jacobian
    and the frozen-parameter matrices [A(rho_k) B(rho_k)]; zero for LTI
    models.
    """
    y = prob.check_y(y)
    a_seq, b_seq = _frozen_stage_blocks(prob, y)
    return _assemble_delta(prob, y, a_seq, b_seq)


def linearized_constraint(prob: StackedProblem, y) -> tuple[Array, Array]:
    """Jacobian of the constraint map and its disturbance companion.

    Returns ``(jac, dist)`` with ``jac = d[G(rho(y)) y]/dy`` and
    ``dist`` the negated coupling correction, so that
    ``(jac + dist) y == G(rho(y)) y`` for every y.
    """
    y = prob.check_y(y)
    a_seq, b_seq = _frozen_stage_blocks(prob, y)
    g = _assemble_g(prob, a_seq, b_seq)
    delta = _assemble_delta(prob, y, a_seq, b_seq)
    return g + delta, -delta


def fonc_jacobian(prob: StackedProblem, z: KktPoint) -> Array:
    """Exact Jacobian of the optimality residual map.

    The constraint block is assembled from the per-stage dynamics
    Jacobians; the curvature block d[G' lam]/dy is approximated by
    central finite differences (step 1e-6) since it feeds diagnostics
    only, never the iteration.
    """
    y = prob.check_y(z.y)
    lam = np.asarray(z.lam, dtype=float)
    n_y, n_eq = prob.n_y, prob.n_eq

    def gt_lam(yv):
        g = constraint_matrix(prob, prob.rho_trajectory(yv))
        return g.T @ lam

    step = 1e-6
    curvature = np.empty((n_y, n_y))
    for j in range(n_y):
        yp = y.copy()
        ym = y.copy()
        yp[j] += step
        ym[j] -= step
        curvature[:, j] = (gt_lam(yp) - gt_lam(ym)) / (2.0 * step)

    g = constraint_matrix(prob, prob.rho_trajectory(y))
    jac_constraint, _ = linearized_constraint(prob, y)
    out = np.zeros((n_y + n_eq, n_y + n_eq))
    out[:n_y, :n_y] = 2.0 * prob.weight_matrix + curvature
    out[:n_y, n_y:] = g.T
    out[n_y:, :n_y] = jac_constraint
    return out


def cost_perturbation(prob: StackedProblem, y, lam) -> Array:
    """Linear cost perturbation picked up by the standard fixpoint.

    e = -correction(y)' lam; a converged standard iterate is a
    stationary point of the cost ``y' W y + e' y`` under the true
    constraint.  Vanishes for LTI models and for the exact variant.
    """
    delta = coupling_correction(prob, y)
    return -delta.T @ np.asarray(lam, dtype=float)


def true_fonc_residual(prob: StackedProblem, z: KktPoint, x0hat) -> Array:
    """Optimality residual of the original NLP (full constraint Jacobian)."""
    y = prob.check_y(z.y)
    x0 = prob.check_x0(x0hat)
    jac, dist = linearized_constraint(prob, y)
    stat = 2.0 * (prob.weight_matrix @ y) + jac.T @ z.lam
    feas = (jac + dist) @ y + prob.x0_map @ x0
    return np.concatenate([stat, feas])
