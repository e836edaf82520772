"""Condensed form of the per-iteration QP.

Eliminating the states through the (affine) frozen dynamics turns the
equality-constrained QP into an unconstrained quadratic in the stacked
inputs, solved by a single positive-definite factorization.  The state
prediction is ``x = Phi x0hat + Gamma u + Psi``; the affine term Psi is
zero for the standard variant and carries the disturbance offset of the
exact variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SolverError
from .stacked import StackedProblem

Array = np.ndarray

_RESIDUAL_RTOL = 1e-10


@dataclass(frozen=True)
class CondensedQp:
    phi: Array     # state response to the initial condition
    gamma: Array   # state response to the stacked inputs
    psi: Array     # affine state offset (disturbance rollout)
    hess: Array    # quadratic coefficient, 2 (Gamma' Wx Gamma + Wu)
    grad: Array    # linear coefficient
    x0hat: Array
    n_x: int
    n_u: int
    n_horizon: int


def _stage_data(prob: StackedProblem, constraint):
    """Per-stage (A_k, B_k, w_k) from either constraint representation.

    ``constraint`` is a parameter trajectory of length N, or a pair
    ``(matrix, offset)`` holding a constraint matrix with the standard
    block layout plus a constant offset vector (the exact variant's
    disturbance term).
    """
    n = prob.n_horizon
    if isinstance(constraint, tuple):
        g_mat, offset = constraint
        g_mat = np.asarray(g_mat, dtype=float)
        offset = np.asarray(offset, dtype=float).ravel()
        if g_mat.shape != (prob.n_eq, prob.n_y):
            raise ValueError(f"constraint matrix must be {prob.n_eq}x{prob.n_y}, got {g_mat.shape}")
        if offset.shape != (prob.n_eq,):
            raise ValueError(f"constraint offset must have length {prob.n_eq}, got {offset.shape}")
        a_seq = [-g_mat[prob.x_slice(k + 1), prob.x_slice(k)] for k in range(n)]
        b_seq = [-g_mat[prob.x_slice(k + 1), prob.u_slice(k)] for k in range(n)]
        w_seq = [-offset[prob.x_slice(k + 1)] for k in range(n)]
    else:
        rho_traj = np.asarray(constraint, dtype=float).reshape(n, prob.model.dims.n_rho)
        a_seq = [prob.model.a_of_rho(rho_traj[k]) for k in range(n)]
        b_seq = [prob.model.b_of_rho(rho_traj[k]) for k in range(n)]
        w_seq = [np.zeros(prob.n_x) for _ in range(n)]
    return a_seq, b_seq, w_seq


def condense(prob: StackedProblem, constraint, x0hat) -> CondensedQp:
    """Eliminate the states and build the input-space quadratic."""
    x0 = prob.check_x0(x0hat)
    n_x, n_u, n = prob.n_x, prob.n_u, prob.n_horizon
    a_seq, b_seq, w_seq = _stage_data(prob, constraint)

    n_states = (n + 1) * n_x
    phi = np.zeros((n_states, n_x))
    gamma = np.zeros((n_states, n * n_u))
    psi = np.zeros(n_states)
    phi[:n_x, :] = np.eye(n_x)
    # diverged iterates can overflow the rollout products; the solve
    # rejects the resulting non-finite QP, so do not warn here
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n):
            rows = prob.x_slice(k + 1)
            prev = prob.x_slice(k)
            phi[rows] = a_seq[k] @ phi[prev]
            gamma[rows] = a_seq[k] @ gamma[prev]
            gamma[rows, k * n_u:(k + 1) * n_u] += b_seq[k]
            psi[rows] = a_seq[k] @ psi[prev] + w_seq[k]

        wx = prob.weight_matrix[:n_states, :n_states]
        wu = prob.weight_matrix[n_states:, n_states:]
        hess = 2.0 * (gamma.T @ wx @ gamma + wu)
        hess = 0.5 * (hess + hess.T)
        grad = 2.0 * (gamma.T @ (wx @ (phi @ x0 + psi)))
    return CondensedQp(phi=phi, gamma=gamma, psi=psi, hess=hess, grad=grad,
                       x0hat=x0, n_x=n_x, n_u=n_u, n_horizon=n)


def solve_condensed(qp: CondensedQp) -> Array:
    """Minimize the condensed quadratic via a Cholesky factorization."""
    if not (np.all(np.isfinite(qp.hess)) and np.all(np.isfinite(qp.grad))):
        raise SolverError("condensed QP contains non-finite entries")
    try:
        factor = scipy.linalg.cho_factor(qp.hess, lower=True, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        min_eig = float(np.linalg.eigvalsh(qp.hess).min())
        raise SolverError(
            f"condensed Hessian is not positive definite (min eigenvalue {min_eig:.3e})",
            min_eigenvalue=min_eig,
        ) from None
    u = scipy.linalg.cho_solve(factor, -qp.grad, check_finite=False)
    scale = max(1.0, float(np.max(np.abs(qp.grad), initial=0.0)))
    resid = qp.hess @ u + qp.grad
    if np.max(np.abs(resid), initial=0.0) > _RESIDUAL_RTOL * scale:
        # one step of iterative refinement before giving up
        u = u - scipy.linalg.cho_solve(factor, resid, check_finite=False)
        resid = qp.hess @ u + qp.grad
        if np.max(np.abs(resid), initial=0.0) > _RESIDUAL_RTOL * scale:
            raise SolverError(
                f"condensed solve residual {np.max(np.abs(resid)):.3e} exceeds tolerance"
            )
    return u


def expand(qp: CondensedQp, u) -> Array:
    """Recover the full decision vector from the condensed minimizer."""
    u = np.asarray(u, dtype=float).ravel()
    if u.shape != (qp.n_horizon * qp.n_u,):
        raise ValueError(f"input trajectory must have length {qp.n_horizon * qp.n_u}, got {u.shape}")
    x = qp.phi @ qp.x0hat + qp.gamma @ u + qp.psi
    return np.concatenate([x, u])


def recover_multipliers(prob: StackedProblem, g_used, y) -> Array:
    """Least-squares multipliers from the stationarity conditions.

    Computes lam = -(G G')^{-1} G (2 W y), evaluated through a QR-based
    least-squares solve of ``G' lam = -2 W y`` (same value, avoids
    squaring the conditioning); exact at a QP optimum because the
    stationarity system is consistent there.
    """
    g = np.asarray(g_used, dtype=float)
    y = prob.check_y(y)
    if not np.all(np.isfinite(g)) or not np.all(np.isfinite(y)):
        raise SolverError("multiplier recovery received non-finite data")
    rhs = -2.0 * (prob.weight_matrix @ y)
    lam, _, rank = scipy.linalg.lstsq(g.T, rhs, lapack_driver="gelsy", check_finite=False)[:3]
    if rank < g.shape[0]:
        smallest = float(np.linalg.svd(g, compute_uv=False).min())
        raise SolverError(
            f"constraint matrix is rank deficient (smallest singular value {smallest:.3e})",
            smallest_singular_value=smallest,
        )
    return lam
