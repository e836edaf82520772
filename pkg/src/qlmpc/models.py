"""Quasi-LPV plant models and the builtin benchmark instances.

A model is the discrete-time system ``x+ = A(rho) x + B(rho) u`` together
with the scheduling map ``rho(x, u)``.  Because the parameter depends on
the state and input, the system is only quasi linear; evaluating the
matrices at a frozen parameter trajectory yields an ordinary linear
time-varying model.  All builtin instances keep the origin as an
unforced equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError

Array = np.ndarray

MODEL_IDS = ("unicycle", "adip", "tiny-lti", "tiny-qlpv")


@dataclass(frozen=True)
class ModelDims:
    """State, input and scheduling-parameter dimensions."""

    n_x: int
    n_u: int
    n_rho: int

    def __post_init__(self):
        for name in ("n_x", "n_u", "n_rho"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")


@dataclass(frozen=True)
class ExactExtension:
    """Disturbance-augmented model used by the exact solver variant.

    Encodes the fictitious system ``x+ = At(rt) x + Bt(rt) u + Bd(rt) d``
    whose frozen-parameter dynamics reproduce the linearization of the
    quasi-LPV dynamics plus a correction carried by the disturbance
    input ``d``, computed from the previous iterate's stage variables.
    With ``d`` evaluated at the same point, the extension reproduces the
    original dynamics exactly.
    """

    n_d: int
    rho_tilde: Callable[[Array, Array], Array]
    a_tilde: Callable[[Array], Array]
    b_tilde: Callable[[Array], Array]
    b_d_tilde: Callable[[Array], Array]
    d_of_prev: Callable[[Array, Array], Array]


@dataclass(frozen=True)
class LpvModel:
    """Immutable quasi-LPV model; all evaluation maps are pure."""

    name: str
    dims: ModelDims
    rho: Callable[[Array, Array], Array]
    a_of_rho: Callable[[Array], Array]
    b_of_rho: Callable[[Array], Array]
    stage_jacobian: Callable[[Array, Array], Array]
    exact_ext: Optional[ExactExtension] = None
    dt: Optional[float] = None
    note: Optional[str] = None


def _as_vector(v, n, what):
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.shape != (n,):
        raise ValueError(f"{what} must have shape ({n},), got {arr.shape}")
    return arr


def eval_rho(model: LpvModel, x, u) -> Array:
    """Evaluate the scheduling parameter at a state/input pair."""
    x = _as_vector(x, model.dims.n_x, "state")
    u = _as_vector(u, model.dims.n_u, "input")
    return _as_vector(model.rho(x, u), model.dims.n_rho, "parameter")


def eval_dynamics(model: LpvModel, x, u) -> Array:
    """One step of the discrete dynamics, A(rho(x,u)) x + B(rho(x,u)) u."""
    x = _as_vector(x, model.dims.n_x, "state")
    u = _as_vector(u, model.dims.n_u, "input")
    r = model.rho(x, u)
    return model.a_of_rho(r) @ x + model.b_of_rho(r) @ u


def euler_discretize(f: Callable[[Array, Array], Array], dt: float) -> Callable[[Array, Array], Array]:
    """Forward-Euler discretization of a continuous vector field.

    Returns the map ``(x, u) -> x + dt * f(x, u)``.
    """
    if dt <= 0:
        raise ValueError(f"sampling time must be positive, got {dt}")

    def step(x, u):
        x = np.asarray(x, dtype=float)
        return x + dt * np.asarray(f(x, u), dtype=float)

    return step


def fd_stage_jacobian(dynamics: Callable[[Array, Array], Array], n_x: int, n_u: int) -> Callable[[Array, Array], Array]:
    """Central-difference fallback for the per-stage dynamics Jacobian.

    Differentiates ``(x, u) -> dynamics(x, u)`` jointly in (x, u) with a
    per-component step 1e-6 * max(1, |component|).
    """

    def jac(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        w = np.concatenate([x, u])
        out = np.empty((n_x, n_x + n_u))
        for j in range(n_x + n_u):
            h = 1e-6 * max(1.0, abs(w[j]))
            wp = w.copy()
            wm = w.copy()
            wp[j] += h
            wm[j] -= h
            fp = dynamics(wp[:n_x], wp[n_x:])
            fm = dynamics(wm[:n_x], wm[n_x:])
            out[:, j] = (fp - fm) / (2.0 * h)
        return out

    return jac


# ---------------------------------------------------------------------------
# Dynamic unicycle: x = (s, q, v, phi, omega), u = (F, tau), rho = phi.

def builtin_unicycle(dt: float = 0.1) -> LpvModel:
    """Euler-discretized dynamic unicycle with analytic stage Jacobian."""
    dims = ModelDims(n_x=5, n_u=2, n_rho=1)

    b_mat = np.zeros((5, 2))
    b_mat[2, 0] = dt
    b_mat[4, 1] = dt

    a_base = np.eye(5)
    a_base[3, 4] = dt

    def rho(x, u):
        return np.array([x[3]])

    def a_of_rho(r):
        phi = r[0]
        a = a_base.copy()
        a[0, 2] = dt * math.cos(phi)
        a[1, 2] = dt * math.sin(phi)
        return a

    def b_of_rho(r):
        return b_mat

    def rho_tilde(x, u):
        return np.array([x[2], x[3]])

    def a_tilde(rt):
        v, phi = rt
        a = a_base.copy()
        a[0, 2] = dt * math.cos(phi)
        a[1, 2] = dt * math.sin(phi)
        a[0, 3] = -dt * v * math.sin(phi)
        a[1, 3] = dt * v * math.cos(phi)
        return a

    def b_tilde(rt):
        return b_mat

    def b_d_tilde(rt):
        v, phi = rt
        col = np.zeros((5, 1))
        col[0, 0] = dt * v * math.sin(phi)
        col[1, 0] = -dt * v * math.cos(phi)
        return col

    def d_of_prev(x, u):
        return np.array([x[3]])

    jac_base = np.hstack([a_base, b_mat])

    def stage_jacobian(x, u):
        # d/d(x,u) of A(phi(x)) x + B u coincides with [a_tilde | B]
        v, phi = x[2], x[3]
        jac = jac_base.copy()
        jac[0, 2] = dt * math.cos(phi)
        jac[1, 2] = dt * math.sin(phi)
        jac[0, 3] = -dt * v * math.sin(phi)
        jac[1, 3] = dt * v * math.cos(phi)
        return jac

    ext = ExactExtension(
        n_d=1,
        rho_tilde=rho_tilde,
        a_tilde=a_tilde,
        b_tilde=b_tilde,
        b_d_tilde=b_d_tilde,
        d_of_prev=d_of_prev,
    )
    return LpvModel(
        name="unicycle",
        dims=dims,
        rho=rho,
        a_of_rho=a_of_rho,
        b_of_rho=b_of_rho,
        stage_jacobian=stage_jacobian,
        exact_ext=ext,
        dt=dt,
    )


# ---------------------------------------------------------------------------
# Arm-driven inverted pendulum: x = (th1, th2, th1dot, th2dot), scalar torque.
#
# Physical parameters are package defaults picked for this benchmark
# (point-mass two-link model), not identified hardware values.  The
# scale is a small desktop device; with heavier links the benchmark
# weights price the torque out of stabilizing the upright equilibrium.

ADIP_PARAMS = {
    "arm_mass": 0.1,       # kg
    "arm_length": 0.1,     # m
    "pend_mass": 0.05,     # kg
    "pend_length": 0.1,    # m
    "gravity": 9.81,       # m/s^2
}

ADIP_NOTE = "ADIP physical parameters are package stand-ins, not identified hardware values"


def builtin_adip(dt: float = 0.01, params: Optional[dict] = None) -> LpvModel:
    """Euler-discretized arm-driven inverted pendulum.

    The gravity terms enter through sin(th)/th factors so the embedding
    is exact and the upright origin stays an equilibrium of the frozen
    parameter model.  rho is the full state.
    """
    dims = ModelDims(n_x=4, n_u=1, n_rho=4)
    p = dict(ADIP_PARAMS)
    if params:
        p.update(params)
    m1 = p["arm_mass"]
    l1 = p["arm_length"]
    m2 = p["pend_mass"]
    l2 = p["pend_length"]
    g = p["gravity"]

    m11 = (m1 + m2) * l1 * l1
    m22 = m2 * l2 * l2
    m12_amp = m2 * l1 * l2
    kg1 = (m1 + m2) * g * l1
    kg2 = m2 * g * l2

    a_base = np.eye(4)
    a_base[0, 2] = dt
    a_base[1, 3] = dt

    def _sinc(t):
        # sin(t)/t with the removable singularity filled by its series
        if abs(t) < 1e-6:
            return 1.0 - t * t / 6.0
        return math.sin(t) / t

    def rho(x, u):
        return np.asarray(x, dtype=float)

    def _mass_inverse_entries(c12):
        m12 = m12_amp * c12
        det = m11 * m22 - m12 * m12
        return m22 / det, -m12 / det, m11 / det

    def a_of_rho(r):
        th1, th2, w1, w2 = r
        c12 = math.cos(th1 - th2)
        cw = m12_amp * math.sin(th1 - th2)
        i11, i12, i22 = _mass_inverse_entries(c12)
        g1 = kg1 * _sinc(th1)
        g2 = kg2 * _sinc(th2)
        a = a_base.copy()
        a[2, 0] = dt * i11 * g1
        a[2, 1] = dt * i12 * g2
        a[3, 0] = dt * i12 * g1
        a[3, 1] = dt * i22 * g2
        # coriolis block -dt * Minv @ [[0, cw*w2], [-cw*w1, 0]]
        a[2, 2] += dt * i12 * cw * w1
        a[2, 3] = -dt * i11 * cw * w2
        a[3, 2] += dt * i22 * cw * w1
        a[3, 3] += -dt * i12 * cw * w2
        return a

    def b_of_rho(r):
        i11, i12, _ = _mass_inverse_entries(math.cos(r[0] - r[1]))
        b = np.zeros((4, 1))
        b[2, 0] = dt * i11
        b[3, 0] = dt * i12
        return b

    jac_base = np.zeros((4, 5))
    jac_base[:, :4] = a_base

    def stage_jacobian(x, u):
        # Jacobian of x + dt * (w1, w2, acc) with acc = M(th)^{-1} F and
        # F = tau e1 - coriolis(th, w) + gravity(th); uses
        # d(M^{-1} F)/dq = M^{-1} (dF/dq - dM/dq acc).
        th1, th2, w1, w2 = x
        tau = u[0]
        c12 = math.cos(th1 - th2)
        s12 = math.sin(th1 - th2)
        mc = m12_amp * c12
        cw = m12_amp * s12
        i11, i12, i22 = _mass_inverse_entries(c12)
        f1 = tau - cw * w2 * w2 + kg1 * math.sin(th1)
        f2 = cw * w1 * w1 + kg2 * math.sin(th2)
        acc1 = i11 * f1 + i12 * f2
        acc2 = i12 * f1 + i22 * f2
        # dM/dth1 @ acc = (-cw*acc2, -cw*acc1); dM/dth2 is its negative
        df = np.array([
            [kg1 * math.cos(th1) - mc * w2 * w2 + cw * acc2,
             mc * w2 * w2 - cw * acc2,
             0.0,
             -2.0 * cw * w2,
             1.0],
            [mc * w1 * w1 + cw * acc1,
             kg2 * math.cos(th2) - mc * w1 * w1 - cw * acc1,
             2.0 * cw * w1,
             0.0,
             0.0],
        ])
        jac = jac_base.copy()
        jac[2] += dt * (i11 * df[0] + i12 * df[1])
        jac[3] += dt * (i12 * df[0] + i22 * df[1])
        return jac

    return LpvModel(
        name="adip",
        dims=dims,
        rho=rho,
        a_of_rho=a_of_rho,
        b_of_rho=b_of_rho,
        stage_jacobian=stage_jacobian,
        exact_ext=None,
        dt=dt,
        note=ADIP_NOTE,
    )


# ---------------------------------------------------------------------------
# Tiny scalar instances used for analytic cross-checks.

def builtin_tiny(kind: str) -> LpvModel:
    """Scalar test instances: ``lti`` (x+ = x + u) or ``qlpv`` (x+ = x^2 + u)."""
    dims = ModelDims(n_x=1, n_u=1, n_rho=1)
    one = np.ones((1, 1))

    if kind == "lti":
        return LpvModel(
            name="tiny-lti",
            dims=dims,
            rho=lambda x, u: np.zeros(1),
            a_of_rho=lambda r: one,
            b_of_rho=lambda r: one,
            stage_jacobian=lambda x, u: np.array([[1.0, 1.0]]),
        )
    if kind == "qlpv":
        ext = ExactExtension(
            n_d=1,
            rho_tilde=lambda x, u: np.array([x[0]]),
            a_tilde=lambda rt: np.array([[2.0 * rt[0]]]),
            b_tilde=lambda rt: one,
            b_d_tilde=lambda rt: np.array([[-rt[0]]]),
            d_of_prev=lambda x, u: np.array([x[0]]),
        )
        return LpvModel(
            name="tiny-qlpv",
            dims=dims,
            rho=lambda x, u: np.array([x[0]]),
            a_of_rho=lambda r: np.array([[r[0]]]),
            b_of_rho=lambda r: one,
            stage_jacobian=lambda x, u: np.array([[2.0 * x[0], 1.0]]),
            exact_ext=ext,
        )
    raise ConfigError(f"unknown tiny model kind {kind!r}, expected 'lti' or 'qlpv'")


def get_model(name: str) -> LpvModel:
    """Look up a builtin model by its string identifier."""
    if name == "unicycle":
        return builtin_unicycle()
    if name == "adip":
        return builtin_adip()
    if name == "tiny-lti":
        return builtin_tiny("lti")
    if name == "tiny-qlpv":
        return builtin_tiny("qlpv")
    raise ConfigError(f"unknown model id {name!r}, expected one of {MODEL_IDS}")
