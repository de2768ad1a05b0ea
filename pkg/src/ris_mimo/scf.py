"""Sequence-of-closed-forms (SCF) solver for the unit-modulus QCQP.

Each iteration replaces ``|theta_n| = 1`` by the affine constraint
``cos(phi_n) Re theta_n + sin(phi_n) Im theta_n = 1`` built from the
previous phases ``phi_n``, solves the resulting equality-constrained QP in
closed form, and projects the solution back onto the unit circle.  With the
diagonal shift ``lambda >= lambda_bound(q)`` the projected objective is
non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import dpotrf, dpotrs

from .reflector import (RealLift, ReflectorQuadratic, complex_from_real,
                        lift_to_real, real_vector)

__all__ = [
    "ScfState",
    "DegenerateConstraintError",
    "lambda_bound",
    "scf_constraint_matrix",
    "scf_step",
    "scf_solve",
    "reflector_kkt_residual",
]

# used instead of a zero bound, which only occurs for A_r = 0 and a_r = 0
LAMBDA_FLOOR = 1e-12


class DegenerateConstraintError(np.linalg.LinAlgError):
    pass


@dataclass
class ScfState:
    x: np.ndarray
    theta_proj: np.ndarray
    objective_trace: list[float] = field(default_factory=list)
    iterations: int = 0
    modulus_error: float = np.inf  # max_n ||theta_n^(i)| - 1| of the last pre-projection iterate
    converged: bool = False
    lambda_shift: float = 0.0


def lambda_bound(q: ReflectorQuadratic) -> float:
    """Smallest diagonal shift for which the SCF objective sequence is monotone.

    ``(N / 8) * lambda_max(A_r^H A_r) + ||A_r^H a_r||_2``.
    """
    n = q.n_elements
    lam_max = float(np.linalg.eigvalsh(q.gram())[-1]) if n else 0.0
    return n / 8.0 * max(lam_max, 0.0) + float(np.linalg.norm(q.linear()))


def _phases(theta_prev: np.ndarray):
    theta_prev = np.asarray(theta_prev)
    if np.any(theta_prev == 0):
        raise ValueError("undefined phase")
    ang = np.angle(theta_prev)
    return np.cos(ang), np.sin(ang)


def scf_constraint_matrix(theta_prev: np.ndarray) -> np.ndarray:
    """Dense ``B`` of shape ``(N + 1, 2N + 1)`` with orthonormal rows."""
    c, s = _phases(theta_prev)
    n = c.shape[0]
    b = np.zeros((n + 1, 2 * n + 1))
    idx = np.arange(n)
    b[idx, idx] = c
    b[idx, idx + n] = s
    b[n, 2 * n] = 1.0
    return b


def _solve_constrained(rbar_inv_bt: np.ndarray, b_rbar_inv_bt: np.ndarray) -> np.ndarray:
    # x = Rbar^-1 B^T (B Rbar^-1 B^T)^-1 1
    low, info = dpotrf(b_rbar_inv_bt, lower=1, clean=0)
    if info != 0:
        raise DegenerateConstraintError("degenerate constraint system")
    sol, info = dpotrs(low, np.ones(b_rbar_inv_bt.shape[0]), lower=1)
    return rbar_inv_bt @ sol


def scf_step(lift: RealLift, b_mat: np.ndarray) -> np.ndarray:
    """Closed-form minimizer of ``x^T Rbar x`` subject to ``B x = 1``."""
    rbar = 2.0 * lift.shifted()
    try:
        chol = sla.cho_factor(rbar, lower=True)
    except np.linalg.LinAlgError:
        raise DegenerateConstraintError("Rbar = 2(R + lambda I) is not positive definite") from None
    y = sla.cho_solve(chol, b_mat.T)
    return _solve_constrained(y, b_mat @ y)


class _Kernel:
    """``Rbar^-1`` factored once; per-iteration products exploit B's sparsity."""

    def __init__(self, lift: RealLift):
        rbar = 2.0 * lift.shifted()
        try:
            chol = sla.cho_factor(rbar, lower=True)
        except np.linalg.LinAlgError:
            raise DegenerateConstraintError(
                "Rbar = 2(R + lambda I) is not positive definite") from None
        self.inv = sla.cho_solve(chol, np.eye(rbar.shape[0]))
        self.n = lift.n_elements

    def step(self, c: np.ndarray, s: np.ndarray) -> np.ndarray:
        """QP solution for the constraint built from phases ``(cos, sin)``."""
        n, inv = self.n, self.inv
        # Y = Rbar^-1 B^T, column n = c_n inv[:, n] + s_n inv[:, n+N], last = inv[:, 2N]
        y = np.empty((2 * n + 1, n + 1))
        y[:, :n] = inv[:, :n] * c + inv[:, n:2 * n] * s
        y[:, n] = inv[:, 2 * n]
        s_mat = np.empty((n + 1, n + 1))
        s_mat[:n] = c[:, None] * y[:n] + s[:, None] * y[n:2 * n]
        s_mat[n] = y[2 * n]
        s_mat = 0.5 * (s_mat + s_mat.T)
        return _solve_constrained(y, s_mat)


def scf_solve(q: ReflectorQuadratic, theta_init: np.ndarray, eps: float = 1e-4,
              max_iter: int = 500, lambda_shift: float | None = None):
    """Run SCF from ``theta_init`` until the objective changes by less than ``eps``.

    Parameters
    ----------
    q : ReflectorQuadratic
    theta_init : ndarray
        Starting point; projected onto the unit circle first.
    eps : float
        Absolute stopping tolerance on successive objective values.
    max_iter : int
    lambda_shift : float, optional
        Override of the diagonal shift.  Values below ``lambda_bound(q)``
        speed up descent but void the monotonicity guarantee.

    Returns
    -------
    theta : ndarray
        Unit-modulus solution (projected).
    state : ScfState
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    lam = lambda_bound(q) if lambda_shift is None else float(lambda_shift)
    lam = max(lam, LAMBDA_FLOOR * (1.0 + float(np.vdot(q.a_r, q.a_r).real)))
    lift = lift_to_real(q, lam)
    kernel = _Kernel(lift)

    theta = np.exp(1j * np.angle(np.asarray(theta_init, dtype=complex)))
    gram, lin, r = q.gram(), q.linear(), float(np.vdot(q.a_r, q.a_r).real)

    def objective(th):
        # ||a_r - A_r th||^2 through the Gram matrix, O(N^2)
        return max(float((np.vdot(th, gram @ th) - 2.0 * np.vdot(th, lin)).real) + r, 0.0)

    h_prev = objective(theta)
    state = ScfState(real_vector(theta), theta, [h_prev], 0, lambda_shift=lam)
    for it in range(1, max_iter + 1):
        x = kernel.step(theta.real, theta.imag)
        raw = complex_from_real(x)
        mod = np.abs(raw)
        theta = raw / mod
        h = objective(theta)
        state.x = x
        state.theta_proj = theta
        state.objective_trace.append(h)
        state.iterations = it
        state.modulus_error = float(np.max(np.abs(mod - 1.0)))
        if abs(h - h_prev) < eps:
            state.converged = True
            break
        h_prev = h
    return theta, state


def reflector_kkt_residual(lift: RealLift, x: np.ndarray) -> float:
    """``min_eta ||2(R + lambda I) x + sum_n 2 eta_n E_n x||_2``."""
    n = lift.n_elements
    grad = 2.0 * lift.shifted() @ x
    # column n of M is 2 E_n x
    m = np.zeros((2 * n + 1, n + 1))
    idx = np.arange(n)
    m[idx, idx] = 2.0 * x[:n]
    m[idx + n, idx] = 2.0 * x[n:2 * n]
    m[2 * n, n] = 2.0 * x[2 * n]
    eta, *_ = np.linalg.lstsq(m, -grad, rcond=None)
    return float(np.linalg.norm(grad + m @ eta))
