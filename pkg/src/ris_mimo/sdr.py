"""Semidefinite relaxation of the reflector QCQP with Gaussian randomization.

The homogenized problem ``min tbar^H R_r tbar`` over ``|tbar_n| = 1`` is
relaxed to ``min tr(R_r X)`` over the elliptope ``{X >= 0, diag(X) = 1}``
and solved by ADMM: the affine step resets the diagonal, the conic step
clamps negative eigenvalues.  A feasible unit-modulus vector is recovered by
sampling ``CN(0, X)`` and projecting the phases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .reflector import ReflectorQuadratic

__all__ = [
    "SdrProblem",
    "SdrResiduals",
    "SdrSolution",
    "SdpConvergenceError",
    "build_rr",
    "solve_unit_diag_sdp",
    "gaussian_randomize",
    "sdr_solve",
]


@dataclass(frozen=True, eq=False)
class SdrProblem:
    r_r: np.ndarray

    @property
    def n_elements(self) -> int:
        return self.r_r.shape[0] - 1


@dataclass(frozen=True)
class SdrResiduals:
    primal_infeas: float
    dual_infeas: float
    gap: float

    def max(self) -> float:
        return max(self.primal_infeas, self.dual_infeas, self.gap)


@dataclass(frozen=True, eq=False)
class SdrSolution:
    big_theta: np.ndarray
    objective: float
    residuals: SdrResiduals
    lower_bound: float  # certified: tr(R_r X) >= lower_bound on the whole elliptope
    iterations: int = 0


class SdpConvergenceError(RuntimeError):
    def __init__(self, message: str, residuals: SdrResiduals):
        super().__init__(f"{message} (primal={residuals.primal_infeas:.2e}, "
                         f"dual={residuals.dual_infeas:.2e}, gap={residuals.gap:.2e})")
        self.residuals = residuals


def build_rr(q: ReflectorQuadratic) -> SdrProblem:
    """``R_r = [[A^H A, -A^H a], [-a^H A, a^H a]]`` so that
    ``[theta; 1]^H R_r [theta; 1] = ||a_r - A_r theta||^2``."""
    gram = q.gram()
    lin = q.linear()
    r = np.vdot(q.a_r, q.a_r).real
    r_r = np.block([[gram, -lin[:, None]], [-lin.conj()[None, :], np.array([[r]])]])
    return SdrProblem(0.5 * (r_r + r_r.conj().T))


def _psd_split(v: np.ndarray):
    vals, vecs = np.linalg.eigh(v)
    pos = np.clip(vals, 0.0, None)
    z = (vecs * pos) @ vecs.conj().T
    return 0.5 * (z + z.conj().T)


def _certified_bound(c: np.ndarray, y: np.ndarray) -> float:
    # any y with C - Diag(y) >= 0 gives sum(y) <= tr(C X) on the elliptope;
    # shifting by the smallest eigenvalue restores dual feasibility
    shift = np.linalg.eigvalsh(c - np.diag(y))[0]
    return float(np.sum(y) + shift * y.shape[0])


def solve_unit_diag_sdp(p: SdrProblem, tol: float = 1e-6, max_iter: int = 5000,
                        rho: float = 1.0) -> SdrSolution:
    """Minimize ``tr(R_r X)`` subject to ``diag(X) = 1`` and ``X >= 0``.

    Residuals are relative: consensus ``||X - Z||_F / (1 + ||Z||_F)``,
    off-diagonal dual infeasibility ``/ (1 + ||R_r||_F)`` and the gap to the
    certified lower bound ``/ (1 + |primal| + |bound|)``.

    Raises
    ------
    SdpConvergenceError
        When the residuals are not all below ``tol`` after ``max_iter``
        iterations; carries the best residuals reached.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    c_full = 0.5 * (p.r_r + p.r_r.conj().T)
    m = c_full.shape[0]
    scale = float(np.linalg.norm(c_full))
    if scale == 0.0:
        return SdrSolution(np.eye(m, dtype=complex), 0.0, SdrResiduals(0.0, 0.0, 0.0), 0.0)
    c = c_full / scale

    eye = np.eye(m, dtype=complex)
    z = eye.copy()
    u = np.zeros((m, m), dtype=complex)
    diag_idx = np.diag_indices(m)
    best = None
    for it in range(1, max_iter + 1):
        x = z - u - c / rho
        x[diag_idx] = 1.0
        z_old = z
        v = x + u
        z = _psd_split(v)
        u = v - z
        r_norm = np.linalg.norm(x - z)
        s_norm = rho * np.linalg.norm(z - z_old)
        if it % 10 == 0 or it == max_iter:
            res, theta_bar, obj, lb = _assess(c, z, x, u, rho)
            if best is None or res.max() < best[0].max():
                best = (res, theta_bar, obj, lb)
            if res.max() <= tol:
                return SdrSolution(theta_bar, obj * scale, res, lb * scale, it)
        if r_norm > 10.0 * s_norm:
            rho *= 2.0
            u *= 0.5
        elif s_norm > 10.0 * r_norm:
            rho *= 0.5
            u *= 2.0
    raise SdpConvergenceError("SDP did not converge", best[0])


def _assess(c, z, x, u, rho):
    d = np.sqrt(np.clip(np.diag(z).real, 1e-300, None))
    theta_bar = z / np.outer(d, d)
    theta_bar[np.diag_indices_from(theta_bar)] = 1.0
    obj = float(np.vdot(theta_bar, c).real)  # tr(C X)
    dual_mat = c + rho * u
    y = np.diag(dual_mat).real.copy()
    off = dual_mat - np.diag(np.diag(dual_mat))
    lb = _certified_bound(c, y)
    res = SdrResiduals(
        primal_infeas=float(np.linalg.norm(x - z) / (1.0 + np.linalg.norm(z))),
        dual_infeas=float(np.linalg.norm(off) / (1.0 + np.linalg.norm(c))),
        gap=float(abs(obj - lb) / (1.0 + abs(obj) + abs(lb))),
    )
    return res, theta_bar, obj, lb


def gaussian_randomize(sol: SdrSolution, q: ReflectorQuadratic, trials: int = 500,
                       seed=0) -> np.ndarray:
    """Best of ``trials`` phase-projected samples of ``CN(0, Theta_bar)``.

    Samples are drawn trial by trial from one stream, so the first ``k``
    candidates do not depend on ``trials``; ties go to the earliest trial.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    vals, vecs = np.linalg.eigh(sol.big_theta)
    # round-off eigenvalues would add ~sqrt(eps) noise to an exact rank-one factor
    vals = np.where(vals > 1e-12 * max(vals[-1], 0.0), vals, 0.0)
    factor = vecs * np.sqrt(vals)  # Theta_bar = F F^H
    m = factor.shape[0]
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((trials, m, 2))
    z = (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)
    xi = z @ factor.T  # rows ~ CN(0, Theta_bar)
    cand = np.exp(1j * (np.angle(xi[:, :-1]) - np.angle(xi[:, -1:])))
    res = q.a_r[None, :] - cand @ q.a_mat.T
    obj = np.sum(np.abs(res) ** 2, axis=1)
    return cand[int(np.argmin(obj))]


def sdr_solve(q: ReflectorQuadratic, tol: float = 1e-6, trials: int = 500, seed=0,
              max_iter: int = 5000) -> np.ndarray:
    sol = solve_unit_diag_sdp(build_rr(q), tol=tol, max_iter=max_iter)
    return gaussian_randomize(sol, q, trials, seed)
