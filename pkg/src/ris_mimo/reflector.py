"""Reflector subproblem as a unit-modulus least-squares QCQP.

With the transceiver fixed, the weighted MSE depends on the reflection
vector only through ``||a_r - A_r theta||^2 + c``.  This module builds
``(A_r, a_r, c)`` and the equivalent real-valued homogeneous form
``x^T R x`` with ``x = [Re theta; Im theta; 1]`` used by the SCF solver.

Conventions (all pinned by the round-trip test against the direct MSE):

* ``Gbar = W_d^H G^H`` has shape ``(N_s, N)``.
* Column ``n`` of ``A_r`` is ``conj(r_n) kron g_n`` where ``r_n`` is column
  ``n`` of the Hermitian root ``R_y^{1/2}`` and ``g_n`` column ``n`` of
  ``W^{1/2} Gbar``; this is what ``vec(M diag(theta) K) = (K^T kron M)
  vec(diag(theta))`` produces.
* ``R_y`` is rank deficient in general (rank <= N_s), so its root comes from
  a clamped eigendecomposition and ``W_x`` uses the pseudo-inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .wmmse import TransceiverState, hermitian_sqrt

__all__ = [
    "ReflectorQuadratic",
    "RealLift",
    "build_reflector_quadratic",
    "eval_reflector_objective",
    "lift_to_real",
    "unit_constraint_indicator",
    "real_vector",
    "complex_from_real",
]

PINV_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class ReflectorQuadratic:
    a_r: np.ndarray  # (N_s * N,)
    a_mat: np.ndarray  # A_r, (N_s * N, N)
    c_const: float = 0.0

    @property
    def n_elements(self) -> int:
        return self.a_mat.shape[1]

    def gram(self) -> np.ndarray:
        """``A_r^H A_r``."""
        return self.a_mat.conj().T @ self.a_mat

    def linear(self) -> np.ndarray:
        """``A_r^H a_r``."""
        return self.a_mat.conj().T @ self.a_r


@dataclass(frozen=True, eq=False)
class RealLift:
    p_mat: np.ndarray
    t_vec: np.ndarray
    r_scal: float
    big_r: np.ndarray
    lambda_shift: float = 0.0

    @property
    def n_elements(self) -> int:
        return self.t_vec.shape[0] // 2

    def shifted(self) -> np.ndarray:
        """``R + lambda I``."""
        return self.big_r + self.lambda_shift * np.eye(self.big_r.shape[0])


def _psd_parts(r_y: np.ndarray):
    vals, vecs = np.linalg.eigh(0.5 * (r_y + r_y.conj().T))
    vals = np.clip(vals, 0.0, None)
    keep = vals > PINV_RTOL * max(vals[-1], 0.0)
    root = (vecs * np.sqrt(vals)) @ vecs.conj().T
    v = vecs[:, keep]
    pinv = (v / vals[keep]) @ v.conj().T
    return root, pinv


def build_reflector_quadratic(ch: ChannelSet, state: TransceiverState,
                              noise_power: float = 0.0) -> ReflectorQuadratic:
    """Reduce the weighted MSE at fixed transceiver to ``(A_r, a_r, c)``.

    ``noise_power`` only enters the constant ``c``; with it supplied,
    ``h(theta) + c`` equals ``tr(W E(theta))`` exactly.
    """
    w_s, w_d, w = state.precoder, state.combiner, state.weight
    ns = w_s.shape[1]
    n = ch.n_elements

    g_bar = w_d.conj().T @ ch.g_ue_ris.conj().T  # (N_s, N)
    h_bar_d = w_d.conj().T @ ch.h_direct @ w_s  # (N_s, N_s)
    h_bar = ch.h_bs_ris @ w_s  # (N, N_s)
    r_y = h_bar @ h_bar.conj().T
    r_y_root, r_y_pinv = _psd_parts(r_y)
    d = np.eye(ns) - h_bar_d
    w_x = d @ h_bar.conj().T @ r_y_pinv  # (N_s, N)
    w_root = hermitian_sqrt(w)

    a_r = (w_root @ w_x @ r_y_root).reshape(-1, order="F")
    g_cols = w_root @ g_bar  # (N_s, N)
    # a_mat[k * N_s + i, n] = conj(r_y_root[k, n]) * g_cols[i, n]
    a_mat = (r_y_root.conj()[:, None, :] * g_cols[None, :, :]).reshape(n * ns, n)

    c = (np.trace(w @ d @ d.conj().T)
         - np.trace(w @ w_x @ r_y @ w_x.conj().T)
         + noise_power * np.trace(w @ w_d.conj().T @ w_d))
    return ReflectorQuadratic(a_r, a_mat, float(c.real))


def eval_reflector_objective(q: ReflectorQuadratic, theta: np.ndarray) -> float:
    """``||a_r - A_r theta||^2``."""
    res = q.a_r - q.a_mat @ theta
    return float(np.vdot(res, res).real)


def lift_to_real(q: ReflectorQuadratic, lambda_shift: float = 0.0) -> RealLift:
    if lambda_shift < 0:
        raise ValueError("lambda_shift must be >= 0")
    gram = q.gram()
    lin = q.linear()
    p = np.block([[gram.real, -gram.imag], [gram.imag, gram.real]])
    p = 0.5 * (p + p.T)
    t = np.concatenate([lin.real, lin.imag])
    r = float(np.vdot(q.a_r, q.a_r).real)
    big_r = np.block([[p, -t[:, None]], [-t[None, :], np.array([[r]])]])
    return RealLift(p, t, r, big_r, float(lambda_shift))


def real_vector(theta: np.ndarray) -> np.ndarray:
    """``[Re theta; Im theta; 1]``."""
    return np.concatenate([theta.real, theta.imag, [1.0]])


def complex_from_real(x: np.ndarray) -> np.ndarray:
    n = (x.shape[0] - 1) // 2
    return x[:n] + 1j * x[n:2 * n]


def unit_constraint_indicator(n: int, dim_n: int) -> np.ndarray:
    """Diagonal selector ``E_n`` with ``x^T E_n x = x_n^2 + x_{n+N}^2``.

    ``n`` is 1-based; ``n = N + 1`` selects the homogenizing coordinate.
    """
    if not 1 <= n <= dim_n + 1:
        raise IndexError(f"n={n} outside 1..{dim_n + 1}")
    e = np.zeros((2 * dim_n + 1, 2 * dim_n + 1))
    if n <= dim_n:
        e[n - 1, n - 1] = 1.0
        e[n - 1 + dim_n, n - 1 + dim_n] = 1.0
    else:
        e[2 * dim_n, 2 * dim_n] = 1.0
    return e
