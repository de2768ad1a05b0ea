"""Transceiver half of the alternating WMMSE optimization.

For a fixed reflection vector the weighted-MSE problem is convex in each of
the combiner ``W_d``, the weight ``W`` and the precoder ``W_s``; every
update here is the exact block minimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .channel import ChannelSet

__all__ = [
    "SystemConfig",
    "TransceiverState",
    "SingularMatrixError",
    "effective_channel",
    "mse_matrix",
    "achievable_rate",
    "rate_from_mse",
    "mmse_combiner",
    "weight_update",
    "bisection_mu",
    "precoder_update",
    "wmse_objective",
    "hermitian_sqrt",
]


class SingularMatrixError(np.linalg.LinAlgError):
    """A matrix that must be inverted is (numerically) singular."""


@dataclass(frozen=True)
class SystemConfig:
    n_streams: int
    power_budget: float = 1.0
    noise_power: float = 1.0

    def __post_init__(self):
        if self.n_streams < 1:
            raise ValueError("n_streams must be >= 1")
        if not self.power_budget > 0 or not self.noise_power > 0:
            raise ValueError("power_budget and noise_power must be positive")

    @classmethod
    def from_snr_db(cls, n_streams: int, snr_db: float, power: float = 1.0) -> "SystemConfig":
        """SNR is ``P / sigma^2`` in dB."""
        return cls(n_streams, power, power / 10.0 ** (snr_db / 10.0))

    def check_dims(self, ch: ChannelSet) -> None:
        if self.n_streams > min(ch.n_tx, ch.n_rx):
            raise ValueError(
                f"n_streams={self.n_streams} exceeds min(N_t, N_r)={min(ch.n_tx, ch.n_rx)}")


@dataclass
class TransceiverState:
    precoder: np.ndarray  # W_s, (N_t, N_s)
    combiner: np.ndarray  # W_d, (N_r, N_s)
    weight: np.ndarray  # W, (N_s, N_s)
    theta: np.ndarray  # (N,)
    mu: float = 0.0  # multiplier of the power constraint used for `precoder`


def hermitian_sqrt(a: np.ndarray) -> np.ndarray:
    """PSD square root of a Hermitian matrix, negative eigenvalues clamped to 0."""
    vals, vecs = np.linalg.eigh(a)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T


def effective_channel(ch: ChannelSet, theta: np.ndarray) -> np.ndarray:
    """``G^H diag(theta) H + H_d``."""
    theta = np.asarray(theta)
    if theta.shape != (ch.n_elements,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({ch.n_elements},)")
    return ch.g_ue_ris.conj().T @ (theta[:, None] * ch.h_bs_ris) + ch.h_direct


def mse_matrix(h_eq: np.ndarray, w_s: np.ndarray, w_d: np.ndarray, sigma2: float) -> np.ndarray:
    """Symbol-estimate error covariance ``E`` after combining."""
    ns = w_s.shape[1]
    d = np.eye(ns) - w_d.conj().T @ h_eq @ w_s
    e = d @ d.conj().T + sigma2 * (w_d.conj().T @ w_d)
    return 0.5 * (e + e.conj().T)


def achievable_rate(h_eq: np.ndarray, w_s: np.ndarray, w_d: np.ndarray, sigma2: float) -> float:
    """Rate in bit/s/Hz of the linear transceiver ``(W_s, W_d)``.

    Raises
    ------
    SingularMatrixError
        If the combiner does not have full column rank.
    """
    gram = w_d.conj().T @ w_d
    try:
        chol = sla.cho_factor(gram, lower=True)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("singular combiner Gram") from None
    if np.linalg.cond(gram) > 1e14:
        raise SingularMatrixError("singular combiner Gram")
    f = w_d.conj().T @ h_eq @ w_s
    m = np.eye(gram.shape[0]) + sla.cho_solve(chol, f @ f.conj().T) / sigma2
    sign, logdet = np.linalg.slogdet(m)
    return max(float(logdet.real) / np.log(2.0), 0.0)


def rate_from_mse(e: np.ndarray) -> float:
    """``log2 det(E^-1)``; equals the rate when ``E`` comes from the MMSE combiner."""
    sign, logdet = np.linalg.slogdet(e)
    return -float(logdet) / np.log(2.0)


def mmse_combiner(h_eq: np.ndarray, w_s: np.ndarray, sigma2: float) -> np.ndarray:
    hw = h_eq @ w_s
    c = sigma2 * np.eye(h_eq.shape[0]) + hw @ hw.conj().T
    return sla.solve(c, hw, assume_a="her")


def weight_update(e: np.ndarray) -> np.ndarray:
    """``W = E^-1`` via the eigendecomposition of the Hermitian ``E``."""
    vals, vecs = np.linalg.eigh(0.5 * (e + e.conj().T))
    if vals[0] <= 1e-12:
        raise SingularMatrixError("MSE matrix singular")
    w = (vecs / vals) @ vecs.conj().T
    return 0.5 * (w + w.conj().T)


def wmse_objective(e: np.ndarray, w: np.ndarray) -> float:
    """``tr(W E) - ln det W``, the block objective minimized by every update."""
    sign, logdet = np.linalg.slogdet(w)
    return float(np.trace(w @ e).real) - float(logdet)


def bisection_mu(lam_diag, phi_diag, power: float, rtol: float = 1e-12,
                 max_iter: int = 300) -> float:
    """Root of ``sum(phi / (lam + mu)^2) = power`` on ``mu >= 0``.

    The left side decreases monotonically in ``mu``; the bracket is
    ``[0, sqrt(sum(phi) / power)]``, at whose upper end the sum is at most
    ``power``. Returns 0 if the sum at ``mu = 0`` is already within budget.
    """
    lam = np.clip(np.asarray(lam_diag, dtype=float), 0.0, None)
    phi = np.clip(np.asarray(phi_diag, dtype=float), 0.0, None)
    if not np.any(phi > 0):
        raise ValueError("zero objective coupling")

    def excess(mu):
        with np.errstate(divide="ignore"):
            return float(np.sum(phi / (lam + mu) ** 2)) - power

    if np.all(lam[phi > 0] > 0) and excess(0.0) <= 0:
        return 0.0
    lo, hi = 0.0, float(np.sqrt(phi.sum() / power))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    # hi is always on the feasible side
    return hi


def precoder_update(h_eq: np.ndarray, w_d: np.ndarray, w: np.ndarray, power: float,
                    *, return_mu: bool = False):
    """Power-constrained minimizer of ``tr(W E)`` over the precoder.

    ``W_s = (H^H W_d W W_d^H H + mu I)^-1 H^H W_d W`` with ``mu = 0`` when
    the Gram matrix is invertible and the unconstrained solution fits the
    budget, otherwise ``mu`` solves ``tr(W_s W_s^H) = P`` by bisection.
    """
    b = h_eq.conj().T @ w_d @ w  # (N_t, N_s)
    a = h_eq.conj().T @ w_d @ w @ w_d.conj().T @ h_eq
    lam, u = np.linalg.eigh(0.5 * (a + a.conj().T))
    lam = np.clip(lam, 0.0, None)
    ub = u.conj().T @ b
    phi = np.sum(np.abs(ub) ** 2, axis=1)  # diag(U^H B B^H U)
    mu = 0.0
    invertible = lam[0] > 1e-12 * max(lam[-1], 1e-300)
    if not (invertible and np.sum(phi / lam**2) <= power):
        mu = bisection_mu(lam, phi, power)
    w_s = u @ (ub / (lam + mu)[:, None])
    if return_mu:
        return w_s, mu
    return w_s
