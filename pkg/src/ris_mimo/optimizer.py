"""Alternating WMMSE optimization of precoder, combiner, weight and reflector.

One outer iteration runs the four block updates ``W_d -> W -> W_s -> theta``.
Each is an exact (or, for the reflector, monotone) minimizer of

    f = tr(W E) - ln det W,

so ``f`` never increases along the chain when the SCF reflector solver is
used.  At ``W = E^-1`` the objective equals ``N_s - ln 2 * R`` with ``R`` the
achievable rate, which ties the descent to rate maximization.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .reflector import RealLift, build_reflector_quadratic, real_vector
from .scf import reflector_kkt_residual, scf_solve
from .sdr import SdpConvergenceError, sdr_solve
from .wmmse import (SystemConfig, TransceiverState, achievable_rate, effective_channel,
                    mmse_combiner, mse_matrix, precoder_update, weight_update,
                    wmse_objective)

__all__ = [
    "AlgorithmVariant",
    "AlgorithmOptions",
    "OptimizationResult",
    "OuterIterationError",
    "Metrics",
    "KktResiduals",
    "run_joint_optimization",
    "quantize_phases",
    "kkt_residual",
    "compute_metrics",
    "initial_precoder",
    "quantized_refit",
]


class AlgorithmVariant(str, enum.Enum):
    SCF = "SCF"
    SDR = "SDR"
    RANDOM_RIS = "RANDOM_RIS"
    NO_RIS = "NO_RIS"


@dataclass(frozen=True)
class AlgorithmOptions:
    """Outer-loop and inner-solver settings.

    ``seed`` drives the random-RIS draw, the optional random start and the
    Gaussian randomization of the SDR variant.
    """

    variant: AlgorithmVariant = AlgorithmVariant.SCF
    outer_tol: float = 1e-4
    max_outer: int = 100
    scf_eps: float = 1e-4
    scf_max_iter: int = 500
    sdr_tol: float = 1e-6
    sdr_max_iter: int = 5000
    sdr_trials: int = 500
    seed: int = 0
    quant_bits: int | None = None
    random_init: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", AlgorithmVariant(self.variant))
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.quant_bits is not None and self.quant_bits < 1:
            raise ValueError("quant_bits must be >= 1")


@dataclass
class OptimizationResult:
    final_state: TransceiverState
    objective_trace: list[float]  # f after each outer iteration
    rate: float
    nmse: float
    channel_power: float
    outer_iterations: int
    wall_time: float  # seconds
    converged: bool = False
    # f after every sub-update, in order W_d, W, W_s, theta per outer iteration
    chain: list[float] = field(default_factory=list)
    sdr_fallbacks: int = 0  # SDR outer iterations that used the SCF step instead


@dataclass(frozen=True)
class Metrics:
    rate: float
    nmse: float
    channel_power: float


@dataclass(frozen=True)
class KktResiduals:
    precoder_res: float
    reflector_res: float
    feasibility_res: float


class OuterIterationError(RuntimeError):
    """A block update failed; ``__cause__`` holds the solver error."""

    def __init__(self, iteration: int, cause: Exception):
        super().__init__(f"outer iteration {iteration}: {type(cause).__name__}: {cause}")
        self.iteration = iteration


def quantize_phases(theta: np.ndarray, bits: int) -> np.ndarray:
    """Nearest point of the ``2^bits`` phase grid under circular distance."""
    if bits < 1:
        raise ValueError("bits must be >= 1")
    levels = 2 ** bits
    step = 2.0 * np.pi / levels
    m = np.mod(np.rint(np.angle(theta) / step), levels)
    return np.exp(1j * step * m)


def initial_precoder(h_eq: np.ndarray, n_streams: int, power: float) -> np.ndarray:
    """Dominant right singular vectors of ``H_eq`` with ``tr(W_s W_s^H) = P``."""
    _, _, vh = np.linalg.svd(h_eq)
    return vh[:n_streams].conj().T * np.sqrt(power / n_streams)


def _range_basis(w_d: np.ndarray) -> np.ndarray:
    # the rate is invariant under W_d -> W_d T for invertible T, so streams the
    # precoder switched off (near-zero combiner columns) are dropped
    u, sv, _ = np.linalg.svd(w_d, full_matrices=False)
    keep = sv > 1e-7 * sv[0] if sv.size and sv[0] > 0 else np.zeros(sv.shape, bool)
    if not np.any(keep):
        return np.eye(w_d.shape[0], 1, dtype=complex)  # nothing transmitted: rate 0
    return u[:, keep]


def compute_metrics(ch: ChannelSet, sys: SystemConfig, state: TransceiverState) -> Metrics:
    h_eq = effective_channel(ch, state.theta)
    e = mse_matrix(h_eq, state.precoder, state.combiner, sys.noise_power)
    rate = achievable_rate(h_eq, state.precoder, _range_basis(state.combiner),
                           sys.noise_power)
    return Metrics(rate, float(np.trace(e).real) / sys.n_streams,
                   float(np.linalg.norm(h_eq) ** 2))


def kkt_residual(state: TransceiverState, ch: ChannelSet, sys: SystemConfig,
                 lift: RealLift) -> KktResiduals:
    """Stationarity and feasibility residuals of the joint problem at ``state``.

    ``lift`` is the real reflector form built at ``state`` (with its shift).
    """
    h_eq = effective_channel(ch, state.theta)
    w_s, w_d, w = state.precoder, state.combiner, state.weight
    hw = h_eq.conj().T @ w_d @ w
    grad = hw @ w_d.conj().T @ h_eq @ w_s - hw + state.mu * w_s
    x = real_vector(state.theta)
    n = state.theta.shape[0]
    moduli = np.concatenate([x[:n] ** 2 + x[n:2 * n] ** 2, [x[2 * n] ** 2]])
    power_gap = abs(float(np.vdot(w_s, w_s).real) - sys.power_budget) if state.mu > 0 else 0.0
    return KktResiduals(
        precoder_res=float(np.linalg.norm(grad)),
        reflector_res=reflector_kkt_residual(lift, x),
        feasibility_res=max(power_gap, float(np.max(np.abs(moduli - 1.0)))),
    )


def _converged(f_prev: float, f: float, tol: float) -> bool:
    return abs(f - f_prev) <= tol * max(abs(f_prev), 1.0)


def _transceiver_sweep(ch, sys, state, chain):
    """``W_d -> W -> W_s`` at the current reflector, appending f after each."""
    h_eq = effective_channel(ch, state.theta)
    sigma2 = sys.noise_power

    state.combiner = mmse_combiner(h_eq, state.precoder, sigma2)
    e = mse_matrix(h_eq, state.precoder, state.combiner, sigma2)
    chain.append(wmse_objective(e, state.weight))

    state.weight = weight_update(e)
    chain.append(wmse_objective(e, state.weight))

    state.precoder, state.mu = precoder_update(h_eq, state.combiner, state.weight,
                                               sys.power_budget, return_mu=True)
    e = mse_matrix(h_eq, state.precoder, state.combiner, sigma2)
    chain.append(wmse_objective(e, state.weight))


def _finalize(ch, sys, state):
    # combiner and weight matched to the final (W_s, theta), so W = E^-1
    h_eq = effective_channel(ch, state.theta)
    state.combiner = mmse_combiner(h_eq, state.precoder, sys.noise_power)
    state.weight = weight_update(mse_matrix(h_eq, state.precoder, state.combiner,
                                            sys.noise_power))


def quantized_refit(ch: ChannelSet, sys: SystemConfig, state: TransceiverState,
                    bits: int) -> TransceiverState:
    """Quantize the phases of ``state`` and re-derive the transceiver once.

    Returns a new state; ``state`` is left untouched.
    """
    out = TransceiverState(state.precoder.copy(), state.combiner.copy(),
                           state.weight.copy(), quantize_phases(state.theta, bits), state.mu)
    _transceiver_sweep(ch, sys, out, [])
    _finalize(ch, sys, out)
    return out


def run_joint_optimization(ch: ChannelSet, sys: SystemConfig,
                           opts: AlgorithmOptions | None = None) -> OptimizationResult:
    """Alternate the four block updates until the relative change of ``f``
    drops below ``opts.outer_tol`` or ``opts.max_outer`` iterations ran.

    Raises
    ------
    OuterIterationError
        Wrapping any solver failure, with the 1-based outer iteration.
    """
    opts = opts or AlgorithmOptions()
    sys.check_dims(ch)
    start = time.perf_counter()
    variant = opts.variant
    rng = np.random.default_rng(opts.seed)

    if variant == AlgorithmVariant.NO_RIS:
        ch = ch.without_ris()
    n = ch.n_elements
    if variant == AlgorithmVariant.RANDOM_RIS or opts.random_init:
        theta = np.exp(2j * np.pi * rng.random(n))
    else:
        theta = np.ones(n, dtype=complex)
    update_theta = variant in (AlgorithmVariant.SCF, AlgorithmVariant.SDR)

    h_eq = effective_channel(ch, theta)
    ns = sys.n_streams
    state = TransceiverState(initial_precoder(h_eq, ns, sys.power_budget),
                             np.zeros((ch.n_rx, ns), dtype=complex),
                             np.eye(ns, dtype=complex), theta)

    trace: list[float] = []
    chain: list[float] = []
    converged = False
    fallbacks = 0
    it = 0
    try:
        for it in range(1, opts.max_outer + 1):
            _transceiver_sweep(ch, sys, state, chain)
            if update_theta:
                q = build_reflector_quadratic(ch, state, sys.noise_power)
                if variant == AlgorithmVariant.SCF:
                    state.theta, _ = scf_solve(q, state.theta, eps=opts.scf_eps,
                                               max_iter=opts.scf_max_iter)
                else:
                    try:
                        state.theta = sdr_solve(q, tol=opts.sdr_tol, trials=opts.sdr_trials,
                                                seed=(opts.seed, it),
                                                max_iter=opts.sdr_max_iter)
                    except SdpConvergenceError:
                        # ill-conditioned relaxation: take the SCF step instead
                        fallbacks += 1
                        state.theta, _ = scf_solve(q, state.theta, eps=opts.scf_eps,
                                                   max_iter=opts.scf_max_iter)
                h_eq = effective_channel(ch, state.theta)
                e = mse_matrix(h_eq, state.precoder, state.combiner, sys.noise_power)
                chain.append(wmse_objective(e, state.weight))
            f = chain[-1]
            if trace and _converged(trace[-1], f, opts.outer_tol):
                trace.append(f)
                converged = True
                break
            trace.append(f)

        if opts.quant_bits is not None and variant != AlgorithmVariant.NO_RIS:
            it += 1
            state = quantized_refit(ch, sys, state, opts.quant_bits)
        else:
            _finalize(ch, sys, state)
    except (np.linalg.LinAlgError, ValueError, RuntimeError) as exc:
        raise OuterIterationError(it, exc) from exc

    m = compute_metrics(ch, sys, state)
    return OptimizationResult(state, trace, m.rate, m.nmse, m.channel_power,
                              len(trace), time.perf_counter() - start, converged, chain,
                              fallbacks)

