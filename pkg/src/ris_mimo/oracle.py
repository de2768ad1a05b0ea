"""Brute-force reference values for tiny reflectors.

For a fixed reflection vector the best rate over all linear transceivers
with ``N_s`` streams is the water-filling capacity over the ``N_s`` largest
eigenvalues of ``H_eq^H H_eq``.  Scanning a phase grid with this closed form
gives a global reference for the alternating optimizer when ``N <= 2``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .wmmse import SystemConfig

__all__ = ["waterfilling_rate", "GridResult", "phase_grid_search"]


def waterfilling_rate(gains: np.ndarray, power: float) -> np.ndarray:
    """Capacity ``sum log2(1 + p_i g_i)`` with optimal powers ``sum p_i = power``.

    ``gains`` has shape ``(..., k)`` (eigenvalues over noise power, any order).
    """
    g = -np.sort(-np.clip(np.asarray(gains, dtype=float), 0.0, None), axis=-1)
    k = g.shape[-1]
    with np.errstate(divide="ignore"):
        inv = np.where(g > 0, 1.0 / g, np.inf)
    counts = np.arange(1, k + 1)
    level = (power + np.cumsum(inv, axis=-1)) / counts  # water level using the top m
    # the top m channels are all active iff level_m > 1/g_m; active sets are nested
    valid = level > inv
    m = np.sum(valid, axis=-1)  # valid is a prefix of True values
    m_idx = np.clip(m - 1, 0, k - 1)
    mu = np.take_along_axis(level, m_idx[..., None], axis=-1)
    active = counts <= m[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(active, np.log2(np.where(active, mu * g, 1.0)), 0.0)
    return np.where(m > 0, terms.sum(axis=-1), 0.0)


@dataclass(frozen=True)
class GridResult:
    best_rate: float
    best_theta: np.ndarray
    points: int


def phase_grid_search(ch: ChannelSet, sys: SystemConfig, points: int = 720,
                      chunk: int = 1 << 16) -> GridResult:
    """Best rate over the ``points^N`` uniform phase grid.

    Grid phases are ``2 pi k / points``.  Intended for ``N <= 2``; the cost
    grows as ``points^N``.
    """
    n = ch.n_elements
    if points < 1:
        raise ValueError("points must be >= 1")
    if points ** n > 10 ** 7:
        raise ValueError(f"grid of {points}^{n} points is too large")
    phases = np.exp(2j * np.pi * np.arange(points) / points)
    # per-element rank-one contributions g_n^* h_n^T, shape (N, N_r, N_t)
    terms = ch.g_ue_ris.conj()[:, :, None] * ch.h_bs_ris[:, None, :]
    grid = np.array(list(itertools.product(range(points), repeat=n)), dtype=np.intp)
    best_rate, best_idx = -np.inf, None
    for lo in range(0, grid.shape[0], chunk):
        idx = grid[lo:lo + chunk]
        theta = phases[idx]  # (B, N)
        h_eq = ch.h_direct[None] + np.einsum("bn,nrt->brt", theta, terms)
        gram = np.conj(np.swapaxes(h_eq, 1, 2)) @ h_eq
        eig = np.linalg.eigvalsh(gram)[:, ::-1][:, :sys.n_streams] / sys.noise_power
        rates = waterfilling_rate(eig, sys.power_budget)
        j = int(np.argmax(rates))
        if rates[j] > best_rate:
            best_rate, best_idx = float(rates[j]), idx[j]
    return GridResult(best_rate, phases[best_idx], points)
