"""Clustered mmWave channels for the BS -> RIS -> UE link.

All three channels (BS-RIS ``H``, UE-RIS ``G`` and the direct BS-UE link
``H_d``) follow the Saleh-Valenzuela model: a scaled sum of ``n_clusters *
n_paths`` rank-one outer products of array responses with CN(0, 1) gains.
BS and UE use uniform linear arrays, the RIS a uniform planar array.

Random numbers come from numpy's ``Generator(PCG64)`` seeded with the
64-bit ``seed`` of the draw config, so a config reproduces bit-identical
channels on any platform running the same numpy major version.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ArrayKind",
    "ArrayGeometry",
    "ChannelDrawConfig",
    "ChannelSet",
    "ula_response",
    "upa_response",
    "draw_channels",
    "near_square_upa",
]


class ArrayKind(str, enum.Enum):
    ULA = "ULA"
    UPA = "UPA"


@dataclass(frozen=True)
class ArrayGeometry:
    kind: ArrayKind = ArrayKind.UPA
    count_x: int = 4
    count_y: int = 4
    spacing_ratio: float = 0.5

    def __post_init__(self):
        if self.count_x < 1 or self.count_y < 1:
            raise ValueError("array dimensions must be >= 1")
        if self.kind == ArrayKind.ULA and self.count_y != 1:
            raise ValueError("a ULA has count_y == 1")
        if not self.spacing_ratio > 0:
            raise ValueError("spacing_ratio must be positive")

    @property
    def size(self) -> int:
        return self.count_x * self.count_y


def near_square_upa(n_elements: int, spacing_ratio: float = 0.5) -> ArrayGeometry:
    """Planar geometry with ``n_elements`` elements, as square as possible."""
    if n_elements < 1:
        raise ValueError("n_elements must be >= 1")
    ny = int(math.isqrt(n_elements))
    while n_elements % ny:
        ny -= 1
    return ArrayGeometry(ArrayKind.UPA, n_elements // ny, ny, spacing_ratio)


@dataclass(frozen=True)
class ChannelDrawConfig:
    n_tx: int
    n_rx: int
    ris_geometry: ArrayGeometry
    n_clusters: int = 8
    n_paths: int = 10
    seed: int = 0
    spacing_ratio: float = 0.5  # BS / UE arrays
    azimuth_range: tuple[float, float] = (0.0, 2.0 * math.pi)
    elevation_range: tuple[float, float] = (-0.5 * math.pi, 0.5 * math.pi)

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_clusters", "n_paths"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def n_elements(self) -> int:
        return self.ris_geometry.size


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """One channel realization.

    Attributes
    ----------
    h_bs_ris : ndarray, shape (N, N_t)
    g_ue_ris : ndarray, shape (N, N_r)
    h_direct : ndarray, shape (N_r, N_t)
    """

    h_bs_ris: np.ndarray
    g_ue_ris: np.ndarray
    h_direct: np.ndarray

    def __post_init__(self):
        n, nt = self.h_bs_ris.shape
        n2, nr = self.g_ue_ris.shape
        if n2 != n or self.h_direct.shape != (nr, nt):
            raise ValueError(
                f"inconsistent channel shapes H{self.h_bs_ris.shape}, "
                f"G{self.g_ue_ris.shape}, H_d{self.h_direct.shape}")
        for arr in (self.h_bs_ris, self.g_ue_ris, self.h_direct):
            if not np.all(np.isfinite(arr)):
                raise ValueError("channel entries must be finite")

    @property
    def n_elements(self) -> int:
        return self.h_bs_ris.shape[0]

    @property
    def n_tx(self) -> int:
        return self.h_bs_ris.shape[1]

    @property
    def n_rx(self) -> int:
        return self.g_ue_ris.shape[1]

    def without_ris(self) -> "ChannelSet":
        """Same draw with the reflection path removed (G = 0)."""
        return ChannelSet(self.h_bs_ris, np.zeros_like(self.g_ue_ris), self.h_direct)

    def checksum(self) -> str:
        h = hashlib.blake2b(digest_size=8)
        for arr in (self.h_bs_ris, self.g_ue_ris, self.h_direct):
            h.update(np.ascontiguousarray(arr, dtype=np.complex128).tobytes())
        return h.hexdigest()


def ula_response(phi: float, m: int, spacing_ratio: float = 0.5) -> np.ndarray:
    """Unit-norm ULA steering vector ``exp(-j 2 pi d/L k sin(phi)) / sqrt(m)``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    k = np.arange(m)
    return np.exp(-2j * np.pi * spacing_ratio * k * np.sin(phi)) / np.sqrt(m)


def upa_response(phi_az: float, phi_el: float, nx: int, ny: int,
                 spacing_ratio: float = 0.5) -> np.ndarray:
    """UPA steering vector, the Kronecker product of the two ULA responses."""
    return np.kron(ula_response(phi_az, nx, spacing_ratio),
                   ula_response(phi_el, ny, spacing_ratio))


def _ula_batch(phis: np.ndarray, m: int, spacing_ratio: float) -> np.ndarray:
    # rows are steering vectors, shape (len(phis), m)
    k = np.arange(m)
    return np.exp(-2j * np.pi * spacing_ratio * np.outer(np.sin(phis), k)) / np.sqrt(m)


def _upa_batch(az: np.ndarray, el: np.ndarray, geom: ArrayGeometry) -> np.ndarray:
    a = _ula_batch(az, geom.count_x, geom.spacing_ratio)
    e = _ula_batch(el, geom.count_y, geom.spacing_ratio)
    return (a[:, :, None] * e[:, None, :]).reshape(len(az), -1)


def _cn(rng: np.random.Generator, size: int) -> np.ndarray:
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2.0)


def draw_channels(cfg: ChannelDrawConfig) -> ChannelSet:
    """Draw ``H``, ``G`` and ``H_d`` for one seed.

    The draws consume the generator in a fixed order (H, then G, then H_d;
    within each: gains, azimuths, elevations, ULA angles).
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n_sum = cfg.n_clusters * cfg.n_paths
    geom = cfg.ris_geometry
    n = geom.size
    az_lo, az_hi = cfg.azimuth_range
    el_lo, el_hi = cfg.elevation_range

    def ris_to_ula(m: int) -> np.ndarray:
        gains = _cn(rng, n_sum)
        az = rng.uniform(az_lo, az_hi, n_sum)
        el = rng.uniform(el_lo, el_hi, n_sum)
        ula_angles = rng.uniform(az_lo, az_hi, n_sum)
        a_ris = _upa_batch(az, el, geom)
        a_ula = _ula_batch(ula_angles, m, cfg.spacing_ratio)
        scale = np.sqrt(m * n / n_sum)
        return scale * (a_ris.T * gains) @ a_ula.conj()

    h = ris_to_ula(cfg.n_tx)
    g = ris_to_ula(cfg.n_rx)

    gains = _cn(rng, n_sum)
    aoa = rng.uniform(az_lo, az_hi, n_sum)
    aod = rng.uniform(az_lo, az_hi, n_sum)
    a_r = _ula_batch(aoa, cfg.n_rx, cfg.spacing_ratio)
    a_t = _ula_batch(aod, cfg.n_tx, cfg.spacing_ratio)
    h_d = np.sqrt(cfg.n_tx * cfg.n_rx / n_sum) * (a_r.T * gains) @ a_t.conj()
    return ChannelSet(h, g, h_d)
