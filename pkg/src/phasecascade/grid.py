"""Periodic-box grid with precomputed spectral machinery.

The spatial domain is the torus [0, 2pi)^dim sampled on n points per axis,
so wavenumbers are integers.  The fast periodic variable theta is never
sampled; profiles carry an explicit harmonic index instead (see fields).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid.

    Parameters
    ----------
    dim : spatial dimension, 2 or 3 (3 is used only as "2.5D": three
        velocity components on a dim=2 grid, so dim=2 in practice).
    n : points per axis, a power of two, n >= 8.
    m_theta : number of retained fast harmonics (cap on |k|).
    dt : time step.
    t_end : time horizon.
    """

    dim: int = 2
    n: int = 64
    m_theta: int = 16
    dt: float = 0.01
    t_end: float = 0.5

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if not _is_power_of_two(self.n) or self.n < 8:
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if self.m_theta < 1:
            raise ValueError("m_theta must be >= 1")
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")

    # ---- cached spectral machinery -------------------------------------

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def npoints(self) -> int:
        return self.n ** self.dim

    @property
    def volume(self) -> float:
        return (2.0 * np.pi) ** self.dim

    @property
    def cutoff(self) -> int:
        """Dealias cutoff per axis (2/3 rule)."""
        return self.n // 3

    def wavenumbers(self) -> list[np.ndarray]:
        """Integer wavenumber array per axis, shaped for broadcasting."""
        k1 = np.fft.fftfreq(self.n, d=1.0 / self.n)
        out = []
        for ax in range(self.dim):
            shape = [1] * self.dim
            shape[ax] = self.n
            out.append(k1.reshape(shape))
        return out

    def k_squared(self) -> np.ndarray:
        k = self.wavenumbers()
        k2 = np.zeros(self.shape)
        for ka in k:
            k2 = k2 + ka ** 2
        return k2

    def dealias_mask(self) -> np.ndarray:
        """Boolean mask keeping |xi_axis| <= cutoff on every axis."""
        mask = np.ones(self.shape, dtype=bool)
        for ka in self.wavenumbers():
            mask &= np.abs(ka) <= self.cutoff
        return mask

    def coords(self) -> list[np.ndarray]:
        """Physical coordinate arrays, shaped for broadcasting."""
        x1 = np.arange(self.n) * (2.0 * np.pi / self.n)
        out = []
        for ax in range(self.dim):
            shape = [1] * self.dim
            shape[ax] = self.n
            out.append(x1.reshape(shape))
        return out

    def meshgrid(self) -> list[np.ndarray]:
        x1 = np.arange(self.n) * (2.0 * np.pi / self.n)
        return list(np.meshgrid(*([x1] * self.dim), indexing="ij"))

    def with_resolution(self, n: int) -> "Grid":
        return Grid(dim=self.dim, n=n, m_theta=self.m_theta,
                    dt=self.dt, t_end=self.t_end)

    def compatible(self, other: "Grid") -> bool:
        return self.dim == other.dim and self.n == other.n


# Module-level caches keyed by (dim, n); the arrays above are cheap to build
# but appear in inner loops.
_K_CACHE: dict = {}
_MASK_CACHE: dict = {}
_K2_CACHE: dict = {}


def wavenumbers(grid: Grid) -> list[np.ndarray]:
    key = (grid.dim, grid.n)
    if key not in _K_CACHE:
        _K_CACHE[key] = grid.wavenumbers()
    return _K_CACHE[key]


def k_squared(grid: Grid) -> np.ndarray:
    key = (grid.dim, grid.n)
    if key not in _K2_CACHE:
        _K2_CACHE[key] = grid.k_squared()
    return _K2_CACHE[key]


def dealias_mask(grid: Grid) -> np.ndarray:
    key = (grid.dim, grid.n)
    if key not in _MASK_CACHE:
        _MASK_CACHE[key] = grid.dealias_mask()
    return _MASK_CACHE[key]
