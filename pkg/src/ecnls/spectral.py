"""Periodic spectral infrastructure on the torus T^d.

Fourier coefficients use the unitary convention

    f_hat(k) = cell_volume * sum_x f(x) exp(-i k.x) / sqrt(volume)

so that ``sum |f_hat|^2 == cell_volume * sum |f|^2`` with unit weights.
All array functions act on the trailing ``grid.dim`` axes, so a stack of
fields of shape ``(n, N, ..., N)`` is transformed member by member.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft


def _env_workers() -> int:
    try:
        return max(1, int(os.environ.get("ECNLS_THREADS", "1")))
    except ValueError:
        return 1


_WORKERS = _env_workers()


def set_workers(n: int) -> None:
    """Set the number of threads used by the FFT backend."""
    global _WORKERS
    if int(n) < 1:
        raise ValueError(f"need at least one worker, got {n}")
    _WORKERS = int(n)


def get_workers() -> int:
    return _WORKERS


class GridError(ValueError):
    """Structural mismatch between data and a grid."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid with ``points_per_dim**dim`` nodes."""

    dim: int
    points_per_dim: int
    period: float = 2 * np.pi

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise GridError(f"dim must be 1, 2 or 3, got {self.dim}")
        n = self.points_per_dim
        if n < 8 or n & (n - 1):
            raise GridError(f"points_per_dim must be a power of two >= 8, got {n}")
        if not self.period > 0:
            raise GridError("period must be positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_dim,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_dim**self.dim

    @property
    def spacing(self) -> float:
        return self.period / self.points_per_dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def volume(self) -> float:
        return self.period**self.dim

    @property
    def nyquist(self) -> int:
        return self.points_per_dim // 2

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @cached_property
    def coords(self) -> list[np.ndarray]:
        """Broadcastable node coordinates in [-L/2, L/2), one array per axis."""
        x = (np.arange(self.points_per_dim) - self.nyquist) * self.spacing
        x = np.fft.ifftshift(x)  # keep node 0 at x = 0 so e^{ikx} is exact
        out = []
        for ax in range(self.dim):
            sh = [1] * self.dim
            sh[ax] = -1
            out.append(x.reshape(sh))
        return out

    @cached_property
    def index(self) -> list[np.ndarray]:
        """Integer wavenumber indices (fft order), broadcastable per axis."""
        n = np.fft.fftfreq(self.points_per_dim, d=1.0 / self.points_per_dim).round().astype(int)
        out = []
        for ax in range(self.dim):
            sh = [1] * self.dim
            sh[ax] = -1
            out.append(n.reshape(sh))
        return out

    @cached_property
    def wavenumbers(self) -> list[np.ndarray]:
        scale = 2 * np.pi / self.period
        return [scale * n for n in self.index]

    @cached_property
    def k2(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for k in self.wavenumbers:
            out = out + k**2
        return out

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on lattice points that lie on a Nyquist row."""
        mask = np.zeros(self.shape, dtype=bool)
        for n in self.index:
            mask = mask | (np.abs(n) == self.nyquist)
        return mask

    def dealias_mask(self, fraction: float = 2.0 / 3.0) -> np.ndarray:
        """Keep modes with |n_i| < fraction * N/2 on every axis."""
        cut = fraction * self.nyquist
        mask = np.ones(self.shape, dtype=bool)
        for n in self.index:
            mask = mask & (np.abs(n) < cut)
        return mask

    def plane_wave(self, n) -> np.ndarray:
        """exp(i k.x) for the integer lattice vector ``n`` (unit modulus)."""
        n = np.atleast_1d(np.asarray(n, dtype=int))
        if n.shape != (self.dim,):
            raise GridError(f"lattice vector must have {self.dim} entries")
        if np.any(np.abs(n) >= self.nyquist):
            raise GridError(f"lattice vector {n.tolist()} not resolvable")
        scale = 2 * np.pi / self.period
        phase = sum(scale * ni * x for ni, x in zip(n, self.coords))
        return np.exp(1j * phase) * np.ones(self.shape)

    def lattice_slot(self, n) -> tuple[int, ...]:
        """Array position of lattice vector ``n`` in fft order."""
        return tuple(int(ni) % self.points_per_dim for ni in np.atleast_1d(n))

    def describe(self) -> dict:
        return {"dim": self.dim, "points_per_dim": self.points_per_dim, "period": self.period}

    @classmethod
    def from_dict(cls, d: dict) -> "TorusGrid":
        return cls(int(d["dim"]), int(d["points_per_dim"]), float(d.get("period", 2 * np.pi)))


def _check(grid: TorusGrid, a: np.ndarray) -> None:
    if a.ndim < grid.dim or a.shape[-grid.dim:] != grid.shape:
        raise GridError(f"array of shape {a.shape} does not fit grid {grid.shape}")


def forward(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    _check(grid, values)
    scale = grid.cell_volume / np.sqrt(grid.volume)
    return sfft.fftn(values, axes=grid.axes, workers=_WORKERS) * scale


def backward(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    _check(grid, coeffs)
    scale = grid.size / np.sqrt(grid.volume)
    return sfft.ifftn(coeffs, axes=grid.axes, workers=_WORKERS) * scale


def integrate(grid: TorusGrid, values: np.ndarray):
    """Rectangle-rule integral over the trailing grid axes (spectrally exact)."""
    return np.sum(values, axis=grid.axes) * grid.cell_volume


def sobolev_weight(grid: TorusGrid, s: float) -> np.ndarray:
    return (1.0 + grid.k2) ** s


def sobolev_norm_sq_coeffs(grid: TorusGrid, coeffs: np.ndarray, s: float = 1.0):
    return np.sum(sobolev_weight(grid, s) * np.abs(coeffs) ** 2, axis=grid.axes)


def semigroup_symbol(grid: TorusGrid, t: float, mass_shift: float = 0.0) -> np.ndarray:
    return np.exp(-1j * t * (grid.k2 + mass_shift))


def apply_semigroup_array(grid: TorusGrid, values: np.ndarray, t: float, mass_shift: float = 0.0):
    """Free flow exp(-it(-Lap + m)) on physical values (any leading axes)."""
    return backward(grid, forward(grid, values) * semigroup_symbol(grid, t, mass_shift))


def gradient(grid: TorusGrid, values: np.ndarray) -> list[np.ndarray]:
    c = forward(grid, values)
    return [backward(grid, 1j * k * c) for k in grid.wavenumbers]


def zero_nyquist(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    c = forward(grid, values)
    c[..., grid.nyquist_mask] = 0.0
    return backward(grid, c)


@dataclass
class Field:
    """A complex field on a grid held in one of two representations.

    ``space`` is ``"physical"`` (node values) or ``"spectral"`` (Fourier
    coefficients in fft order).
    """

    grid: TorusGrid
    data: np.ndarray
    space: str = "physical"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != self.grid.shape:
            raise GridError(f"field of shape {self.data.shape} does not fit grid {self.grid.shape}")
        if self.space not in ("physical", "spectral"):
            raise ValueError(f"unknown representation {self.space!r}")

    @property
    def values(self) -> np.ndarray:
        return self.data if self.space == "physical" else backward(self.grid, self.data)

    @property
    def coefficients(self) -> np.ndarray:
        return self.data if self.space == "spectral" else forward(self.grid, self.data)

    def copy(self) -> "Field":
        return Field(self.grid, self.data.copy(), self.space)


def transform_forward(f: Field) -> Field:
    if f.space != "physical":
        raise ValueError("transform_forward expects a physical-space field")
    return Field(f.grid, forward(f.grid, f.data), "spectral")


def transform_backward(f: Field) -> Field:
    if f.space != "spectral":
        raise ValueError("transform_backward expects a spectral-space field")
    return Field(f.grid, backward(f.grid, f.data), "physical")


def sobolev_norm_sq(f: Field, s: float) -> float:
    """sum_k (1 + |k|^2)^s |f_hat_k|^2."""
    return float(sobolev_norm_sq_coeffs(f.grid, f.coefficients, s))


def apply_semigroup(f: Field, t: float, mass_shift: float = 0.0) -> Field:
    """Multiply mode k by exp(-it(|k|^2 + mass_shift)); same representation out."""
    c = f.coefficients * semigroup_symbol(f.grid, t, mass_shift)
    if f.space == "spectral":
        return Field(f.grid, c, "spectral")
    return Field(f.grid, backward(f.grid, c), "physical")
