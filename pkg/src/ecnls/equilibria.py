"""Random Fourier-series equilibria on the torus.

``Y(t) = sum_k a_k exp(-it(|k|^2 + m)) g_k e^{ikx}`` with ``m = sum |a_k|^2``
has constant density ``m`` and therefore solves the defocusing equation
with the mass-shifted free flow.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensembles import ModeEnsemble
from .spectral import GridError, TorusGrid


@dataclass
class EquilibriumSpec:
    grid: TorusGrid
    lattice: np.ndarray  # (K, dim) integer wavenumber indices
    coefficients: np.ndarray  # (K,) complex a_k
    m: float | None = None
    m2: float | None = None

    def __post_init__(self):
        self.lattice = np.asarray(self.lattice, dtype=int).reshape(-1, self.grid.dim)
        self.coefficients = np.asarray(self.coefficients, dtype=complex).reshape(-1)
        if self.lattice.shape[0] != self.coefficients.size:
            raise GridError("lattice and coefficients differ in length")
        if len({tuple(n) for n in self.lattice}) != self.lattice.shape[0]:
            raise GridError("duplicate lattice points in equilibrium spec")
        m, m2 = self._moments()
        for name, stored, value in (("m", self.m, m), ("m2", self.m2, m2)):
            if stored is not None and abs(stored - value) > 1e-12 * max(1.0, abs(value)):
                raise ValueError(f"stored {name}={stored} disagrees with coefficients ({value})")
        self.m, self.m2 = m, m2

    def _moments(self) -> tuple[float, float]:
        w = np.abs(self.coefficients) ** 2
        return float(w.sum()), float((self.k2 * w).sum())

    @property
    def k2(self) -> np.ndarray:
        k = self.lattice * (2 * np.pi / self.grid.period)
        return np.sum(k**2, axis=1)

    @property
    def h1_weight(self) -> float:
        return float(np.sum((1 + self.k2) * np.abs(self.coefficients) ** 2))

    @property
    def size(self) -> int:
        return self.coefficients.size

    @classmethod
    def from_function(cls, grid: TorusGrid, fn, k_max: int) -> "EquilibriumSpec":
        """Coefficients a_k = fn(k_index_vector) for max|n_i| <= k_max (zeros dropped)."""
        import itertools

        lat, coef = [], []
        for n in itertools.product(range(-k_max, k_max + 1), repeat=grid.dim):
            a = complex(fn(np.array(n)))
            if a != 0:
                lat.append(n)
                coef.append(a)
        return cls(grid, np.array(lat, dtype=int).reshape(-1, grid.dim), np.array(coef))


def support_limit(grid: TorusGrid) -> int:
    return grid.nyquist // 3


def _check_support(spec: EquilibriumSpec) -> None:
    if spec.size and np.abs(spec.lattice).max() > support_limit(spec.grid):
        raise GridError(
            f"equilibrium support reaches |n|={np.abs(spec.lattice).max()}, "
            f"beyond the aliasing guard {support_limit(spec.grid)}"
        )


def plane_waves(spec: EquilibriumSpec) -> np.ndarray:
    if spec.size == 0:
        return np.zeros((0,) + spec.grid.shape, dtype=complex)
    return np.stack([spec.grid.plane_wave(n) for n in spec.lattice])


def build_equilibrium(spec: EquilibriumSpec) -> ModeEnsemble:
    """One mode per supported k: weight |a_k|^2, mode e^{i(kx + arg a_k)}."""
    _check_support(spec)
    if spec.size == 0:
        return ModeEnsemble(spec.grid, np.zeros(1), np.zeros((1,) + spec.grid.shape))
    phase = np.exp(1j * np.angle(spec.coefficients))
    modes = plane_waves(spec) * phase.reshape((-1,) + (1,) * spec.grid.dim)
    return ModeEnsemble(spec.grid, np.abs(spec.coefficients) ** 2, modes)


def equilibrium_phases(spec: EquilibriumSpec, t: float) -> np.ndarray:
    """exp(-it(|k|^2 + m)) for every supported k."""
    return np.exp(-1j * t * (spec.k2 + spec.m))


def equilibrium_members(spec: EquilibriumSpec, t: float) -> np.ndarray:
    """Noise-coordinate columns y_k(t) = a_k e^{ikx} exp(-it(|k|^2+m))."""
    _check_support(spec)
    c = spec.coefficients * equilibrium_phases(spec, t)
    return plane_waves(spec) * c.reshape((-1,) + (1,) * spec.grid.dim)
