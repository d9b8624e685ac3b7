"""Finite-rank and Monte Carlo representations of a Gaussian random field.

A :class:`ModeEnsemble` stores ``X = sum_n sqrt(lam_n) g_n u_n`` exactly,
with ``g_n`` i.i.d. standard complex Gaussians.  Its covariance operator is
``gamma = sum_n lam_n |u_n><u_n|`` and its density is
``rho = sum_n lam_n |u_n|^2``.  A :class:`MonteCarloEnsemble` holds ``J``
sampled realizations together with the draws that produced them.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .spectral import GridError, TorusGrid, backward, forward


@dataclass
class ModeEnsemble:
    grid: TorusGrid
    weights: np.ndarray
    modes: np.ndarray  # (n_modes, *grid.shape), physical values
    spectral: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.modes = np.asarray(self.modes, dtype=complex)
        if self.modes.ndim == self.grid.dim:
            self.modes = self.modes[None]
        if self.modes.shape[1:] != self.grid.shape:
            raise GridError(f"modes of shape {self.modes.shape} do not fit grid {self.grid.shape}")
        if self.modes.shape[0] != self.weights.size:
            raise GridError("weights and modes differ in length")
        if np.any(self.weights < 0):
            raise ValueError("mode weights must be nonnegative")

    @property
    def n_modes(self) -> int:
        return self.weights.size

    @property
    def members(self) -> np.ndarray:
        return self.modes

    @property
    def member_weights(self) -> np.ndarray:
        return self.weights

    def with_members(self, members: np.ndarray) -> "ModeEnsemble":
        return ModeEnsemble(self.grid, self.weights, members)

    def coefficients(self) -> np.ndarray:
        if self.spectral is not None:
            return self.spectral
        return forward(self.grid, self.modes)

    @classmethod
    def from_coefficients(cls, grid: TorusGrid, weights, coeffs) -> "ModeEnsemble":
        """Build from spectral coefficients, which are kept verbatim for serialization."""
        coeffs = np.asarray(coeffs, dtype=complex).reshape((-1,) + grid.shape)
        return cls(grid, weights, backward(grid, coeffs), coeffs.copy())


@dataclass
class MonteCarloEnsemble:
    grid: TorusGrid
    realizations: np.ndarray  # (J, *grid.shape)
    draws: np.ndarray  # (J, n_modes)
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        self.realizations = np.asarray(self.realizations, dtype=complex)
        if self.realizations.ndim == self.grid.dim:
            self.realizations = self.realizations[None]
        if self.realizations.shape[1:] != self.grid.shape:
            raise GridError("realizations do not fit grid")
        if self.realizations.shape[0] < 1:
            raise ValueError("a Monte Carlo ensemble needs J >= 1")

    @property
    def size(self) -> int:
        return self.realizations.shape[0]

    @property
    def members(self) -> np.ndarray:
        return self.realizations

    @property
    def member_weights(self) -> np.ndarray:
        return np.full(self.size, 1.0 / self.size)

    def with_members(self, members: np.ndarray) -> "MonteCarloEnsemble":
        return MonteCarloEnsemble(self.grid, members, self.draws, self.seed, self.stream_id)


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard complex Gaussians (xi1 + i xi2)/sqrt(2), so E|g|^2 = 1."""
    z = rng.standard_normal(tuple(shape) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


def make_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))))


def realize(modes: ModeEnsemble, draws: np.ndarray) -> np.ndarray:
    """X_j = sum_n sqrt(lam_n) g_{j,n} u_n for each row of ``draws``."""
    amp = np.sqrt(modes.weights)[:, None] * modes.modes.reshape(modes.n_modes, -1)
    return (draws @ amp).reshape((draws.shape[0],) + modes.grid.shape)


def sample_gaussian(modes: ModeEnsemble, J: int, seed: int = 0, stream_id: int = 0,
                    block: int = 8192) -> MonteCarloEnsemble:
    """Draw ``J`` realizations of the Gaussian field described by ``modes``."""
    if modes.n_modes == 0:
        raise GridError("cannot sample from an empty mode list")
    if J < 1:
        raise ValueError("J must be >= 1")
    rng = make_rng(seed, stream_id)
    draws = complex_normal(rng, (J, modes.n_modes))
    out = np.empty((J,) + modes.grid.shape, dtype=complex)
    for s in range(0, J, block):
        out[s:s + block] = realize(modes, draws[s:s + block])
    return MonteCarloEnsemble(modes.grid, out, draws, seed, stream_id)


def _density(members: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # einsum with a fixed contraction order keeps the reduction deterministic
    return np.einsum("n,n...->...", weights, np.abs(members) ** 2)


def exact_density(modes: ModeEnsemble) -> np.ndarray:
    """rho(x) = sum_n lam_n |u_n(x)|^2 (real, >= 0)."""
    return _density(modes.modes, modes.weights)


def empirical_density(mc: MonteCarloEnsemble) -> np.ndarray:
    return np.mean(np.abs(mc.realizations) ** 2, axis=0)


def density(state) -> np.ndarray:
    if isinstance(state, MonteCarloEnsemble):
        return empirical_density(state)
    return exact_density(state)


# --- covariance matrices in the truncated Fourier basis -------------------

def lattice_basis(dim: int, k_cut: int) -> np.ndarray:
    """All integer vectors with max |n_i| <= k_cut, lexicographic order."""
    r = range(-k_cut, k_cut + 1)
    return np.array(list(itertools.product(r, repeat=dim)), dtype=int).reshape(-1, dim)


@dataclass
class CovarianceMatrix:
    """Hermitian matrix gamma_{k,k'} = <e_k, gamma e_k'> with e_k = e^{ikx}/sqrt(vol)."""

    grid: TorusGrid
    basis: np.ndarray  # (K, dim) integer lattice vectors
    entries: np.ndarray  # (K, K)

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=int).reshape(-1, self.grid.dim)
        self.entries = np.asarray(self.entries, dtype=complex)
        K = self.basis.shape[0]
        if self.entries.shape != (K, K):
            raise GridError("covariance entries do not match basis size")

    @property
    def k_cut(self) -> int:
        return int(np.abs(self.basis).max()) if self.basis.size else 0

    def hermitian_defect(self) -> float:
        scale = max(np.abs(self.entries).max(), 1e-300)
        return float(np.abs(self.entries - self.entries.conj().T).max() / scale)

    def is_psd(self, tol: float = 1e-10) -> bool:
        ev = np.linalg.eigvalsh(0.5 * (self.entries + self.entries.conj().T))
        return bool(ev.min() >= -tol * max(ev.max(), 0.0) - 1e-300)

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def restrict(self, k_cut: int) -> "CovarianceMatrix":
        keep = np.all(np.abs(self.basis) <= k_cut, axis=1)
        idx = np.flatnonzero(keep)
        return CovarianceMatrix(self.grid, self.basis[idx], self.entries[np.ix_(idx, idx)])


def default_k_cut(grid: TorusGrid) -> int:
    return max(grid.nyquist // 3, 1)


def _basis_slots(grid: TorusGrid, k_cut: int) -> tuple[np.ndarray, tuple]:
    if k_cut >= grid.nyquist:
        raise GridError(f"k_cut={k_cut} reaches the Nyquist index {grid.nyquist}")
    if k_cut < 0:
        raise GridError("k_cut must be nonnegative")
    basis = lattice_basis(grid.dim, k_cut)
    slots = tuple((basis[:, ax] % grid.points_per_dim) for ax in range(grid.dim))
    return basis, slots


def _covariance(grid: TorusGrid, coeffs: np.ndarray, weights: np.ndarray, k_cut: int) -> CovarianceMatrix:
    basis, slots = _basis_slots(grid, k_cut)
    c = coeffs[(slice(None),) + slots]  # (n, K)
    entries = (c.T * weights) @ c.conj()
    return CovarianceMatrix(grid, basis, entries)


def covariance_from_modes(modes: ModeEnsemble, k_cut: int | None = None) -> CovarianceMatrix:
    """gamma_{k,k'} = sum_n lam_n u_hat_n(k) conj(u_hat_n(k'))."""
    if k_cut is None:
        k_cut = default_k_cut(modes.grid)
    return _covariance(modes.grid, modes.coefficients(), modes.weights, k_cut)


def empirical_covariance(mc: MonteCarloEnsemble, k_cut: int | None = None) -> CovarianceMatrix:
    if k_cut is None:
        k_cut = default_k_cut(mc.grid)
    w = np.full(mc.size, 1.0 / mc.size)
    return _covariance(mc.grid, forward(mc.grid, mc.realizations), w, k_cut)


def cross_covariance(a: MonteCarloEnsemble, b: MonteCarloEnsemble, k_cut: int | None = None) -> np.ndarray:
    """(1/J) sum_j a_hat_j(k) conj(b_hat_j(k')) for two ensembles on a shared probability space."""
    if a.size != b.size or a.grid != b.grid:
        raise GridError("cross covariance needs ensembles of equal size on one grid")
    if k_cut is None:
        k_cut = default_k_cut(a.grid)
    _, slots = _basis_slots(a.grid, k_cut)
    ca = forward(a.grid, a.realizations)[(slice(None),) + slots]
    cb = forward(b.grid, b.realizations)[(slice(None),) + slots]
    return ca.T @ cb.conj() / a.size
