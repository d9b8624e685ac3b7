"""Density-operator dynamics  i d(gamma)/dt = [-Lap + sign*rho_gamma, gamma]
and the Gaussian (Bures-Wasserstein) distance between covariances.

Matrices live in the plane-wave basis e_k = e^{ikx}/sqrt(vol).  The
potential matrix is V_{k,k'} = s(k-k')/vol where
s(q) = sum_{p-p'=q} gamma_{p,p'} collects the diagonals of gamma.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .ensembles import CovarianceMatrix, lattice_basis
from .spectral import TorusGrid, backward


class OperatorError(RuntimeError):
    pass


@dataclass
class OperatorState:
    cov: CovarianceMatrix
    t: float = 0.0


@lru_cache(maxsize=32)
def _difference_index(dim: int, k_cut: int) -> tuple[np.ndarray, int]:
    """Flat index of p - p' inside the box [-2k_cut, 2k_cut]^dim for every pair."""
    basis = lattice_basis(dim, k_cut)
    diff = basis[:, None, :] - basis[None, :, :] + 2 * k_cut
    side = 4 * k_cut + 1
    flat = np.zeros(diff.shape[:2], dtype=np.int64)
    for ax in range(dim):
        flat = flat * side + diff[..., ax]
    return flat.ravel(), side**dim


def _check_basis(cov: CovarianceMatrix) -> int:
    k_cut = cov.k_cut
    if not np.array_equal(cov.basis, lattice_basis(cov.grid.dim, k_cut)):
        raise OperatorError("operator routines need the full box basis produced by covariance_from_modes")
    return k_cut


def diagonal_sums(grid: TorusGrid, entries: np.ndarray, k_cut: int) -> np.ndarray:
    idx, n = _difference_index(grid.dim, k_cut)
    flat = entries.ravel()
    return np.bincount(idx, flat.real, n) + 1j * np.bincount(idx, flat.imag, n)


def potential_matrix(grid: TorusGrid, entries: np.ndarray, k_cut: int) -> np.ndarray:
    idx, _ = _difference_index(grid.dim, k_cut)
    s = diagonal_sums(grid, entries, k_cut)
    K = entries.shape[0]
    return s[idx].reshape(K, K) / grid.volume


def rho_from_cov(cov: CovarianceMatrix, tol: float = 1e-10) -> np.ndarray:
    """Kernel diagonal rho(x) = sum gamma_{k,k'} e^{i(k-k')x} / vol on the grid nodes."""
    k_cut = _check_basis(cov)
    if cov.hermitian_defect() > tol:
        raise OperatorError("covariance is not Hermitian within tolerance")
    grid = cov.grid
    s = diagonal_sums(grid, cov.entries, k_cut)
    side = 4 * k_cut + 1
    q = lattice_basis(grid.dim, 2 * k_cut)  # same ordering as the flat difference index
    coeffs = np.zeros(grid.shape, dtype=complex)
    slots = tuple(q[:, ax] % grid.points_per_dim for ax in range(grid.dim))
    np.add.at(coeffs, slots, s)
    assert s.size == side**grid.dim
    # rho = (1/vol) sum_q s(q) e^{iqx} = backward(coeffs) / sqrt(vol) in the unitary convention
    rho = backward(grid, coeffs) / np.sqrt(grid.volume)
    if np.abs(rho.imag).max() > tol * max(np.abs(rho.real).max(), 1e-300):
        raise OperatorError("density has a non-negligible imaginary part")
    return rho.real


def kinetic_diagonal(cov: CovarianceMatrix) -> np.ndarray:
    k = cov.basis * (2 * np.pi / cov.grid.period)
    return np.sum(k**2, axis=1).astype(float)


def hamiltonian(cov: CovarianceMatrix, entries: np.ndarray, sign: int) -> np.ndarray:
    H = sign * potential_matrix(cov.grid, entries, cov.k_cut)
    H[np.diag_indices_from(H)] += kinetic_diagonal(cov)
    return H


def _rhs(cov: CovarianceMatrix, g: np.ndarray, sign: int) -> np.ndarray:
    H = hamiltonian(cov, g, sign)
    return -1j * (H @ g - g @ H)


def evolve_operator(state: OperatorState, dt: float, n_steps: int, sign: int = 1,
                    trace_tol: float = 1e-6) -> OperatorState:
    """Classical RK4 on gamma' = -i[H(gamma), gamma], re-symmetrized every step."""
    cov = state.cov
    _check_basis(cov)
    g = 0.5 * (cov.entries + cov.entries.conj().T)
    tr0 = np.trace(g).real
    for step in range(n_steps):
        k1 = _rhs(cov, g, sign)
        k2 = _rhs(cov, g + 0.5 * dt * k1, sign)
        k3 = _rhs(cov, g + 0.5 * dt * k2, sign)
        k4 = _rhs(cov, g + dt * k3, sign)
        g = g + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        g = 0.5 * (g + g.conj().T)
        tr = np.trace(g).real
        if not np.isfinite(tr) or abs(tr - tr0) > trace_tol * max(abs(tr0), 1e-300):
            raise OperatorError(
                f"trace drift {abs(tr - tr0):.3e} at step {step + 1}; retry with dt < {dt / 2:.3e}"
            )
    out = CovarianceMatrix(cov.grid, cov.basis, g)
    return OperatorState(out, state.t + n_steps * dt)


# --- Gaussian Wasserstein distance ---------------------------------------

def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Hermitian square root; eigenvalues at roundoff level are set to zero.

    Without the relative floor a rank-deficient input keeps eigenvalues of
    size ~1e-16 |a| whose square roots (~1e-8) would dominate the distance
    between nearly equal covariances.
    """
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    floor = w.size * np.finfo(float).eps * max(np.abs(w).max(initial=0.0), 1e-300)
    w = np.where(w > floor, w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def sobolev_matrix_weight(cov: CovarianceMatrix, s: float) -> np.ndarray:
    return (1.0 + kinetic_diagonal(cov)) ** s


def bures_wasserstein_matrices(a1: np.ndarray, a2: np.ndarray) -> float:
    """sqrt(tr a1 + tr a2 - 2 tr (a1^{1/2} a2 a1^{1/2})^{1/2}) for PSD a1, a2.

    Evaluated as the Procrustes residual ||a1^{1/2} - a2^{1/2} U||_F with U
    the unitary polar factor of a2^{1/2} a1^{1/2}; this is the same number
    but does not lose half the digits to cancellation when a1 ~ a2.
    """
    s1, s2 = psd_sqrt(a1), psd_sqrt(a2)
    try:
        p, _, qh = np.linalg.svd(s1 @ s2)
    except np.linalg.LinAlgError as exc:
        raise OperatorError("singular value decomposition failed") from exc
    u = qh.conj().T @ p.conj().T
    return float(np.linalg.norm(s1 - s2 @ u))


def bures_wasserstein(cov1: CovarianceMatrix, cov2: CovarianceMatrix, sobolev_weight: float = 1.0) -> float:
    """Wasserstein-2 distance (H^s cost) between the centred Gaussian laws of two covariances."""
    if cov1.grid != cov2.grid or not np.array_equal(cov1.basis, cov2.basis):
        raise OperatorError("covariances live on different bases")
    for c in (cov1, cov2):
        if not np.all(np.isfinite(c.entries)) or not c.is_psd(1e-8):
            raise OperatorError("bures_wasserstein needs PSD inputs")
    w = np.sqrt(sobolev_matrix_weight(cov1, sobolev_weight))
    a1 = w[:, None] * cov1.entries * w[None, :]
    a2 = w[:, None] * cov2.entries * w[None, :]
    return bures_wasserstein_matrices(a1, a2)


def frobenius(cov1: CovarianceMatrix, cov2: CovarianceMatrix) -> float:
    return float(np.linalg.norm(cov1.entries - cov2.entries))


def spectrum(cov: CovarianceMatrix) -> np.ndarray:
    return sla.eigvalsh(0.5 * (cov.entries + cov.entries.conj().T))
