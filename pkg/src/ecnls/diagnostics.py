"""Conserved and monitored quantities for ensemble states.

Every function accepts either ensemble type; both expose ``members`` and
``member_weights`` so that expectations are weighted sums over members
(``lam_n`` for mode ensembles, ``1/J`` for Monte Carlo ensembles).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .ensembles import density
from .spectral import (
    TorusGrid,
    apply_semigroup_array,
    backward,
    forward,
    integrate,
    sobolev_norm_sq_coeffs,
)

CSV_COLUMNS = (
    "t", "mass", "energy", "h1_sq", "density_L4", "virial", "virial_rate",
    "A", "B", "D", "E", "modE", "scatter_cauchy",
)


@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    energy: float
    h1_sq: float
    density_L4: float
    virial: float | None = None
    virial_rate: float | None = None
    A: float | None = None
    B: float | None = None
    D: float | None = None
    E: float | None = None
    modE: float | None = None
    scatter_cauchy: float | None = None
    kinetic: float | None = None  # sum_n w_n ||grad u_n||^2, kept for the virial check
    support_ok: bool | None = None

    def row(self) -> list[str]:
        return ["" if getattr(self, c) is None else repr(float(getattr(self, c))) for c in CSV_COLUMNS]

    def as_dict(self) -> dict:
        return asdict(self)


def record_field_names() -> list[str]:
    return [f.name for f in fields(DiagnosticsRecord)]


def potential_density(state, dealias: bool = True) -> np.ndarray:
    """Density entering the nonlinearity; 2/3-filtered when ``dealias``."""
    rho = density(state)
    if not dealias:
        return rho
    grid = state.grid
    c = forward(grid, rho)
    c[..., ~grid.dealias_mask()] = 0.0
    return backward(grid, c).real


def mass(state) -> float:
    """Ensemble L^2 mass E||X||^2 = integral of the density."""
    return float(integrate(state.grid, density(state)))


def _member_sobolev(state, s: float) -> np.ndarray:
    return sobolev_norm_sq_coeffs(state.grid, forward(state.grid, state.members), s)


def h1_sq(state) -> float:
    return float(np.dot(state.member_weights, _member_sobolev(state, 1.0)))


def kinetic(state) -> float:
    """E integral |grad X|^2 = sum_n w_n ||(-Lap)^{1/2} u_n||^2."""
    c = forward(state.grid, state.members)
    per = np.sum(state.grid.k2 * np.abs(c) ** 2, axis=state.grid.axes)
    return float(np.dot(state.member_weights, per))


def density_L4(state, dealias: bool = True) -> float:
    return float(integrate(state.grid, potential_density(state, dealias) ** 2))


def energy(state, sign: int = 1, dealias: bool = True) -> float:
    """1/2 E<X,(1-Lap)X> + sign/4 integral rho^2."""
    return 0.5 * h1_sq(state) + 0.25 * sign * density_L4(state, dealias)


# --- virial -------------------------------------------------------------

def cutoff(r: np.ndarray) -> np.ndarray:
    """Piecewise cutoff: r^2 on [0,1], exp(1 - 1/(r-2)^2) on [1,2], 0 beyond."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inner = r <= 1
    out[inner] = r[inner] ** 2
    mid = (r > 1) & (r < 2)
    out[mid] = np.exp(1 - 1 / (r[mid] - 2) ** 2)
    return out


def cutoff_derivative(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inner = r <= 1
    out[inner] = 2 * r[inner]
    mid = (r > 1) & (r < 2)
    out[mid] = 2 * (r[mid] - 2) ** -3 * np.exp(1 - 1 / (r[mid] - 2) ** 2)
    return out


def displacement(grid: TorusGrid, center=None) -> list[np.ndarray]:
    """Periodic displacement x - center wrapped into [-L/2, L/2)."""
    center = np.zeros(grid.dim) if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    L = grid.period
    return [np.mod(x - c + L / 2, L) - L / 2 for x, c in zip(grid.coords, center)]


def virial_radius(grid: TorusGrid) -> float:
    return grid.period / 4


def _radius(grid: TorusGrid, center) -> tuple[list[np.ndarray], np.ndarray]:
    d = displacement(grid, center)
    r = np.sqrt(sum(di**2 for di in d)) * np.ones(grid.shape)
    return d, r


def virial(state, center=None) -> float:
    """integral phi_R(x - center) rho(x) with phi_R = R^2 phi(|x|/R), R = L/4."""
    grid = state.grid
    R = virial_radius(grid)
    _, r = _radius(grid, center)
    return float(integrate(grid, R**2 * cutoff(r / R) * density(state)))


def virial_rate(state, center=None) -> float:
    """2 Im E integral grad(phi_R) . grad(X) conj(X); equals 4 Im E int x.grad X conj X in the bulk."""
    grid = state.grid
    R = virial_radius(grid)
    d, r = _radius(grid, center)
    with np.errstate(invalid="ignore", divide="ignore"):
        radial = np.where(r > 0, R * cutoff_derivative(r / R) / r, 2.0)
    c = forward(grid, state.members)
    total = np.zeros(state.members.shape[0])
    for di, k in zip(d, grid.wavenumbers):
        dX = backward(grid, 1j * k * c)
        total += integrate(grid, (radial * di) * dX * state.members.conj()).imag
    return float(2 * np.dot(state.member_weights, total))


def support_fraction(state, center=None) -> float:
    """Fraction of the mass inside the ball of radius R where phi_R = |x|^2."""
    grid = state.grid
    _, r = _radius(grid, center)
    rho = density(state)
    total = integrate(grid, rho)
    if total == 0:
        return 1.0
    return float(integrate(grid, np.where(r <= virial_radius(grid), rho, 0.0)) / total)


def virial_closed_form(state, sign: int = -1, dealias: bool = True) -> float:
    """8 E int |grad X|^2 + sign * 2d int rho^2 (sign=-1 focusing)."""
    return 8 * kinetic(state) + sign * 2 * state.grid.dim * density_L4(state, dealias)


@dataclass
class VirialCheck:
    residual: float  # max relative residual of the finite-difference V''
    max_excess: float  # max of V''_fd - 16 E(X0) (should be <= tolerance)
    bound_ok: bool
    support_ok: bool
    second_derivative: np.ndarray
    closed_form: np.ndarray
    times: np.ndarray


def virial_second_derivative_check(times, virials, closed_forms, energy0: float,
                                   support_ok=True, sign: int = -1,
                                   bound_tol: float = 1e-3) -> VirialCheck:
    """Central-difference V'' on a uniform time slice against the closed form.

    ``closed_forms`` holds ``virial_closed_form`` evaluated at each time.
    For focusing runs the result also records whether V'' stays below
    ``16 E(X0) + bound_tol*|E(X0)|`` at every interior time.
    """
    t = np.asarray(times, dtype=float)
    V = np.asarray(virials, dtype=float)
    Q = np.asarray(closed_forms, dtype=float)
    if t.size < 5:
        raise ValueError("virial check needs at least 5 consecutive samples")
    h = np.diff(t)
    if np.ptp(h) > 1e-9 * h.mean():
        raise ValueError("virial check needs uniformly spaced samples")
    h = h.mean()
    d2 = (V[2:] - 2 * V[1:-1] + V[:-2]) / h**2
    q = Q[1:-1]
    scale = np.maximum(np.abs(q), 1e-300)
    residual = float(np.max(np.abs(d2 - q) / scale))
    excess = float(np.max(d2 - 16 * energy0))
    ok = True if sign > 0 else bool(excess <= bound_tol * abs(energy0))
    return VirialCheck(residual, excess, ok, bool(np.all(support_ok)), d2, q, t[1:-1])


# --- perturbed equation ---------------------------------------------------

@dataclass
class ModifiedEnergy:
    A: float
    B: float
    D: float
    E: float
    total: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return self.A, self.B, self.D, self.E, self.total


def modified_energy(grid: TorusGrid, z: np.ndarray, y: np.ndarray, m: float) -> ModifiedEnergy:
    """Terms A, B, D, E and A+B+D+2mE for Z around an equilibrium Y.

    ``z`` and ``y`` are noise-coordinate columns of shape (n, *grid.shape):
    Z = sum_j z_j g_j and Y = sum_j y_j g_j with independent standard g_j
    (``y`` rows are zero on coordinates outside the equilibrium).
    """
    z = np.asarray(z, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if z.shape != y.shape:
        raise ValueError("Z and Y must share the same noise coordinates")
    c = forward(grid, z)
    per = np.sum((m + grid.k2) * np.abs(c) ** 2, axis=grid.axes)
    A = 0.5 * float(per.sum())
    rho_z = np.sum(np.abs(z) ** 2, axis=0)
    B = 0.25 * float(integrate(grid, rho_z**2))
    cross = np.sum(z.conj() * y, axis=0)  # E(conj(Z) Y)
    D = float(integrate(grid, rho_z * cross.real))
    E = 0.5 * float(integrate(grid, rho_z))
    return ModifiedEnergy(A, B, D, E, A + B + D + 2 * m * E)


# --- Morawetz and scattering ----------------------------------------------

def morawetz_accumulator(times, density_l4) -> np.ndarray:
    """Running trapezoidal integral of int rho^2 dx over time."""
    t = np.asarray(times, dtype=float)
    q = np.asarray(density_l4, dtype=float)
    if t.size == 0:
        return np.zeros(0)
    return cumulative_trapezoid(q, t, initial=0.0)


def scattering_profile(state, t: float):
    """Pull back to time zero with the free flow: S(-t) X(t)."""
    return state.with_members(apply_semigroup_array(state.grid, state.members, -t))


def h1_distance(a, b) -> float:
    diff = forward(a.grid, a.members - b.members)
    per = sobolev_norm_sq_coeffs(a.grid, diff, 1.0)
    return math.sqrt(float(np.dot(a.member_weights, per)))


def scatter_cauchy(trajectory, t1: float, t2: float, tol: float = 1e-9) -> float:
    """H^1 distance between the scattering profiles at t1 and t2."""
    s1 = trajectory.snapshot_at(t1, tol)
    s2 = trajectory.snapshot_at(t2, tol)
    return h1_distance(scattering_profile(s1, t1), scattering_profile(s2, t2))
