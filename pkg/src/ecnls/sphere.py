"""Static checks of the spherical-harmonic kernel identity on S^2.

K_n(x) = sum_k |e_{n,k}(x)|^2 over an orthonormal basis of degree-n
harmonics is constant on the sphere and equals N_n / vol(S^d).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_DEGREE = 32


def harmonic_dimension(n: int, d: int) -> int:
    """Dimension of the degree-n spherical harmonics on S^d."""
    if n < 0 or d < 1:
        raise ValueError("need n >= 0 and d >= 1")
    if n == 0:
        return 1
    return math.comb(n + d, d) - math.comb(n + d - 2, d)


def laplace_eigenvalue(n: int, d: int) -> int:
    if n < 0:
        raise ValueError("degree must be nonnegative")
    return n * (n + d - 1)


def sphere_volume(d: int) -> float:
    return 2 * math.pi ** ((d + 1) / 2) / math.gamma((d + 1) / 2)


@dataclass
class SphereSample:
    points: np.ndarray  # (P, 3) unit vectors
    weights: np.ndarray  # (P,) summing to 4 pi

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.points.shape[0] != self.weights.size:
            raise ValueError("points and weights differ in length")
        if np.any(np.abs(np.linalg.norm(self.points, axis=1) - 1) > 1e-12):
            raise ValueError("sample points must lie on the unit sphere")
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    @property
    def angles(self) -> tuple[np.ndarray, np.ndarray]:
        """Polar angle theta in [0, pi] and azimuth phi."""
        x, y, z = self.points.T
        return np.arccos(np.clip(z, -1, 1)), np.arctan2(y, x)


def fibonacci_sample(n_points: int = 600) -> SphereSample:
    """Quasi-uniform golden-angle points with equal weights."""
    i = np.arange(n_points) + 0.5
    z = 1 - 2 * i / n_points
    phi = math.pi * (3 - math.sqrt(5)) * i
    r = np.sqrt(1 - z**2)
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return SphereSample(pts, np.full(n_points, 4 * math.pi / n_points))


def gauss_product_sample(n_max: int) -> SphereSample:
    """Gauss-Legendre in cos(theta) times a uniform azimuth grid.

    Integrates spherical polynomials of degree <= 2*n_max exactly.
    """
    xg, wg = np.polynomial.legendre.leggauss(n_max + 1)
    n_phi = 2 * n_max + 1
    phi = 2 * math.pi * np.arange(n_phi) / n_phi
    z = np.repeat(xg, n_phi)
    w = np.repeat(wg, n_phi) * (2 * math.pi / n_phi)
    ph = np.tile(phi, xg.size)
    r = np.sqrt(1 - z**2)
    return SphereSample(np.column_stack([r * np.cos(ph), r * np.sin(ph), z]), w)


def normalized_legendre(n: int, theta: np.ndarray) -> np.ndarray:
    """Rows m = 0..n of P_n^m(cos theta) scaled so that P e^{im phi} is L^2(S^2)-normalized."""
    if not 0 <= n <= MAX_DEGREE:
        raise ValueError(f"degree must be in [0, {MAX_DEGREE}]")
    x, s = np.cos(theta), np.sin(theta)
    out = np.zeros((n + 1,) + np.shape(theta))
    pmm = np.full(np.shape(theta), 1 / math.sqrt(4 * math.pi))
    for m in range(n + 1):
        if m > 0:
            pmm = -math.sqrt((2 * m + 1) / (2 * m)) * s * pmm
        if m == n:
            out[m] = pmm
            continue
        p_prev, p = pmm, math.sqrt(2 * m + 3) * x * pmm
        for l in range(m + 2, n + 1):
            a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = math.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
            p_prev, p = p, a * (x * p - b * p_prev)
        out[m] = p
    return out


def real_harmonics(n: int, sample: SphereSample) -> np.ndarray:
    """Orthonormal real harmonics of degree n at the sample points, shape (2n+1, P)."""
    theta, phi = sample.angles
    P = normalized_legendre(n, theta)
    rows = [P[0]]
    for m in range(1, n + 1):
        rows.append(math.sqrt(2) * P[m] * np.cos(m * phi))
        rows.append(math.sqrt(2) * P[m] * np.sin(m * phi))
    return np.array(rows)


def kernel_sum(n: int, sample: SphereSample, d: int = 2) -> np.ndarray:
    """K_n at each sample point."""
    if d != 2:
        raise NotImplementedError("explicit harmonics are only generated on S^2")
    return np.sum(real_harmonics(n, sample) ** 2, axis=0)


def gram_matrix(n_max: int, sample: SphereSample) -> np.ndarray:
    Y = np.vstack([real_harmonics(n, sample) for n in range(n_max + 1)])
    return (Y * sample.weights) @ Y.T


def sphere_equilibrium_density(a, sample: SphereSample, rtol: float = 1e-9) -> float:
    """sum_n |a_n|^2 K_n, checked constant over the sample; returns that constant m.

    ``a[n]`` is the amplitude on degree n (index 0 is the constant harmonic).
    """
    a = np.asarray(a, dtype=complex)
    rho = np.zeros(sample.points.shape[0])
    for n, an in enumerate(a):
        if an != 0:
            rho += abs(an) ** 2 * kernel_sum(n, sample)
    mean = float(rho.mean())
    if np.ptp(rho) > rtol * max(abs(mean), 1e-300):
        raise ValueError(f"equilibrium density not constant: spread {np.ptp(rho):.3e}")
    return mean


def lemma_report(n_max: int, sample: SphereSample | None = None) -> dict:
    """Per-degree constancy spreads and comparison with N_n / 4 pi."""
    sample = sample or fibonacci_sample(600)
    rows = []
    for n in range(n_max + 1):
        K = kernel_sum(n, sample)
        target = harmonic_dimension(n, 2) / (4 * math.pi)
        rows.append({
            "n": n,
            "N_n": harmonic_dimension(n, 2),
            "eigenvalue": laplace_eigenvalue(n, 2),
            "mean": float(K.mean()),
            "target": target,
            "spread_rel": float(np.ptp(K) / K.mean()),
            "mean_rel_err": float(abs(K.mean() - target) / target),
        })
    gram = gram_matrix(n_max, gauss_product_sample(n_max))
    return {
        "n_max": n_max,
        "n_points": int(sample.points.shape[0]),
        "degrees": rows,
        "gram_max_dev": float(np.abs(gram - np.eye(gram.shape[0])).max()),
    }
