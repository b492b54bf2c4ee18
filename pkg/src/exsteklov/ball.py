"""Closed-form exterior Steklov data for balls in R^n (n >= 3).

These are the exactness oracles for the numerical modules: the spectrum
(n - 2 + m)/R with the multiplicity of degree-m spherical harmonics, the
capacity, and the virtual-mass / polarization / mean-Hessian tensors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def sphere_area(n: int) -> float:
    """|S^{n-1}| = 2 pi^{n/2} / Gamma(n/2)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def ball_volume(n: int, R: float = 1.0) -> float:
    return sphere_area(n) * R ** n / n


def _check(n, R=1.0):
    if int(n) != n or n < 3:
        raise ValueError(f"dimension must be an integer >= 3, got {n}")
    if not R > 0:
        raise ValueError(f"radius must be positive, got {R}")


def _comb(a: int, b: int) -> int:
    return math.comb(a, b) if a >= 0 and 0 <= b <= a else 0


def harmonic_dims(n: int, m: int) -> tuple[int, int]:
    """Dimension of degree-m spherical harmonics on S^{n-1} and the
    eigenvalue tau_m = m (n - 2 + m) of the sphere Laplacian."""
    _check(n)
    if m < 0:
        raise ValueError("degree must be >= 0")
    mu = _comb(n + m - 1, n - 1) - _comb(n + m - 3, n - 1)
    return mu, m * (n - 2 + m)


@dataclass(frozen=True)
class BallSpectrum:
    """Lowest exterior Steklov eigenvalues of the ball.

    ``levels`` holds (value, multiplicity, degree) with the last level
    truncated so that the multiplicities add up to ``count``.
    """

    dimension: int
    radius: float
    levels: tuple

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([[v] * mult for v, mult, _ in self.levels]) if self.levels else np.zeros(0)

    def scaled(self, t: float) -> "BallSpectrum":
        return BallSpectrum(self.dimension, self.radius * t,
                            tuple((v / t, mu, m) for v, mu, m in self.levels))


def ball_spectrum(n: int, R: float, count: int) -> BallSpectrum:
    """Eigenvalues (n - 2 + m)/R, each repeated mu_m times, truncated."""
    _check(n, R)
    if count < 1:
        raise ValueError("count must be >= 1")
    levels = []
    left, m = int(count), 0
    while left > 0:
        mu, _ = harmonic_dims(n, m)
        take = min(mu, left)
        levels.append(((n - 2 + m) / R, take, m))
        left -= take
        m += 1
    return BallSpectrum(int(n), float(R), tuple(levels))


def ball_capacity(n: int, R: float) -> float:
    """(n - 2) |S^{n-1}| R^{n-2}: Dirichlet energy of (R/|x|)^{n-2}."""
    _check(n, R)
    return (n - 2) * sphere_area(n) * R ** (n - 2)


def ball_tensors(n: int, R: float):
    """Return (W, P, Psi_bar) for the ball of radius R.

    W = |B|/(n-1) I, P = (n-1)|B| I and Psi_bar = I/n, which make both
    matrix inequalities between them equalities.
    """
    _check(n, R)
    vol = ball_volume(n, R)
    eye = np.eye(n)
    return vol / (n - 1) * eye, (n - 1) * vol * eye, eye / n
