"""Scalar surface functionals consumed by the eigenvalue and capacity bounds.

All surface integrals are vertex-lumped: value at a vertex times its mixed
Voronoi area.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import NonPositiveCoefficient, QuadratureFailure, StarShapeRequired
from .mesh import (
    HypothesisFlags,
    SurfaceGeometry,
    TriangleMesh,
    classify,
    enclosed_volume,
    radial_norm,
    support_function,
    willmore_energy,
)


@dataclass(frozen=True)
class FunctionalReport:
    """Geometric integrals of a closed surface.

    ``inverse_support``, ``min_support_ratio`` are None unless the surface
    is star-shaped about the origin; ``quermass_rhs`` is None unless every
    coefficient of the quermass polynomial is positive.
    """

    area: float
    total_mean_curvature: float
    willmore: float
    gauss_integral: float
    volume: float
    max_mean_curvature: float
    abs_mean_curvature_32: float
    inverse_support: Optional[float] = None
    min_support_ratio: Optional[float] = None
    quermass_rhs: Optional[float] = None

    UNITS = {
        "area": "length^2",
        "total_mean_curvature": "length",
        "willmore": "1",
        "gauss_integral": "1",
        "volume": "length^3",
        "max_mean_curvature": "1/length",
        "abs_mean_curvature_32": "length^(1/2)",
        "inverse_support": "length",
        "min_support_ratio": "1/length",
        "quermass_rhs": "1/length",
    }

    def as_dict(self) -> dict:
        return asdict(self)


def min_support_ratio(mesh: TriangleMesh, geometry: SurfaceGeometry,
                      flags: Optional[HypothesisFlags] = None) -> float:
    """min over vertices of <x, nu> / |x|^2."""
    flags = flags or classify(mesh, geometry)
    if not flags.star_shaped:
        raise StarShapeRequired("min <x,nu>/|x|^2 needs a star-shaped surface")
    return float(np.min(support_function(mesh, geometry) / radial_norm(mesh) ** 2))


def inverse_support_integral(mesh: TriangleMesh, geometry: SurfaceGeometry,
                             flags: Optional[HypothesisFlags] = None) -> float:
    flags = flags or classify(mesh, geometry)
    if not flags.star_shaped:
        raise StarShapeRequired("integral of 1/<x,nu> needs a star-shaped surface")
    return geometry.integrate(1.0 / support_function(mesh, geometry))


def quermass_rhs(sigma_integrals: Sequence[float], tail_scale: Optional[float] = None) -> float:
    """Return the integral over (0, inf) of 1 / sum_i c_i t^i.

    Parameters
    ----------
    sigma_integrals : sequence
        c_0 = area, c_1 = integral of sigma_1, ..., c_{n-1}.
    tail_scale : float, optional
        Split point T.  Defaults to 1e3 * sqrt(c_0 / 4 pi).

    Notes
    -----
    [0, T] is integrated adaptively.  The tail is rewritten with t = 1/tau,
    which turns it into the smooth integral over (0, 1/T] of
    tau^(n-3) / sum_i c_i tau^(n-1-i), evaluated to the same tolerance.
    """
    c = np.asarray(sigma_integrals, float)
    if c.ndim != 1 or len(c) < 2:
        raise ValueError("need at least two coefficients")
    if np.any(~np.isfinite(c)) or np.any(c <= 0):
        raise NonPositiveCoefficient(f"quermass coefficients must be positive, got {c.tolist()}")
    deg = len(c) - 1
    T = tail_scale if tail_scale is not None else 1e3 * math.sqrt(c[0] / (4 * math.pi))
    poly = np.polynomial.Polynomial(c)
    rev = np.polynomial.Polynomial(c[::-1])  # tau^deg * p(1/tau)

    def head(t):
        return 1.0 / poly(t)

    def tail(tau):
        return tau ** (deg - 2) / rev(tau)

    scale = math.sqrt(c[0] / c[-1]) if deg else 1.0
    brk = [p for p in (scale, 10 * scale, 100 * scale) if p < T]
    with np.errstate(divide="raise", invalid="raise", over="raise"):
        try:
            a, ea = integrate.quad(head, 0.0, T, points=brk or None, epsabs=0, epsrel=1e-12, limit=500)
            b, eb = integrate.quad(tail, 0.0, 1.0 / T, epsabs=0, epsrel=1e-12, limit=200)
        except FloatingPointError as exc:
            raise QuadratureFailure(str(exc)) from exc
    total = a + b
    if not np.isfinite(total) or (ea + eb) > 1e-9 * abs(total):
        raise QuadratureFailure(f"quermass integral did not converge (err {ea + eb:.2e})")
    return float(total)


def functional_report(mesh: TriangleMesh, geometry: SurfaceGeometry,
                      flags: Optional[HypothesisFlags] = None, n: int = 3) -> FunctionalReport:
    """Evaluate every functional; star-shape and positivity gated fields are
    left as None when their hypothesis fails."""
    flags = flags or classify(mesh, geometry)
    H = geometry.mean_curvature
    area = geometry.total_area
    total_H = geometry.integrate(H)
    gauss = geometry.integrate(geometry.gauss_curvature)
    inv = ratio = None
    if flags.star_shaped:
        inv = inverse_support_integral(mesh, geometry, flags)
        ratio = min_support_ratio(mesh, geometry, flags)
    try:
        qr = quermass_rhs([area, total_H, gauss])
    except NonPositiveCoefficient:
        qr = None
    p = (2 * n - 3) / (n - 1)
    return FunctionalReport(
        area=area,
        total_mean_curvature=total_H,
        willmore=willmore_energy(mesh, geometry),
        gauss_integral=gauss,
        volume=enclosed_volume(mesh),
        max_mean_curvature=float(H.max()),
        abs_mean_curvature_32=geometry.integrate(np.abs(H / (n - 1)) ** p),
        inverse_support=inv,
        min_support_ratio=ratio,
        quermass_rhs=qr,
    )
