"""Virtual mass, polarization and gravitational-potential tensors.

The gravitational potential of the body Omega is

    Psi(x) = -1/(4 pi) int_Omega dy / |x - y|,

so that Laplace(Psi) = 1 inside and 0 outside.  Because Omega is a
polyhedron, the boundary-reduced integrals for Psi, grad Psi and
Hess Psi have exact closed forms in terms of per-edge logarithms and
per-face solid angles; those are what :func:`psi_evaluate` uses.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .bem import (
    RULE7,
    BemSystem,
    HarmonicSolution,
    solve_dirichlet_with_constant,
    solve_neumann,
)
from .errors import ExtrapolationUnstable, PsiBarOutOfRange, SideMismatch, TooCloseToSurface
from .mesh import SurfaceGeometry, TriangleMesh, enclosed_volume, winding_number

FOUR_PI = 4.0 * np.pi
SLACK_REL_TOL = 1e-2


# ---------------------------------------------------------------------------
# exact polyhedral potential
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _PolyhedronData:
    a: np.ndarray          # (E, 3) first edge endpoint
    b: np.ndarray          # (E, 3) second edge endpoint
    length: np.ndarray     # (E,)
    E: np.ndarray          # (E, 3, 3) edge dyads
    Ea: np.ndarray         # (E, 3) E_e a_e
    EEa: np.ndarray        # (E, 3) (E_e + E_e^T) a_e
    aEa: np.ndarray        # (E,)
    corners: np.ndarray    # (F, 3, 3)
    F: np.ndarray          # (F, 3, 3) face dyads n n^T
    nd: np.ndarray         # (F, 3) n_f (n_f . p_f)
    d2: np.ndarray         # (F,)
    rad: np.ndarray        # (F,) centroid-to-corner radius
    h: np.ndarray          # (F,) longest edge
    centroids: np.ndarray


@lru_cache(maxsize=8)
def _poly_data(mesh: TriangleMesh) -> _PolyhedronData:
    f = mesh.faces
    n = mesh.face_normals
    v = mesh.vertices
    edges = mesh.edges
    ef = mesh.edge_faces
    # orient each edge along face A's counterclockwise traversal
    fa = f[ef[:, 0]]
    fwd = np.zeros(len(edges), bool)
    for k in range(3):
        fwd |= (fa[:, k] == edges[:, 0]) & (fa[:, (k + 1) % 3] == edges[:, 1])
    ia = np.where(fwd, edges[:, 0], edges[:, 1])
    ib = np.where(fwd, edges[:, 1], edges[:, 0])
    a, b = v[ia], v[ib]
    t = b - a
    length = np.linalg.norm(t, axis=1)
    t /= length[:, None]
    nA, nB = n[ef[:, 0]], n[ef[:, 1]]
    nAe = np.cross(t, nA)       # outward in-plane edge normal of face A
    nBe = -np.cross(t, nB)      # face B traverses the edge the other way
    E = np.einsum("ei,ej->eij", nA, nAe) + np.einsum("ei,ej->eij", nB, nBe)
    Ea = np.einsum("eij,ej->ei", E, a)
    EEa = Ea + np.einsum("eji,ej->ei", E, a)
    aEa = np.einsum("ei,ei->e", a, Ea)
    P = mesh.corners
    d = np.einsum("fi,fi->f", n, P[:, 0])
    cen = mesh.centroids
    return _PolyhedronData(
        a=a, b=b, length=length, E=E, Ea=Ea, EEa=EEa, aEa=aEa,
        corners=P, F=np.einsum("fi,fj->fij", n, n), nd=n * d[:, None], d2=d * d,
        rad=np.max(np.linalg.norm(P - cen[:, None], axis=2), axis=1),
        h=np.max(np.linalg.norm(P - np.roll(P, 1, axis=1), axis=2), axis=1),
        centroids=cen,
    )


def _newton(mesh: TriangleMesh, X: np.ndarray, want_hessian: bool = True):
    """Exact U = int_Omega 1/|x - y|, its gradient and Hessian at points X.

    Returns (U (m,), grad (m, 3), hess (m, 3, 3) or None).
    """
    D = _poly_data(mesh)
    X = np.atleast_2d(np.asarray(X, float))
    m = len(X)
    U = np.empty(m)
    G = np.empty((m, 3))
    H = np.empty((m, 3, 3)) if want_hessian else None
    nE, nF = len(D.a), len(D.F)
    chunk = max(1, 2_000_000 // (nE + nF))
    Eflat = D.E.reshape(nE, 9)
    Fflat = D.F.reshape(nF, 9)
    for s in range(0, m, chunk):
        x = X[s:s + chunk]
        ra = np.linalg.norm(D.a[None] - x[:, None], axis=2)
        rb = np.linalg.norm(D.b[None] - x[:, None], axis=2)
        L = np.log((ra + rb + D.length) / (ra + rb - D.length))
        r = D.corners[None] - x[:, None, None, :]
        nr = np.linalg.norm(r, axis=3)
        r1, r2, r3 = r[:, :, 0], r[:, :, 1], r[:, :, 2]
        num = np.einsum("mfi,mfi->mf", r1, np.cross(r2, r3))
        den = (nr[..., 0] * nr[..., 1] * nr[..., 2]
               + np.einsum("mfi,mfi->mf", r1, r2) * nr[..., 2]
               + np.einsum("mfi,mfi->mf", r2, r3) * nr[..., 0]
               + np.einsum("mfi,mfi->mf", r3, r1) * nr[..., 1])
        w = 2.0 * np.arctan2(num, den)
        LE = (L @ Eflat).reshape(-1, 3, 3)
        WF = (w @ Fflat).reshape(-1, 3, 3)
        # r_e^T E r_e with r_e = a - x, expanded so sums become products
        val_e = L @ D.aEa - np.einsum("mi,mi->m", x, L @ D.EEa) + np.einsum("mi,mij,mj->m", x, LE, x)
        val_f = w @ D.d2 - 2 * np.einsum("mi,mi->m", x, w @ D.nd) + np.einsum("mi,mij,mj->m", x, WF, x)
        U[s:s + chunk] = 0.5 * val_e - 0.5 * val_f
        G[s:s + chunk] = (-(L @ D.Ea) + np.einsum("mij,mj->mi", LE, x)
                          + (w @ D.nd) - np.einsum("mij,mj->mi", WF, x))
        if want_hessian:
            H[s:s + chunk] = LE - WF
    return U, G, H


@dataclass(frozen=True)
class PsiEvaluation:
    """Psi and its derivatives at one point."""

    point: np.ndarray
    side: str
    value: float
    gradient: np.ndarray
    hessian: np.ndarray

    @property
    def laplacian(self) -> float:
        return float(np.trace(self.hessian))


def _local_clearance(mesh: TriangleMesh, x) -> float:
    """Lower bound on (distance to surface) - (local edge length)."""
    D = _poly_data(mesh)
    gap = np.linalg.norm(D.centroids - x, axis=1) - D.rad
    return float(np.min(gap - D.h))


def psi_evaluate(mesh: TriangleMesh, geometry: Optional[SurfaceGeometry], x, side: str) -> PsiEvaluation:
    """Psi, grad Psi, Hess Psi at x, which must lie on the stated side
    ("interior" or "exterior") at least one edge length from the surface.
    """
    x = np.asarray(x, float)
    if side not in ("interior", "exterior"):
        raise ValueError("side must be 'interior' or 'exterior'")
    if _local_clearance(mesh, x) <= 0:
        raise TooCloseToSurface(f"point {x} is within one edge length of the surface")
    inside = winding_number(mesh, x) > 0.5
    if inside != (side == "interior"):
        raise SideMismatch(f"point {x} is not on the {side} side")
    U, G, H = _newton(mesh, x[None])
    return PsiEvaluation(x, side, float(-U[0] / FOUR_PI), -G[0] / FOUR_PI, -H[0] / FOUR_PI)


def psi_bar(mesh: TriangleMesh, geometry: Optional[SurfaceGeometry] = None,
            system: Optional[BemSystem] = None) -> np.ndarray:
    """Volume average of Hess Psi over the body.

    Uses int_Omega Psi_ij = int_boundary Psi_i nu_j, which only needs the
    gradient (continuous across the surface).  Since
    Psi_i = S[nu_i] (single layer of the i-th normal component), with an
    assembled ``system`` this is N^T S N / |Omega|.  Without one, the exact
    polyhedral gradient is integrated with 7 points per face.  The result is
    symmetrised.
    """
    if system is not None:
        N = system.normals
        M = N.T @ system.S @ N
        return 0.5 * (M + M.T) / enclosed_volume(mesh)
    bary, wq = RULE7
    P = mesh.corners
    X = np.einsum("qk,fkd->fqd", bary, P).reshape(-1, 3)
    _, G, _ = _newton(mesh, X, want_hessian=False)
    G = -G.reshape(mesh.n_faces, len(wq), 3) / FOUR_PI
    face_mean = np.einsum("fqi,q->fi", G, wq)
    M = np.einsum("fi,fj->ij", face_mean, mesh.area_vectors)
    M = 0.5 * (M + M.T) / enclosed_volume(mesh)
    return M


def jump_probe(mesh: TriangleMesh, geometry: SurfaceGeometry, vertex: int,
               offsets: Optional[Sequence[float]] = None) -> np.ndarray:
    """Extrapolated jump Hess Psi(x0 - h nu) - Hess Psi(x0 + h nu) as h -> 0.

    ``offsets`` defaults to 3..5 local edge lengths.  The jump is fitted by
    a polynomial in h through all offsets and evaluated at h = 0; the fit is
    repeated without the largest offset, and a disagreement above 5e-2 is
    reported as :class:`ExtrapolationUnstable`.
    """
    x0 = mesh.vertices[vertex]
    nu = geometry.normals[vertex]
    if offsets is None:
        nb = mesh.vertex_adjacency[vertex].indices
        ell = float(np.mean(np.linalg.norm(mesh.vertices[nb] - x0, axis=1)))
        offsets = ell * np.array([3.0, 3.5, 4.0, 4.5, 5.0])
    hs = np.sort(np.asarray(offsets, float))
    if len(hs) < 3:
        raise ValueError("need at least three offsets")
    jumps = []
    for h in hs:
        hin = psi_evaluate(mesh, geometry, x0 - h * nu, "interior").hessian
        hout = psi_evaluate(mesh, geometry, x0 + h * nu, "exterior").hessian
        jumps.append(hin - hout)
    J = np.array(jumps).reshape(len(hs), 9)
    full = _extrapolate0(hs, J)
    part = _extrapolate0(hs[:-1], J[:-1])
    if np.linalg.norm(full - part) > 5e-2:
        raise ExtrapolationUnstable(f"estimates differ by {np.linalg.norm(full - part):.3e}")
    out = full.reshape(3, 3)
    return 0.5 * (out + out.T)


def _extrapolate0(hs, values):
    """Value at h = 0 of the interpolating polynomial (Neville)."""
    T = np.array(values, float)
    n = len(hs)
    for k in range(1, n):
        for i in range(n - k):
            T[i] = (hs[i + k] * T[i] - hs[i] * T[i + 1]) / (hs[i + k] - hs[i])
    return T[0]


def b_plus_monte_carlo(samples: int = 200_000, seed: int = 0, r: float = 1.0, eps: float = 1e-6) -> float:
    """Monte Carlo estimate of the half-ball limit B_+ in R^3.

    Integrates f(y) = 3 y_3^2/|y|^5 - 1/|y|^3 over {y_3 > eps, |y| < r}
    with directions uniform on the upper hemisphere and log-uniform radius.
    The log(r/eps) part of each sample has zero mean over the hemisphere and
    is subtracted as a control variate.  Exact value 4 pi / 3.
    """
    rng = np.random.default_rng(seed)
    c = rng.random(samples)
    phi = 2 * np.pi * rng.random(samples)
    s = np.sqrt(1 - c * c)
    u = rng.random(samples)
    rho0 = eps / np.maximum(c, eps / r)
    span = np.log(r / rho0)
    rho = rho0 * np.exp(u * span)
    y = rho[:, None] * np.stack([s * np.cos(phi), s * np.sin(phi), c], 1)
    ny = np.linalg.norm(y, axis=1)
    f = 3 * y[:, 2] ** 2 / ny ** 5 - 1 / ny ** 3
    est = f * 2 * np.pi * rho ** 3 * span
    control = (3 * c * c - 1) * 2 * np.pi * np.log(r / eps)
    return float(np.mean(est - control))


def b_plus_exact(n: int = 3) -> float:
    from .ball import sphere_area
    return (n - 1) * sphere_area(n) / (2 * n)


# ---------------------------------------------------------------------------
# energy tensors
# ---------------------------------------------------------------------------

def _sym(M):
    return 0.5 * (M + M.T)


def virtual_mass(system: BemSystem, mesh: Optional[TriangleMesh] = None,
                 geometry: Optional[SurfaceGeometry] = None):
    """W_ij = int_U <grad w[e_i], grad w[e_j]> from three Neumann solves.

    Returns (W, [w[e_1], w[e_2], w[e_3]]).
    """
    nrm = system.normals
    sols = [solve_neumann(system, -nrm[:, i]) for i in range(3)]
    g = -nrm
    # -int w_i dw_j/dnu = -t_i . M g_j
    W = -np.array([[(s.trace * system.areas) @ g[:, j] for j in range(3)] for s in sols])
    return _sym(W), sols


def polarization(system: BemSystem, mesh: Optional[TriangleMesh] = None,
                 geometry: Optional[SurfaceGeometry] = None):
    """P_ij = int_U <grad v[e_i], grad v[e_j]> from three Dirichlet solves
    with a free constant.  Returns (P, [v[e_1], v[e_2], v[e_3]])."""
    c = system.centroids
    sols = [solve_dirichlet_with_constant(system, c[:, i]) for i in range(3)]
    A = system.steklov_matrix
    Q = np.stack([s.density for s in sols], 1)
    T = np.stack([s.trace for s in sols], 1)
    return _sym(T.T @ A @ Q), sols


def w_mean_integral(solution: HarmonicSolution, system: BemSystem) -> float:
    """int_boundary w da for an exterior solution."""
    return float(solution.trace @ system.areas)


def w_mean_defect(solutions, system: BemSystem) -> float:
    """max_e |int w[e]| / (|boundary|^(1/2) energy(w[e])^(1/2))."""
    area = float(system.areas.sum())
    vals = []
    for s in solutions:
        if s.energy <= 0:
            vals.append(0.0)
            continue
        vals.append(abs(w_mean_integral(s, system)) / np.sqrt(area * s.energy))
    return float(max(vals))


@dataclass
class PotentialTensors:
    """W, P, Psi_bar and the body volume (|Omega|)."""

    W: np.ndarray
    P: np.ndarray
    psi_bar: np.ndarray
    volume: float
    w_means: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w_mean_defect: float = 0.0
    dirichlet_constants: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def n(self) -> int:
        return len(self.W)

    @property
    def W_ave(self) -> float:
        return float(np.trace(self.W) / self.n)

    @property
    def P_ave(self) -> float:
        return float(np.trace(self.P) / self.n)

    def _inv(self, M):
        return np.linalg.inv(M)

    @property
    def slack_W(self) -> np.ndarray:
        """W/|Omega| - ((I - Psi_bar)^-1 - I)."""
        eye = np.eye(self.n)
        return self.W / self.volume - (self._inv(eye - self.psi_bar) - eye)

    @property
    def slack_P(self) -> np.ndarray:
        """P/|Omega| - (Psi_bar^-1 - I)."""
        eye = np.eye(self.n)
        return self.P / self.volume - (self._inv(self.psi_bar) - eye)


def compute_tensors(system: BemSystem, mesh: TriangleMesh,
                    geometry: Optional[SurfaceGeometry] = None) -> PotentialTensors:
    W, wsols = virtual_mass(system, mesh, geometry)
    P, vsols = polarization(system, mesh, geometry)
    return PotentialTensors(
        W=W, P=P, psi_bar=psi_bar(mesh, geometry, system), volume=enclosed_volume(mesh),
        w_means=np.array([w_mean_integral(s, system) for s in wsols]),
        w_mean_defect=w_mean_defect(wsols, system),
        dirichlet_constants=np.array([s.constant for s in vsols]),
    )


@dataclass
class TensorBoundsReport:
    """Smallest eigenvalues of the two slack matrices and scalar checks.

    Slack matrices are dimensionless (divided by |Omega|); a matrix bound
    counts as violated when its smallest eigenvalue is below
    ``-tol * ||rhs||``.
    """

    min_eig_W: float
    min_eig_P: float
    rhs_norm_W: float
    rhs_norm_P: float
    W_ave_ratio: float          # W_ave / (|Omega|/(n-1))
    P_ave_ratio: float          # P_ave / ((n-1)|Omega|)
    psi_bar_eigs: np.ndarray
    tol: float = SLACK_REL_TOL

    @property
    def W_matrix_holds(self) -> bool:
        return self.min_eig_W >= -self.tol * self.rhs_norm_W

    @property
    def P_matrix_holds(self) -> bool:
        return self.min_eig_P >= -self.tol * self.rhs_norm_P

    @property
    def violations(self) -> list:
        out = []
        if not self.W_matrix_holds:
            out.append("virtual_mass_matrix")
        if not self.P_matrix_holds:
            out.append("polarization_matrix")
        return out


def tensor_bounds_check(t: PotentialTensors, eps: float = 1e-6, tol: float = SLACK_REL_TOL) -> TensorBoundsReport:
    eig = np.linalg.eigvalsh(_sym(t.psi_bar))
    if eig.min() <= eps or eig.max() >= 1 - eps:
        raise PsiBarOutOfRange(f"Psi_bar eigenvalues {eig} outside (0, 1)")
    eye = np.eye(t.n)
    rW = np.linalg.inv(eye - t.psi_bar) - eye
    rP = np.linalg.inv(t.psi_bar) - eye
    n = t.n
    return TensorBoundsReport(
        min_eig_W=float(np.linalg.eigvalsh(_sym(t.slack_W)).min()),
        min_eig_P=float(np.linalg.eigvalsh(_sym(t.slack_P)).min()),
        rhs_norm_W=float(np.linalg.norm(rW, 2)),
        rhs_norm_P=float(np.linalg.norm(rP, 2)),
        W_ave_ratio=t.W_ave / (t.volume / (n - 1)),
        P_ave_ratio=t.P_ave / ((n - 1) * t.volume),
        psi_bar_eigs=eig,
        tol=tol,
    )
