"""Galerkin boundary elements for exterior Laplace problems on closed meshes.

Densities are piecewise constant per face.  With G(x, y) = 1/(4 pi |x - y|)
and the face normal nu pointing into the exterior domain U:

* ``S[i, j] = int_Ti int_Tj G``                 single layer
* ``Kadj[i, j] = int_Ti nu_i . grad_x int_Tj G`` adjoint double layer
* ``M = diag(face areas)``

For u = S[q] the boundary trace is represented by t = M^-1 S q and the
exterior normal derivative (along nu) by the Galerkin form of
(-1/2 I + K') q, i.e. (Kadj - M/2) q.  The Dirichlet energy of u in U is
then ``t . (M/2 - Kadj) q``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, eigs

from .errors import (
    ComplexEigenvalueError,
    QuadratureFailure,
    SideMismatch,
    SolveFailure,
    TooCloseToSurface,
)
from .mesh import SurfaceGeometry, TriangleMesh, winding_number

FOUR_PI = 4.0 * np.pi
DENSE_EIG_LIMIT = 2500
RAYLEIGH_RTOL = 1e-6
IMAG_RTOL = 1e-8
CLUSTER_RTOL = 1e-8


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def _rule7():
    """Degree-5 seven-point rule on the reference triangle (barycentric)."""
    a1, b1 = 0.059715871789770, 0.470142064105115
    a2, b2 = 0.797426985353087, 0.101286507323456
    pts = np.array([(1 / 3, 1 / 3, 1 / 3),
                    (a1, b1, b1), (b1, a1, b1), (b1, b1, a1),
                    (a2, b2, b2), (b2, a2, b2), (b2, b2, a2)])
    w = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)
    return pts, w


def _rule3():
    pts = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
    return pts, np.full(3, 1 / 3)


def _subdivided(rule, levels: int):
    """Composite rule on 4**levels congruent sub-triangles."""
    pts, w = rule
    subs = [np.eye(3)]
    for _ in range(levels):
        nxt = []
        for a, b, c in subs:
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            nxt += [np.array([a, ab, ca]), np.array([b, bc, ab]),
                    np.array([c, ca, bc]), np.array([ab, bc, ca])]
        subs = nxt
    return (np.concatenate([pts @ s for s in subs]),
            np.concatenate([w / len(subs)] * len(subs)))


RULE7 = _rule7()
RULE3 = _rule3()
RULE_TOUCH = _subdivided(RULE7, 2)


def _norm(v):
    return np.sqrt(np.einsum("...i,...i->...", v, v))


def panel_potential(x, p0, p1, p2):
    """Exact integral of 1/|x - y| over the flat triangle (p0, p1, p2) and
    its gradient in x.

    All arguments broadcast over leading axes; the last axis has length 3.
    Returns ``(I, grad_I)``.
    """
    x = np.asarray(x, float)
    nn = np.cross(p1 - p0, p2 - p0)
    n = nn / _norm(nn)[..., None]
    d = np.einsum("...i,...i->...", n, x - p0)
    rho = x - d[..., None] * n
    ad = np.abs(d)
    d2 = d * d
    I = 0.0
    grad = 0.0
    beta_sum = 0.0
    for pa, pb in ((p0, p1), (p1, p2), (p2, p0)):
        e = pb - pa
        lh = e / _norm(e)[..., None]
        uh = np.cross(lh, n)
        lp = np.einsum("...i,...i->...", pb - rho, lh)
        lm = np.einsum("...i,...i->...", pa - rho, lh)
        p0e = np.einsum("...i,...i->...", pa - rho, uh)
        r02 = p0e * p0e + d2
        rp = _norm(x - pb)
        rm = _norm(x - pa)
        # log((R + l)) written stably for l < 0
        fp = np.where(lp >= 0, rp + lp, r02 / np.maximum(rp - lp, 1e-300))
        fm = np.where(lm >= 0, rm + lm, r02 / np.maximum(rm - lm, 1e-300))
        f = np.log(fp) - np.log(fm)
        beta = (np.arctan2(p0e * lp, r02 + ad * rp)
                - np.arctan2(p0e * lm, r02 + ad * rm))
        I = I + p0e * f - ad * beta
        grad = grad - uh * f[..., None]
        beta_sum = beta_sum + beta
    grad = grad - (np.sign(d) * beta_sum)[..., None] * n
    return I, grad


def self_panel_integral(corners: np.ndarray) -> np.ndarray:
    """int_T int_T 1/|x - y| for flat triangles, closed form.

    ``corners`` is (F, 3, 3).  With side lengths a_i and perimeter P the
    value is (4 A^2 / 3) sum_i log(P / (P - 2 a_i)) / a_i.
    """
    p = corners
    a = _norm(p[:, 1] - p[:, 2])
    b = _norm(p[:, 2] - p[:, 0])
    c = _norm(p[:, 0] - p[:, 1])
    A = 0.5 * _norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]))
    P = a + b + c
    s = sum(np.log(P / (P - 2 * L)) / L for L in (a, b, c))
    return 4.0 * A * A / 3.0 * s


# ---------------------------------------------------------------------------
# system
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class BemSystem:
    """Assembled Galerkin matrices on a mesh.

    Attributes
    ----------
    S : (F, F) symmetric positive definite single layer.
    Kadj : (F, F) adjoint double layer.
    areas : (F,) diagonal of the mass matrix.
    mesh : the mesh the system was assembled on (one density per face).
    """

    S: np.ndarray
    Kadj: np.ndarray
    areas: np.ndarray
    mesh: TriangleMesh = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.areas)

    @property
    def M(self) -> np.ndarray:
        return np.diag(self.areas)

    @property
    def centroids(self) -> np.ndarray:
        return self.mesh.centroids

    @property
    def normals(self) -> np.ndarray:
        return self.mesh.face_normals

    @cached_property
    def steklov_matrix(self) -> np.ndarray:
        """A = M/2 - Kadj: minus the Galerkin exterior normal derivative."""
        A = -self.Kadj.copy()
        A[np.diag_indices_from(A)] += 0.5 * self.areas
        return A

    @cached_property
    def _cho(self):
        try:
            return sla.cho_factor(self.S, lower=True)
        except sla.LinAlgError as exc:
            raise SolveFailure(f"single layer is not positive definite: {exc}") from exc

    @cached_property
    def _lu(self):
        lu = sla.lu_factor(self.steklov_matrix, check_finite=True)
        if np.any(np.abs(np.diag(lu[0])) < 1e-14 * np.abs(np.diag(lu[0])).max()):
            raise SolveFailure("Neumann operator is singular")
        return lu

    def cholesky(self) -> np.ndarray:
        """Lower Cholesky factor of S (raises SolveFailure if not SPD)."""
        c, _ = self._cho
        return np.tril(c)

    def solve_single_layer(self, rhs):
        return sla.cho_solve(self._cho, rhs)

    def trace(self, q):
        """Face values of S[q] on the boundary (L2 projection)."""
        return (self.S @ q) / (self.areas if np.ndim(q) == 1 else self.areas[:, None])

    def energy(self, q) -> float:
        """Dirichlet energy over U of the single-layer potential of q."""
        return float(self.trace(q) @ (self.steklov_matrix @ q))


def _far_block(rows, quad_pts, normals, areas, w):
    """3x3-point interactions of faces ``rows`` with every face."""
    b = len(rows)
    N = quad_pts.shape[0]
    V = np.zeros((b, N))
    K = np.zeros((b, N))
    nr = normals[rows]
    for p in range(len(w)):
        xp = quad_pts[rows, p]
        for q in range(len(w)):
            yq = quad_pts[:, q]
            dx = xp[:, 0, None] - yq[None, :, 0]
            dy = xp[:, 1, None] - yq[None, :, 1]
            dz = xp[:, 2, None] - yq[None, :, 2]
            r2 = dx * dx + dy * dy + dz * dz
            r2[r2 == 0] = np.inf
            inv = 1.0 / np.sqrt(r2)
            ww = w[p] * w[q]
            V += ww * inv
            K -= ww * (nr[:, 0, None] * dx + nr[:, 1, None] * dy + nr[:, 2, None] * dz) * inv ** 3
    scale = areas[rows, None] * areas[None, :]
    return V * scale, K * scale


def assemble(mesh: TriangleMesh, geometry: Optional[SurfaceGeometry] = None,
             near_factor: float = 4.0, block: int = 128) -> BemSystem:
    """Assemble single layer and adjoint double layer on ``mesh``.

    Pairs are split by centroid distance D relative to the mean of the two
    longest edges h:

    * identical faces: closed-form self integral (the adjoint double layer
      of a flat panel on itself vanishes);
    * faces sharing a vertex or edge: 112-point composite outer rule with
      the exact inner panel integral;
    * other pairs with D < near_factor * h: 7-point outer rule with the
      exact inner integral;
    * remaining pairs: 3 x 3 point product rule.

    ``geometry`` is accepted for interface symmetry and not used: the
    discretisation lives on the flat faces.
    """
    P = mesh.corners
    N = mesh.n_faces
    areas = mesh.face_areas
    normals = mesh.face_normals
    if not np.all(np.isfinite(P)) or np.any(areas <= 0):
        raise QuadratureFailure("degenerate or non-finite panel")
    cen = mesh.centroids
    h = np.max(_norm(P - np.roll(P, 1, axis=1)), axis=1)
    b3, w3 = RULE3
    q3 = np.einsum("qk,nkd->nqd", b3, P)

    S = np.empty((N, N))
    K = np.empty((N, N))
    near_i, near_j = [], []
    for r0 in range(0, N, block):
        rows = np.arange(r0, min(N, r0 + block))
        S[rows], K[rows] = _far_block(rows, q3, normals, areas, w3)
        D = _norm(cen[rows, None, :] - cen[None, :, :])
        ii, jj = np.nonzero(D < near_factor * 0.5 * (h[rows, None] + h[None, :]))
        near_i.append(rows[ii])
        near_j.append(jj)
    near_i = np.concatenate(near_i)
    near_j = np.concatenate(near_j)

    inc = mesh.face_vertex_incidence
    touch = (inc @ inc.T).tocsr()
    touch.setdiag(0)
    touch.eliminate_zeros()
    ti, tj = touch.nonzero()
    is_touch = np.isin(near_i * N + near_j, ti * N + tj)
    keep = (near_i != near_j) & ~is_touch
    near_i, near_j = near_i[keep], near_j[keep]

    for (I, J), (bary, wq) in (((ti, tj), RULE_TOUCH), ((near_i, near_j), RULE7)):
        step = max(1, 300_000 // len(wq))
        for c0 in range(0, len(I), step):
            Ii, Jj = I[c0:c0 + step], J[c0:c0 + step]
            X = np.einsum("qk,nkd->nqd", bary, P[Ii])
            Pj = P[Jj][:, None]
            pot, grad = panel_potential(X, Pj[..., 0, :], Pj[..., 1, :], Pj[..., 2, :])
            S[Ii, Jj] = (pot @ wq) * areas[Ii]
            K[Ii, Jj] = (np.einsum("mqd,md->mq", grad, normals[Ii]) @ wq) * areas[Ii]

    diag = np.arange(N)
    S[diag, diag] = self_panel_integral(P)
    K[diag, diag] = 0.0
    S = 0.5 * (S + S.T)
    S /= FOUR_PI
    K /= FOUR_PI
    if not (np.all(np.isfinite(S)) and np.all(np.isfinite(K))):
        raise QuadratureFailure("non-finite matrix entry")
    return BemSystem(S, K, areas.copy(), mesh)


# ---------------------------------------------------------------------------
# solves
# ---------------------------------------------------------------------------

@dataclass
class SpectralResult:
    """Lowest exterior Steklov eigenpairs.

    ``densities`` has one column per eigenvalue, normalised so that the
    boundary trace has unit L2 norm and positive mean.
    """

    eigenvalues: np.ndarray
    densities: np.ndarray
    rayleigh: np.ndarray
    max_imag: float = 0.0

    def b_gram(self, system: BemSystem) -> np.ndarray:
        """Gram matrix q_i . S q_j of the densities."""
        return self.densities.T @ system.S @ self.densities


@dataclass
class HarmonicSolution:
    """Exterior harmonic function u = S[q] with boundary data."""

    density: np.ndarray
    trace: np.ndarray
    energy: float
    constant: float = 0.0

    @property
    def charge(self) -> float:
        return float(np.sum(self.density))


def solve_capacity(system: BemSystem) -> tuple[float, np.ndarray]:
    """Capacity and equilibrium density for boundary value 1.

    Solves S q = M 1; the capacity equals the total charge sum q_i A_i.
    """
    q = system.solve_single_layer(system.areas)
    if not np.all(np.isfinite(q)):
        raise SolveFailure("capacity solve produced non-finite density")
    return float(q @ system.areas), q


def _real_vectors(vecs):
    """Rotate each complex eigenvector to be (numerically) real."""
    k = np.argmax(np.abs(vecs), axis=0)
    phase = vecs[k, np.arange(vecs.shape[1])]
    phase = phase / np.abs(phase)
    return (vecs / phase).real


def _orthonormalize_clusters(xi, Q, S, rtol=CLUSTER_RTOL):
    """S-orthonormalize eigenvectors within clusters of coincident eigenvalues.

    Inside a degenerate eigenspace any basis is valid; the non-symmetric
    solver returns an arbitrary one, so it is replaced by an S-orthonormal one.
    """
    Q = Q.copy()
    start = 0
    for i in range(1, len(xi) + 1):
        if i == len(xi) or xi[i] - xi[start] > rtol * abs(xi[start]):
            if i - start > 1:
                blk = Q[:, start:i]
                L = np.linalg.cholesky(blk.T @ S @ blk)
                Q[:, start:i] = sla.solve_triangular(L, blk.T, lower=True).T
            start = i
    return Q


def solve_steklov(system: BemSystem, k: int = 4, method: str = "auto") -> SpectralResult:
    """k smallest eigenvalues of (M/2 - Kadj) q = xi S q.

    ``method`` is "dense" (Cholesky reduction then a full eigensolve),
    "arpack" (shift-invert Arnoldi on (M/2 - Kadj)^-1 S) or "auto", which
    picks dense up to :data:`DENSE_EIG_LIMIT` faces.
    """
    N = system.size
    if k < 1 or k >= N - 1:
        raise ValueError(f"k must be in [1, {N - 2}]")
    A = system.steklov_matrix
    if method == "auto":
        method = "dense" if N <= DENSE_EIG_LIMIT else "arpack"
    if method == "dense":
        L = system.cholesky()
        C = sla.solve_triangular(L, sla.solve_triangular(L, A, lower=True).T, lower=True).T
        vals, Y = sla.eig(C)
        order = np.argsort(vals.real)[:k]
        vals, Y = vals[order], Y[:, order]
        vecs = sla.solve_triangular(L.T, Y, lower=False)
    elif method == "arpack":
        lu = system._lu
        op = LinearOperator((N, N), matvec=lambda x: sla.lu_solve(lu, system.S @ x), dtype=float)
        try:
            # extra pairs so that a degenerate cluster at the k-th value is
            # not cut short by Arnoldi
            k_int = min(N - 2, k + max(4, k))
            mu, vecs = eigs(op, k=k_int, which="LM", v0=np.ones(N),
                            ncv=min(N - 1, max(2 * k_int + 1, 24)), tol=1e-12)
        except (ArpackError, ArpackNoConvergence) as exc:
            raise SolveFailure(f"Arnoldi iteration failed: {exc}") from exc
        vals = 1.0 / mu
        order = np.argsort(vals.real)[:k]
        vals, vecs = vals[order], vecs[:, order]
    else:
        raise ValueError(f"unknown method {method!r}")

    imag = np.abs(vals.imag)
    if np.any(imag > IMAG_RTOL * np.abs(vals)):
        raise ComplexEigenvalueError(f"eigenvalues with imaginary part {imag.max():.3e}")
    xi = vals.real
    if np.any(xi <= 0):
        raise SolveFailure("non-positive Steklov eigenvalue")
    Q = _real_vectors(vecs) if np.iscomplexobj(vecs) else vecs.copy()
    Q = _orthonormalize_clusters(xi, Q, system.S)

    T = system.trace(Q)
    norms = np.sqrt(np.einsum("ij,ij,i->j", T, T, system.areas))
    sign = np.sign(T.T @ system.areas)
    sign[sign == 0] = 1.0
    Q *= sign / norms
    T *= sign / norms
    energy = np.einsum("ij,ij->j", T, A @ Q)
    mass = np.einsum("ij,ij,i->j", T, T, system.areas)
    rq = energy / mass
    if np.any(np.abs(rq - xi) > RAYLEIGH_RTOL * np.abs(xi)):
        raise SolveFailure("Rayleigh quotients disagree with eigenvalues")
    return SpectralResult(xi, Q, rq, float(imag.max(initial=0.0)))


def solve_neumann(system: BemSystem, g) -> HarmonicSolution:
    """Exterior solution with normal derivative g (along nu, into U).

    Solves (Kadj - M/2) q = M g.  The energy is -int g u da.
    """
    g = np.asarray(g, float)
    if not np.any(g):
        z = np.zeros(system.size)
        return HarmonicSolution(z, z.copy(), 0.0)
    q = -sla.lu_solve(system._lu, system.areas * g)
    if not np.all(np.isfinite(q)):
        raise SolveFailure("Neumann solve produced non-finite density")
    t = system.trace(q)
    return HarmonicSolution(q, t, float(-(g * t) @ system.areas))


def solve_dirichlet_with_constant(system: BemSystem, f) -> HarmonicSolution:
    """Charge-neutral exterior solution with boundary value f + c.

    Solves S q - c M 1 = M f with sum q = 0 (so the potential decays like
    |x|^-2); returns the density and the constant c.
    """
    f = np.asarray(f, float)
    a = system.areas
    y_f = system.solve_single_layer(a * f)
    y_1 = system.solve_single_layer(a)
    denom = a @ y_1
    if not denom > 0:
        raise SolveFailure("degenerate constraint in Dirichlet solve")
    c = -(a @ y_f) / denom
    q = y_f + c * y_1
    if not np.all(np.isfinite(q)):
        raise SolveFailure("Dirichlet solve produced non-finite density")
    return HarmonicSolution(q, system.trace(q), system.energy(q), float(c))


def evaluate_exterior(system: BemSystem, q, x):
    """S[q] at exterior points x (shape (3,) -> float, or (m, 3) -> array).

    Points closer to the surface than one local edge length, or inside the
    body, are rejected.
    """
    x = np.asarray(x, float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    mesh = system.mesh
    P = mesh.corners
    rad = np.max(_norm(P - mesh.centroids[:, None]), axis=1)
    h = np.max(_norm(P - np.roll(P, 1, axis=1)), axis=1)
    out = np.empty(len(x))
    for i, xi in enumerate(x):
        gap = _norm(mesh.centroids - xi) - rad
        if np.min(gap - h) <= 0:
            raise TooCloseToSurface(f"point {xi} is within one edge length of the surface")
        if winding_number(mesh, xi) > 0.5:
            raise SideMismatch(f"point {xi} lies inside the body")
        pot, _ = panel_potential(xi, P[:, 0], P[:, 1], P[:, 2])
        out[i] = (pot @ np.asarray(q, float)) / FOUR_PI
    return float(out[0]) if single else out
