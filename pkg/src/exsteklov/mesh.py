"""Closed oriented triangle meshes, their differential geometry and the
hypothesis flags (convex, star-shaped, mean convex, connected) that gate
the eigenvalue and capacity bounds.

Orientation convention: faces are counterclockwise when seen from the
unbounded exterior, so face normals point out of the enclosed body and
into the exterior domain.  With that choice a round sphere of radius R has
both principal curvatures equal to +1/R.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from .errors import (
    DegenerateFaceError,
    NonManifoldError,
    OrientationError,
    ParseError,
)

# relative tolerances, applied after normalising the diameter to one
DEGENERATE_AREA_TOL = 1e-12
SUPPORT_TOL = 1e-9
CURVATURE_TOL = 1e-9
HULL_TOL = 1e-6


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Closed, consistently oriented triangle mesh in R^3.

    Parameters
    ----------
    vertices : (N, 3) array
    faces : (F, 3) int array, counterclockwise seen from outside.
    name : optional label used in reports.

    Instances are treated as immutable; derived tables are cached.
    Use :func:`validate_mesh` (called by all loaders and generators) to
    enforce the closedness/orientation invariants.
    """

    vertices: np.ndarray
    faces: np.ndarray
    name: str = field(default="mesh")

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ParseError(f"vertices must be (N, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ParseError(f"faces must be (F, 3), got {f.shape}")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    # -- sizes ---------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    # -- face quantities -----------------------------------------------------
    @cached_property
    def corners(self) -> np.ndarray:
        """(F, 3, 3) corner coordinates."""
        return self.vertices[self.faces]

    @cached_property
    def area_vectors(self) -> np.ndarray:
        """Half cross products; norm is the face area, direction the normal."""
        p = self.corners
        return 0.5 * np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def face_areas(self) -> np.ndarray:
        return np.linalg.norm(self.area_vectors, axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        a = self.face_areas
        return self.area_vectors / np.where(a > 0, a, 1.0)[:, None]

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @property
    def area(self) -> float:
        return float(self.face_areas.sum())

    # -- connectivity ----------------------------------------------------------
    @cached_property
    def edges(self) -> np.ndarray:
        """(E, 2) sorted unique undirected edges."""
        return np.unique(np.sort(self._half_edges, axis=1), axis=0)

    @cached_property
    def _half_edges(self) -> np.ndarray:
        f = self.faces
        return np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])

    @cached_property
    def edge_faces(self) -> np.ndarray:
        """(E, 2) the two faces adjacent to each edge of :attr:`edges`."""
        he = np.sort(self._half_edges, axis=1)
        fid = np.tile(np.arange(self.n_faces), 3)
        key = he[:, 0] * self.n_vertices + he[:, 1]
        order = np.argsort(key, kind="stable")
        return fid[order].reshape(-1, 2)

    @cached_property
    def vertex_adjacency(self) -> sp.csr_matrix:
        e = self.edges
        n = self.n_vertices
        data = np.ones(2 * len(e))
        A = sp.coo_matrix((data, (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n))
        return A.tocsr()

    @cached_property
    def face_vertex_incidence(self) -> sp.csr_matrix:
        F = self.n_faces
        rows = np.repeat(np.arange(F), 3)
        return sp.csr_matrix((np.ones(3 * F), (rows, self.faces.ravel())), shape=(F, self.n_vertices))

    @property
    def euler_characteristic(self) -> int:
        return int(self.n_vertices - len(self.edges) + self.n_faces)

    @cached_property
    def n_components(self) -> int:
        ef = self.edge_faces
        F = self.n_faces
        G = sp.coo_matrix((np.ones(len(ef)), (ef[:, 0], ef[:, 1])), shape=(F, F))
        return int(connected_components(G, directed=False)[0])

    @cached_property
    def diameter(self) -> float:
        v = self.vertices
        try:
            v = v[ConvexHull(v).vertices]
        except (QhullError, ValueError):
            pass
        return float(pdist(v).max()) if len(v) > 1 else 0.0

    @cached_property
    def mean_edge_length(self) -> float:
        e = self.edges
        return float(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1).mean())

    # -- rigid motions -------------------------------------------------------
    def scaled(self, t: float) -> "TriangleMesh":
        return TriangleMesh(self.vertices * t, self.faces, self.name)

    def translated(self, z) -> "TriangleMesh":
        return TriangleMesh(self.vertices + np.asarray(z, float), self.faces, self.name)

    def rotated(self, R) -> "TriangleMesh":
        return TriangleMesh(self.vertices @ np.asarray(R, float).T, self.faces, self.name)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _orientation_consistent(faces: np.ndarray, n_vertices: int) -> bool:
    he = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    key = he[:, 0] * n_vertices + he[:, 1]
    return len(np.unique(key)) == len(key)


def _reorient(faces: np.ndarray, n_vertices: int) -> np.ndarray:
    """Propagate a consistent winding through each connected component."""
    faces = faces.copy()
    F = len(faces)
    edge_map: dict[tuple[int, int], list[int]] = {}
    for fi, (a, b, c) in enumerate(faces):
        for u, v in ((a, b), (b, c), (c, a)):
            edge_map.setdefault((min(u, v), max(u, v)), []).append(fi)
    seen = np.zeros(F, bool)
    for seed in range(F):
        if seen[seed]:
            continue
        seen[seed] = True
        queue = deque([seed])
        while queue:
            fi = queue.popleft()
            a, b, c = faces[fi]
            for u, v in ((a, b), (b, c), (c, a)):
                for gj in edge_map[(min(u, v), max(u, v))]:
                    if gj == fi or seen[gj]:
                        continue
                    g = list(faces[gj])
                    # a consistent neighbour traverses the shared edge as v -> u
                    same_dir = any(g[k] == u and g[(k + 1) % 3] == v for k in range(3))
                    if same_dir:
                        faces[gj] = faces[gj][::-1]
                    seen[gj] = True
                    queue.append(gj)
    return faces


def _component_labels(faces: np.ndarray) -> np.ndarray:
    F = len(faces)
    he = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    he = np.sort(he, axis=1)
    fid = np.tile(np.arange(F), 3)
    order = np.lexsort((he[:, 1], he[:, 0]))
    he, fid = he[order], fid[order]
    same = np.all(he[1:] == he[:-1], axis=1)
    i = fid[:-1][same]
    j = fid[1:][same]
    G = sp.coo_matrix((np.ones(len(i)), (i, j)), shape=(F, F))
    return connected_components(G, directed=False)[1]


def _signed_volumes(vertices, faces, labels) -> np.ndarray:
    p = vertices[faces]
    vol = np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])) / 6.0
    return np.bincount(labels, weights=vol)


def validate_mesh(vertices, faces, name: str = "mesh", repair_orientation: bool = False) -> TriangleMesh:
    """Check closedness, orientation and non-degeneracy; return a mesh.

    Parameters
    ----------
    vertices, faces : array_like
    repair_orientation : bool
        If True, inconsistently wound faces are flipped to agree with their
        neighbours.  If False such input raises :class:`OrientationError`.
        Components that are consistently wound but enclose negative volume
        are always flipped globally.
    """
    vertices = np.asarray(vertices, float)
    faces = np.asarray(faces, np.int64)
    if len(faces) == 0 or len(vertices) < 4:
        raise ParseError("mesh needs at least 4 vertices and 1 face")
    if faces.min() < 0 or faces.max() >= len(vertices):
        raise ParseError("face index out of range")
    if not np.all(np.isfinite(vertices)):
        raise ParseError("non-finite vertex coordinate")
    f = faces
    if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])):
        raise DegenerateFaceError("face with a repeated vertex index")

    und = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    _, counts = np.unique(und, axis=0, return_counts=True)
    if np.any(counts != 2):
        bad = int(np.sum(counts != 2))
        raise NonManifoldError(f"{bad} edge(s) not shared by exactly two faces")

    if not _orientation_consistent(faces, len(vertices)):
        if not repair_orientation:
            raise OrientationError("inconsistent face winding")
        faces = _reorient(faces, len(vertices))
        if not _orientation_consistent(faces, len(vertices)):
            raise OrientationError("surface is not orientable")

    labels = _component_labels(faces)
    vols = _signed_volumes(vertices, faces, labels)
    flip = vols < 0
    if np.any(flip):
        faces = faces.copy()
        sel = flip[labels]
        faces[sel] = faces[sel][:, ::-1]
        vols = _signed_volumes(vertices, faces, labels)
    if np.any(vols <= 0):
        raise OrientationError("enclosed volume is not positive")

    mesh = TriangleMesh(vertices, faces, name)
    ext = np.ptp(vertices, axis=0)
    bbox2 = float(ext @ ext)
    if np.any(mesh.face_areas < DEGENERATE_AREA_TOL * bbox2):
        raise DegenerateFaceError("zero-area triangle")
    return mesh


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def _fan(poly):
    return [(poly[0], poly[k], poly[k + 1]) for k in range(1, len(poly) - 1)]


def _read_off(text: str):
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.append(line.split())
    if not tokens or not tokens[0][0].endswith("OFF"):
        raise ParseError("missing OFF header")
    head = tokens[0][1:]
    rest = tokens[1:]
    if not head:
        if not rest:
            raise ParseError("missing OFF counts")
        head, rest = rest[0], rest[1:]
    try:
        nv, nf = int(head[0]), int(head[1])
        verts = [[float(x) for x in row[:3]] for row in rest[:nv]]
        faces = []
        for row in rest[nv:nv + nf]:
            k = int(row[0])
            idx = [int(x) for x in row[1:1 + k]]
            if k < 3 or len(idx) != k:
                raise ParseError("bad face record")
            faces.extend(_fan(idx))
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed OFF: {exc}") from exc
    if len(verts) != nv or len(rest) < nv + nf:
        raise ParseError("truncated OFF")
    return np.array(verts, float), np.array(faces, np.int64)


def _read_obj(text: str):
    verts, faces = [], []
    try:
        for line in text.splitlines():
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                if len(idx) < 3:
                    raise ParseError("face with fewer than 3 vertices")
                faces.extend(_fan(idx))
    except ValueError as exc:
        raise ParseError(f"malformed OBJ: {exc}") from exc
    if not verts or not faces:
        raise ParseError("OBJ without vertices or faces")
    return np.array(verts, float), np.array(faces, np.int64)


def load_mesh(path, format: str | None = None, repair_orientation: bool = False) -> TriangleMesh:
    """Read an ASCII OFF or OBJ file into a validated mesh.

    Polygonal faces are fan-triangulated; normals and texture coordinates
    are ignored.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(str(exc)) from exc
    if fmt == "off":
        v, f = _read_off(text)
    elif fmt == "obj":
        v, f = _read_obj(text)
    else:
        raise ParseError(f"unknown mesh format {fmt!r}")
    return validate_mesh(v, f, name=path.stem, repair_orientation=repair_orientation)


def write_off(mesh: TriangleMesh, path) -> None:
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} 0"]
    lines += ["%.17g %.17g %.17g" % tuple(p) for p in mesh.vertices]
    lines += ["3 %d %d %d" % tuple(f) for f in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

_ICO_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]


def _unit_icosphere(subdivisions: int):
    t = (1.0 + 5 ** 0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
         (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
         (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = list(_ICO_FACES)
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(verts), np.array(faces, np.int64)


def make_icosphere(radius: float = 1.0, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Subdivided icosahedron with all vertices on the sphere."""
    if radius <= 0 or subdivisions < 0:
        raise ValueError("radius must be positive and subdivisions >= 0")
    v, f = _unit_icosphere(int(subdivisions))
    return validate_mesh(radius * v + np.asarray(center, float), f, name=f"icosphere_r{radius:g}_s{subdivisions}")


def make_ellipsoid(a: float, b: float, c: float, subdivisions: int = 3) -> TriangleMesh:
    """Axis-aligned ellipsoid obtained by stretching a unit icosphere."""
    if min(a, b, c) <= 0 or subdivisions < 0:
        raise ValueError("semi-axes must be positive and subdivisions >= 0")
    v, f = _unit_icosphere(int(subdivisions))
    return validate_mesh(v * np.array([a, b, c], float), f, name=f"ellipsoid_{a:g}_{b:g}_{c:g}_s{subdivisions}")


def make_radial_graph(radius_fn, subdivisions: int = 3, name: str = "radial") -> TriangleMesh:
    """Star-shaped surface x = r(w) w over the unit icosphere grid."""
    w, f = _unit_icosphere(int(subdivisions))
    r = np.asarray(radius_fn(w), float)
    return validate_mesh(w * r[:, None], f, name=name)


def make_egg(subdivisions: int = 3, tilt: float = 0.2, twist: float = 0.1) -> TriangleMesh:
    """Asymmetric star-shaped test body r = 1 + tilt*z + twist*x*y."""
    return make_radial_graph(lambda w: 1.0 + tilt * w[:, 2] + twist * w[:, 0] * w[:, 1],
                             subdivisions, name="egg")


def _revolve(rho, z, n_theta: int, name: str) -> TriangleMesh:
    """Surface of revolution about the z axis from a profile whose first and
    last samples sit on the axis (rho = 0)."""
    rho = np.asarray(rho, float)[1:-1]
    zz = np.asarray(z, float)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    rings = np.stack([rho[:, None] * np.cos(th), rho[:, None] * np.sin(th),
                      np.broadcast_to(zz[1:-1, None], (len(rho), n_theta))], axis=-1)
    verts = np.concatenate([[[0, 0, zz[0]]], rings.reshape(-1, 3), [[0, 0, zz[-1]]]])
    nr = len(rho)
    idx = 1 + np.arange(nr * n_theta).reshape(nr, n_theta)
    nxt = np.roll(idx, -1, axis=1)
    faces = [np.stack([np.zeros(n_theta, int), nxt[0], idx[0]], 1)]
    for k in range(nr - 1):
        a, b = idx[k], nxt[k]
        c, d = idx[k + 1], nxt[k + 1]
        faces.append(np.stack([a, b, d], 1))
        faces.append(np.stack([a, d, c], 1))
    top = len(verts) - 1
    faces.append(np.stack([np.full(n_theta, top), idx[-1], nxt[-1]], 1))
    return validate_mesh(verts, np.concatenate(faces), name=name, repair_orientation=True)


def make_dumbbell(n_profile: int = 81, n_theta: int = 24, neck: float = 0.25,
                  fillet: float = 0.25, separation: float = 1.6) -> TriangleMesh:
    """Two unit spheres centred at z = +-separation joined by a cylindrical
    neck of radius ``neck``, with circular fillets of radius ``fillet``.

    The profile is tangent-continuous.  The concave fillets carry negative
    mean curvature and negative support <x, nu>, so the surface is neither
    mean convex nor star-shaped about the origin.
    """
    n, f, c = float(neck), float(fillet), float(separation)
    h = np.sqrt((1 + f) ** 2 - (n + f) ** 2)
    z_join = c - h
    if z_join <= 0:
        raise ValueError("spheres too close for the requested neck and fillet")
    phi_end = np.arctan2(h, -(n + f))
    t_rho = (n + f) / (1 + f)
    t_z = c - h / (1 + f)
    psi_t = np.arctan2(t_z - c, t_rho)
    lens = np.array([z_join, f * (np.pi - phi_end), np.pi / 2 - psi_t])
    edges_s = np.r_[0.0, np.cumsum(lens)]

    def upper(sa):
        rho = np.empty_like(sa)
        z = np.empty_like(sa)
        m0 = sa <= edges_s[1]
        m1 = (sa > edges_s[1]) & (sa <= edges_s[2])
        m2 = sa > edges_s[2]
        rho[m0], z[m0] = n, sa[m0]
        phi = np.pi - (sa[m1] - edges_s[1]) / f
        rho[m1], z[m1] = n + f + f * np.cos(phi), z_join + f * np.sin(phi)
        psi = psi_t + (sa[m2] - edges_s[2])
        rho[m2], z[m2] = np.cos(psi), c + np.sin(psi)
        return rho, z

    total = edges_s[-1]
    sa = np.linspace(-total, total, n_profile)
    rho, z = upper(np.abs(sa))
    z = np.sign(sa) * z
    rho[0] = rho[-1] = 0.0
    return _revolve(rho, z, n_theta, name="dumbbell")


def make_torus(major: float = 1.0, minor: float = 0.4, n_major: int = 48, n_minor: int = 24) -> TriangleMesh:
    """Ring torus centred at the origin, symmetric about the z axis."""
    u = 2 * np.pi * np.arange(n_major) / n_major
    v = 2 * np.pi * np.arange(n_minor) / n_minor
    U, Vv = np.meshgrid(u, v, indexing="ij")
    x = (major + minor * np.cos(Vv)) * np.cos(U)
    y = (major + minor * np.cos(Vv)) * np.sin(U)
    z = minor * np.sin(Vv)
    verts = np.stack([x, y, z], -1).reshape(-1, 3)
    idx = np.arange(n_major * n_minor).reshape(n_major, n_minor)
    a = idx
    b = np.roll(idx, -1, axis=0)
    c = np.roll(idx, -1, axis=1)
    d = np.roll(b, -1, axis=1)
    faces = np.concatenate([np.stack([a, b, d], -1).reshape(-1, 3), np.stack([a, d, c], -1).reshape(-1, 3)])
    return validate_mesh(verts, faces, name="torus", repair_orientation=True)


def make_octahedron() -> TriangleMesh:
    v = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
    f = np.array([[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
                  [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]])
    return validate_mesh(v, f, name="octahedron")


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SurfaceGeometry:
    """Per-vertex differential geometry of a mesh.

    Attributes
    ----------
    normals : (N, 3) unit normals pointing into the exterior.
    area_weights : (N,) mixed Voronoi areas, summing to the surface area.
    k1, k2 : principal curvatures with k1 >= k2.
    """

    normals: np.ndarray
    area_weights: np.ndarray
    k1: np.ndarray
    k2: np.ndarray

    @property
    def mean_curvature(self) -> np.ndarray:
        """sigma_1 = H = k1 + k2 (2/R on a sphere of radius R)."""
        return self.k1 + self.k2

    @property
    def gauss_curvature(self) -> np.ndarray:
        return self.k1 * self.k2

    sigma1 = mean_curvature
    sigma2 = gauss_curvature

    @property
    def total_area(self) -> float:
        return float(self.area_weights.sum())

    def integrate(self, values) -> float:
        """Vertex-lumped surface integral."""
        return float(np.asarray(values, float) @ self.area_weights)


def _mixed_areas(mesh: TriangleMesh) -> np.ndarray:
    p = mesh.corners
    A = mesh.face_areas
    out = np.zeros((mesh.n_faces, 3))
    cots = np.zeros((mesh.n_faces, 3))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        u = p[:, j] - p[:, i]
        w = p[:, k] - p[:, i]
        cots[:, i] = np.einsum("ij,ij->i", u, w) / np.maximum(2 * A, 1e-300)
    obtuse = cots < 0
    any_obtuse = obtuse.any(axis=1)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        lij = np.sum((p[:, j] - p[:, i]) ** 2, axis=1)
        lik = np.sum((p[:, k] - p[:, i]) ** 2, axis=1)
        vor = (lij * cots[:, k] + lik * cots[:, j]) / 8.0
        out[:, i] = np.where(any_obtuse, np.where(obtuse[:, i], A / 2, A / 4), vor)
    w = np.zeros(mesh.n_vertices)
    np.add.at(w, mesh.faces.ravel(), out.ravel())
    return w


def _two_ring(mesh: TriangleMesh):
    A = mesh.vertex_adjacency
    A2 = (A + A @ A).tocsr()
    A2.setdiag(0)
    A2.eliminate_zeros()
    A2.sort_indices()
    counts = np.diff(A2.indptr)
    K = int(counts.max())
    nbr = np.zeros((mesh.n_vertices, K), np.int64)
    mask = np.arange(K)[None, :] < counts[:, None]
    nbr[mask] = A2.indices
    return nbr, mask


def _tangent_frame(n):
    a = np.where(np.abs(n[:, :1]) < 0.9, [[1.0, 0, 0]], [[0, 1.0, 0]])
    t1 = _unit(np.cross(n, a))
    t2 = np.cross(n, t1)
    return t1, t2


def _batched_lstsq(A, b, rcond=1e-10):
    """Minimum-norm least squares per batch via the eigendecomposition of the
    normal matrix; singular values below rcond * max are dropped, as in pinv."""
    At = A.transpose(0, 2, 1)
    w, V = np.linalg.eigh(At @ A)
    keep = w > rcond * rcond * w[:, -1:]
    inv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    return (V @ (inv[..., None] * (V.transpose(0, 2, 1) @ (At @ b[..., None]))))[..., 0]


def _quadric_fit(verts, normals, nbr, mask):
    """Fit z = d x + e y + a x^2 + b x y + c y^2 + (cubic) + k z^2 locally.

    The cubic monomials keep the second derivatives at the vertex free of
    third-order aliasing; the z^2 term makes the fit exact on spheres.
    Returns refined unit normals and principal curvatures (k1 >= k2).
    """
    t1, t2 = _tangent_frame(normals)
    d = verts[nbr] - verts[:, None, :]
    x = np.einsum("nkd,nd->nk", d, t1)
    y = np.einsum("nkd,nd->nk", d, t2)
    z = np.einsum("nkd,nd->nk", d, normals)
    m = mask.astype(float)
    M = np.stack([x, y, x * x, x * y, y * y,
                  x ** 3, x * x * y, x * y * y, y ** 3, z * z], axis=-1) * m[..., None]
    scale = np.linalg.norm(M, axis=1)
    scale[scale == 0] = 1.0
    coef = _batched_lstsq(M / scale[:, None, :], z * m) / scale
    cd, ce, ca, cb, cc = coef[:, :5].T
    ck = coef[:, -1]

    g = np.stack([cd, ce, -np.ones_like(cd)], -1)
    gn = np.linalg.norm(g, axis=1)
    N = -g / gn[:, None]
    zeros = np.zeros_like(ca)
    H = np.stack([np.stack([2 * ca, cb, zeros], -1),
                  np.stack([cb, 2 * cc, zeros], -1),
                  np.stack([zeros, zeros, 2 * ck], -1)], -2)
    # tangent basis of the fitted normal in local coordinates
    u1 = _unit(np.array([1.0, 0, 0]) - N[:, :1] * N)
    u2 = np.cross(N, u1)
    U = np.stack([u1, u2], axis=-1)  # (n, 3, 2)
    S = -np.einsum("nia,nij,njb->nab", U, H, U) / gn[:, None, None]
    tr = S[:, 0, 0] + S[:, 1, 1]
    det = S[:, 0, 0] * S[:, 1, 1] - S[:, 0, 1] * S[:, 1, 0]
    disc = np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
    k1 = 0.5 * tr + disc
    k2 = 0.5 * tr - disc
    glob = N[:, :1] * t1 + N[:, 1:2] * t2 + N[:, 2:] * normals
    return _unit(glob), k1, k2


def compute_geometry(mesh: TriangleMesh, refine: int = 2) -> SurfaceGeometry:
    """Normals, mixed areas and principal curvatures at every vertex.

    Curvatures come from a local quadric fitted over the two-ring of each
    vertex; the fit is repeated ``refine`` times in the frame of the
    previously fitted normal.
    """
    ext = np.ptp(mesh.vertices, axis=0)
    if np.any(mesh.face_areas < DEGENERATE_AREA_TOL * float(ext @ ext)):
        raise DegenerateFaceError("zero-area triangle")
    vn = np.zeros((mesh.n_vertices, 3))
    for i in range(3):
        np.add.at(vn, mesh.faces[:, i], mesh.area_vectors)
    normals = _unit(vn)
    nbr, mask = _two_ring(mesh)
    for _ in range(1 + refine):
        normals, k1, k2 = _quadric_fit(mesh.vertices, normals, nbr, mask)
    return SurfaceGeometry(normals, _mixed_areas(mesh), k1, k2)


def support_function(mesh: TriangleMesh, geometry: SurfaceGeometry) -> np.ndarray:
    """<x, nu> at each vertex."""
    return np.einsum("ij,ij->i", mesh.vertices, geometry.normals)


def radial_norm(mesh: TriangleMesh) -> np.ndarray:
    return np.linalg.norm(mesh.vertices, axis=1)


def enclosed_volume(mesh: TriangleMesh) -> float:
    """Divergence-theorem volume (1/3) sum <centroid, area vector>."""
    return float(np.einsum("ij,ij->", mesh.centroids, mesh.area_vectors) / 3.0)


def solid_angles(mesh: TriangleMesh, x) -> np.ndarray:
    """Signed solid angle subtended by each face at the point x."""
    r = mesh.corners - np.asarray(x, float)
    d = np.linalg.norm(r, axis=2)
    r1, r2, r3 = r[:, 0], r[:, 1], r[:, 2]
    num = np.einsum("ij,ij->i", r1, np.cross(r2, r3))
    den = (d[:, 0] * d[:, 1] * d[:, 2] + np.einsum("ij,ij->i", r1, r2) * d[:, 2]
           + np.einsum("ij,ij->i", r2, r3) * d[:, 0] + np.einsum("ij,ij->i", r3, r1) * d[:, 1])
    return 2.0 * np.arctan2(num, den)


def winding_number(mesh: TriangleMesh, x) -> float:
    """1 inside the body, 0 outside (per component, summed)."""
    return float(solid_angles(mesh, x).sum() / (4 * np.pi))


def angle_defects(mesh: TriangleMesh) -> np.ndarray:
    """2 pi minus the sum of incident corner angles, per vertex."""
    p = mesh.corners
    ang = np.zeros((mesh.n_faces, 3))
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        w = p[:, (i + 2) % 3] - p[:, i]
        ang[:, i] = np.arctan2(np.linalg.norm(np.cross(u, w), axis=1), np.einsum("ij,ij->i", u, w))
    out = np.full(mesh.n_vertices, 2 * np.pi)
    np.subtract.at(out, mesh.faces.ravel(), ang.ravel())
    return out


def willmore_energy(mesh: TriangleMesh, geometry: SurfaceGeometry) -> float:
    """Integral of H^2, split as int (k1 - k2)^2 + 4 int K.

    The Gauss curvature part is taken from the angle defects, which sum to
    2 pi chi exactly, so umbilic surfaces (round spheres) get exactly
    16 pi regardless of the polyhedral area deficit.
    """
    return geometry.integrate((geometry.k1 - geometry.k2) ** 2) + 4.0 * float(angle_defects(mesh).sum())


# ---------------------------------------------------------------------------
# hypotheses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisFlags:
    connected: bool
    convex: bool
    star_shaped: bool
    mean_convex: bool
    euler_characteristic: int
    genus: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _hull_convex(mesh: TriangleMesh, tol: float) -> bool:
    """All vertices on the hull boundary and every edge locally convex."""
    v = mesh.vertices
    try:
        hull = ConvexHull(v)
    except (QhullError, ValueError):
        return False
    eq = hull.equations
    depth = -(v @ eq[:, :3].T + eq[:, 3]).max(axis=1)
    if np.any(depth > tol):
        return False
    ef = mesh.edge_faces
    e = mesh.edges
    n0 = mesh.face_normals[ef[:, 0]]
    opp = mesh.faces[ef[:, 1]]
    # vertex of the second face not on the shared edge
    not_on_edge = (opp != e[:, :1]) & (opp != e[:, 1:])
    w = opp[not_on_edge]
    height = np.einsum("ij,ij->i", n0, v[w] - v[e[:, 0]])
    return bool(np.all(height <= tol))


def classify(mesh: TriangleMesh, geometry: SurfaceGeometry) -> HypothesisFlags:
    """Evaluate the hypothesis flags that gate the bounds.

    Tolerances are relative to the mesh diameter so that the flags do not
    change under uniform scaling.
    """
    diam = mesh.diameter
    chi = mesh.euler_characteristic
    ncomp = mesh.n_components
    genus = (2 * ncomp - chi) // 2
    support = support_function(mesh, geometry)
    face_support = np.einsum("ij,ij->i", mesh.centroids, mesh.face_normals)
    star = bool(min(support.min(), face_support.min()) > SUPPORT_TOL * diam)
    mean_convex = bool(geometry.mean_curvature.min() * diam > CURVATURE_TOL)
    convex = bool(ncomp == 1 and geometry.k2.min() * diam >= -CURVATURE_TOL
                  and _hull_convex(mesh, HULL_TOL * diam))
    return HypothesisFlags(
        connected=ncomp == 1,
        convex=convex,
        star_shaped=star,
        mean_convex=mean_convex,
        euler_characteristic=chi,
        genus=int(genus),
    )
