"""Inverse mean curvature flow of star-shaped surfaces as radial graphs.

The surface is X = r(theta) theta over a fixed icosphere parameter grid.
Under IMCF the normal speed is 1/H, so the radial speed is
1/(H <nu, theta>).  The flow is stepped in u = log r,

    u <- u + dt / (r H <nu, theta>),

which is exact for round spheres (r H = 2).  Each step is accepted only if
the area grows by e^dt to within a tolerance; otherwise dt is halved.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .errors import (
    CurvatureCollapse,
    RayMissError,
    StarShapeRequired,
    StepRejected,
    WillmoreBelowThreshold,
)
from .mesh import (
    SurfaceGeometry,
    TriangleMesh,
    _unit_icosphere,
    classify,
    compute_geometry,
    willmore_energy,
)

SIXTEEN_PI = 16.0 * math.pi
STEP_AREA_TOL = 1e-4
TOTAL_AREA_TOL = 5e-3
MONOTONE_SLACK = 1e-3
WILLMORE_TOL = 2e-2
MAX_GRID_LEVEL = 3


# ---------------------------------------------------------------------------
# flow state
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FlowState:
    """Radial graph r over the unit directions of ``grid`` at time t."""

    r: np.ndarray
    t: float
    directions: np.ndarray
    faces: np.ndarray
    mesh: TriangleMesh = field(init=False, repr=False)
    geometry: SurfaceGeometry = field(init=False, repr=False)

    def __post_init__(self):
        if np.any(~np.isfinite(self.r)) or np.any(self.r <= 0):
            raise CurvatureCollapse("radial function must stay positive")
        mesh = TriangleMesh(self.r[:, None] * self.directions, self.faces, name="flow")
        object.__setattr__(self, "mesh", mesh)
        object.__setattr__(self, "geometry", compute_geometry(mesh))

    @property
    def H(self) -> np.ndarray:
        return self.geometry.mean_curvature

    @property
    def area(self) -> float:
        return self.mesh.area

    @property
    def willmore(self) -> float:
        return willmore_energy(self.mesh, self.geometry)

    @property
    def roundness(self) -> float:
        """max r / min r."""
        return float(self.r.max() / self.r.min())


def _ray_cast(mesh: TriangleMesh, dirs: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Distance from the origin along each direction to the mesh
    (Moller-Trumbore, farthest hit)."""
    P = mesh.corners
    p0 = P[:, 0]
    e1 = P[:, 1] - p0
    e2 = P[:, 2] - p0
    eps = 1e-12
    out = np.full(len(dirs), np.nan)
    for s in range(0, len(dirs), chunk):
        d = dirs[s:s + chunk]
        pv = np.cross(d[:, None, :], e2[None])
        det = np.einsum("fi,mfi->mf", e1, pv)
        ok = np.abs(det) > 1e-300
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tv = -p0
        u = np.einsum("fi,mfi->mf", tv, pv) * inv
        qv = np.cross(tv, e1)
        v = np.einsum("mi,fi->mf", d, qv) * inv
        t = np.einsum("fi,fi->f", e2, qv)[None] * inv
        hit = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1 + eps) & (t > 0)
        out[s:s + chunk] = np.where(hit, t, -np.inf).max(axis=1)
    out[~np.isfinite(out)] = np.nan
    return out


def default_grid_level(mesh: TriangleMesh) -> int:
    """Finest icosphere level (at most MAX_GRID_LEVEL, at least 1) whose
    vertex count 10 4^l + 2 does not exceed the mesh's."""
    level = 1
    while level < MAX_GRID_LEVEL and 10 * 4 ** (level + 1) + 2 <= mesh.n_vertices:
        level += 1
    return level


def init_flow(mesh: TriangleMesh, grid_subdivisions: Optional[int] = None,
              geometry: Optional[SurfaceGeometry] = None) -> FlowState:
    """Sample the surface as a radial graph by ray casting from the origin.

    The parameter grid is the unit icosphere with ``grid_subdivisions``
    levels (default :func:`default_grid_level`).  A grid no finer than the
    input mesh keeps facet noise out of the fitted curvature.
    """
    if grid_subdivisions is None:
        grid_subdivisions = default_grid_level(mesh)
    geometry = geometry or compute_geometry(mesh)
    flags = classify(mesh, geometry)
    if not flags.star_shaped:
        raise StarShapeRequired("IMCF needs a surface star-shaped about the origin")
    if flags.genus != 0 or not flags.connected:
        raise StarShapeRequired("IMCF needs a connected genus-0 surface")
    dirs, faces = _unit_icosphere(grid_subdivisions)
    r = _ray_cast(mesh, dirs)
    if np.any(np.isnan(r)):
        raise RayMissError(f"{int(np.isnan(r).sum())} rays missed the surface")
    return FlowState(r, 0.0, dirs, faces)


def step(state: FlowState, dt: float, h_min: Optional[float] = None,
         area_tol: float = STEP_AREA_TOL) -> FlowState:
    """One explicit Euler step of IMCF in log r.

    Raises CurvatureCollapse if min H <= h_min (default 1e-3 / diameter)
    and StepRejected if the area changes by more than ``area_tol``
    (relative) from e^dt.
    """
    H = state.H
    if h_min is None:
        h_min = 1e-3 / state.mesh.diameter
    if H.min() <= h_min:
        raise CurvatureCollapse(f"min H = {H.min():.3e} <= {h_min:.3e}")
    cos = np.einsum("ij,ij->i", state.geometry.normals, state.directions)
    if cos.min() <= 0:
        raise StarShapeRequired("flow surface lost star-shapedness")
    speed = 1.0 / (state.r * H * cos)
    new = FlowState(state.r * np.exp(dt * speed), state.t + dt, state.directions, state.faces)
    err = new.area / (state.area * math.exp(dt)) - 1.0
    if abs(err) > area_tol:
        raise StepRejected(f"area law off by {err:.2e} at dt = {dt:.3e}")
    return new


class Masses(NamedTuple):
    m_H: float
    m_H_tilde: float
    s: float


def hawking_masses(area: float, willmore: float) -> Masses:
    """m_H = sqrt(A/16pi)(1 - W/16pi), m~_H = sqrt(A/16pi) m_H, s = W/16pi - 1."""
    root = math.sqrt(area / SIXTEEN_PI)
    m = root * (1.0 - willmore / SIXTEEN_PI)
    return Masses(m, root * m, willmore / SIXTEEN_PI - 1.0)


def masses(state: FlowState) -> Masses:
    return hawking_masses(state.area, state.willmore)


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

@dataclass
class FlowTrace:
    """Time series of the flow functionals; one row per accepted step."""

    t: List[float] = field(default_factory=list)
    area: List[float] = field(default_factory=list)
    willmore: List[float] = field(default_factory=list)
    m_H: List[float] = field(default_factory=list)
    m_H_tilde: List[float] = field(default_factory=list)
    min_H: List[float] = field(default_factory=list)
    dt: List[float] = field(default_factory=list)
    roundness: List[float] = field(default_factory=list)
    final_state: Optional[FlowState] = field(default=None, repr=False)

    COLUMNS = ("t", "area", "willmore", "m_H", "m_H_tilde", "min_H", "dt")
    UNITS = {"t": "1", "area": "length^2", "willmore": "1", "m_H": "length",
             "m_H_tilde": "length^2", "min_H": "1/length", "dt": "1", "roundness": "1"}

    def record(self, state: FlowState, dt: float) -> None:
        mh = masses(state)
        self.t.append(state.t)
        self.area.append(state.area)
        self.willmore.append(state.willmore)
        self.m_H.append(mh.m_H)
        self.m_H_tilde.append(mh.m_H_tilde)
        self.min_H.append(float(state.H.min()))
        self.dt.append(dt)
        self.roundness.append(state.roundness)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def area_law_defect(self) -> float:
        """|A(T) - e^T A(0)| / (e^T A(0))."""
        ref = math.exp(self.t[-1] - self.t[0]) * self.area[0]
        return abs(self.area[-1] - ref) / ref

    def monotone(self, key: str, slack: float = MONOTONE_SLACK) -> bool:
        """Whether a mass column never drops by more than ``slack`` times
        its natural scale (sqrt(A/16pi), squared for m_H_tilde)."""
        vals = np.asarray(getattr(self, key))
        scale = np.sqrt(np.asarray(self.area) / SIXTEEN_PI)
        if key == "m_H_tilde":
            scale = scale ** 2
        drops = vals[:-1] - vals[1:]
        return bool(np.all(drops <= slack * scale[1:]))

    def max_relative_drop(self, key: str) -> float:
        vals = np.asarray(getattr(self, key))
        scale = np.sqrt(np.asarray(self.area) / SIXTEEN_PI)
        if key == "m_H_tilde":
            scale = scale ** 2
        if len(vals) < 2:
            return 0.0
        return float(np.max((vals[:-1] - vals[1:]) / scale[1:]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for row in zip(*(getattr(self, c) for c in self.COLUMNS)):
                w.writerow([f"{x:.12g}" for x in row])


def run_flow(mesh: TriangleMesh, T: float, dt0: float = 0.01, grid_subdivisions: Optional[int] = None,
             state: Optional[FlowState] = None, min_dt: float = 1e-7) -> FlowTrace:
    """Adaptive IMCF on [0, T] starting from the ray-cast radial graph.

    dt is halved on every rejected step and grown back by 1.5x (up to
    ``dt0``) after accepted ones.  Raises StepRejected if dt falls below
    ``min_dt`` or if the cumulative area law is off by more than 0.5%.
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    state = state or init_flow(mesh, grid_subdivisions)
    trace = FlowTrace(final_state=state)
    trace.record(state, 0.0)
    dt = dt0
    while state.t < T - 1e-12:
        h = min(dt, T - state.t)
        try:
            state = step(state, h)
        except StepRejected:
            dt = h / 2
            if dt < min_dt:
                raise
            continue
        trace.record(state, h)
        dt = min(dt0, 1.5 * h)
    if len(trace) > 1 and trace.area_law_defect > TOTAL_AREA_TOL:
        raise StepRejected(f"cumulative area law off by {trace.area_law_defect:.2e}")
    trace.final_state = state
    return trace


# ---------------------------------------------------------------------------
# capacity bound machinery
# ---------------------------------------------------------------------------

def arsinh_profile(s: float, t):
    """f(t) = arsinh(sqrt(s) e^{-t/2}) / arsinh(sqrt(s)); e^{-t/2} at s = 0."""
    if s < 0:
        raise ValueError("s must be >= 0")
    t = np.asarray(t, float)
    if s == 0:
        out = np.exp(-t / 2)
    else:
        r = math.sqrt(s)
        out = np.arcsinh(r * np.exp(-t / 2)) / math.asinh(r)
    return float(out) if out.ndim == 0 else out


def sqrt_over_arsinh(s: float) -> float:
    """sqrt(s) / arsinh(sqrt(s)), continued analytically to s < 0 as
    sqrt(|s|) / arcsin(sqrt(|s|)); series 1 + s/6 near 0."""
    if abs(s) < 1e-8:
        return 1.0 + s / 6.0
    if s > 0:
        r = math.sqrt(s)
        return r / math.asinh(r)
    if s < -1:
        raise ValueError("s must be >= -1")
    r = math.sqrt(-s)
    return r / math.asin(r)


class CapacityBounds(NamedTuple):
    new: float
    bray_miao: float
    s: float


def new_capacity_bound_rhs(area: float, willmore: float, tol: float = WILLMORE_TOL) -> CapacityBounds:
    """Capacity upper bounds from area and Willmore energy.

    new = 2 sqrt(pi A) sqrt(s) / arsinh(sqrt(s)), s = W/16pi - 1;
    bray_miao = sqrt(pi A) (1 + sqrt(W/16pi)).

    A discrete Willmore energy slightly below 16 pi (s >= -tol) is accepted
    and handled by analytic continuation; below that
    WillmoreBelowThreshold is raised.
    """
    if not area > 0:
        raise ValueError("area must be positive")
    s = willmore / SIXTEEN_PI - 1.0
    if s < -tol:
        raise WillmoreBelowThreshold(f"Willmore energy {willmore:.6g} is below 16 pi (s = {s:.3e})")
    root = math.sqrt(math.pi * area)
    bm = root * (1.0 + math.sqrt(max(willmore, 0.0) / SIXTEEN_PI))
    return CapacityBounds(2.0 * root * sqrt_over_arsinh(s), bm, s)
