"""Evaluate both sides of every eigenvalue, capacity and tensor inequality
on a mesh, gate each by its hypotheses and classify the margin.

Margins are dimensionless: (rhs - lhs)/|rhs| for upper bounds
(lhs <= rhs) and (lhs - rhs)/|rhs| for lower bounds (lhs >= rhs).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .bem import SpectralResult
from .errors import WillmoreBelowThreshold
from .functionals import FunctionalReport
from .imcf import SIXTEEN_PI, new_capacity_bound_rhs, sqrt_over_arsinh
from .mesh import HypothesisFlags, SurfaceGeometry, TriangleMesh
from .tensors import PotentialTensors

HOLDS = "holds"
VIOLATED = "violated"
SKIPPED = "skipped(gate)"
NEAR_EQUALITY = "near_equality"

# families whose equality case is exactly the round ball
SHARP_FAMILIES = ("eigenvalue_lower", "eigenvalue_upper", "capacity", "tensor")


@dataclass(frozen=True)
class AuditConfig:
    slack_bem: float = 0.02
    slack_geometric: float = 0.005
    rigidity: float = 0.03
    w_mean_tol: float = 1e-3
    identity_tol: float = 1e-6
    willmore_tol: float = 0.02

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"{k} must be positive")


@dataclass
class BoundCheck:
    """One inequality lhs <= rhs ("upper") or lhs >= rhs ("lower")."""

    id: str
    family: str
    sense: str
    gates: List[str]
    units: str
    slack: float
    lhs: Optional[float] = None
    rhs: Optional[float] = None
    margin: Optional[float] = None
    status: str = SKIPPED
    reason: str = ""

    def evaluate(self, lhs: float, rhs: float, rigidity: float) -> "BoundCheck":
        self.lhs, self.rhs = float(lhs), float(rhs)
        diff = rhs - lhs if self.sense == "upper" else lhs - rhs
        self.margin = float(diff / abs(rhs)) if rhs != 0 else float(np.sign(diff) * np.inf)
        if self.margin < -self.slack:
            self.status = VIOLATED
        elif abs(self.margin) < rigidity:
            self.status = NEAR_EQUALITY
        else:
            self.status = HOLDS
        return self

    def skip(self, reason: str) -> "BoundCheck":
        self.status = SKIPPED
        self.reason = reason
        return self


@dataclass
class BoundReport:
    mesh: str
    flags: HypothesisFlags
    functionals: FunctionalReport
    xi: List[float]
    capacity: Optional[float]
    tensors: Optional[PotentialTensors]
    checks: List[BoundCheck] = field(default_factory=list)

    @property
    def violations(self) -> List[str]:
        return [c.id for c in self.checks if c.status == VIOLATED]

    def by_id(self, key: str) -> BoundCheck:
        for c in self.checks:
            if c.id == key:
                return c
        raise KeyError(key)

    def table(self) -> str:
        """Fixed-width terminal summary."""
        rows = [f"{'bound':34s} {'lhs':>13s} {'rhs':>13s} {'margin':>9s}  status"]
        for c in self.checks:
            fmt = (lambda x: f"{x:13.6g}" if x is not None else f"{'-':>13s}")
            m = f"{100 * c.margin:8.3f}%" if c.margin is not None and np.isfinite(c.margin) else f"{'-':>9s}"
            rows.append(f"{c.id:34s} {fmt(c.lhs)} {fmt(c.rhs)} {m}  {c.status}"
                        + (f" ({c.reason})" if c.reason else ""))
        return "\n".join(rows)


def _radial_field_residual(points: np.ndarray, step: float = 1e-4) -> float:
    """max |div P - |P|^2| |x|^2 for P = x/|x|^2, by central differences."""
    pts = points[np.linalg.norm(points, axis=1) > 0]
    if len(pts) == 0:
        return 0.0

    def P(x):
        return x / np.einsum("ij,ij->i", x, x)[:, None]

    r = np.linalg.norm(pts, axis=1)
    div = np.zeros(len(pts))
    for k in range(3):
        h = step * r
        e = np.zeros(3)
        e[k] = 1.0
        div += (P(pts + h[:, None] * e)[:, k] - P(pts - h[:, None] * e)[:, k]) / (2 * h)
    res = (div - np.einsum("ij,ij->i", P(pts), P(pts))) * r * r
    return float(np.max(np.abs(res)))


def audit(mesh: TriangleMesh, geometry: SurfaceGeometry, flags: HypothesisFlags,
          functionals: FunctionalReport, spectral: Optional[SpectralResult],
          cap: Optional[float], tensors: Optional[PotentialTensors],
          config: Optional[AuditConfig] = None) -> BoundReport:
    """Build the complete catalogue of checks (n = 3)."""
    cfg = config or AuditConfig()
    fr = functionals
    A, V = fr.area, fr.volume
    xi = [float(x) for x in spectral.eigenvalues] if spectral is not None else []
    xi1 = xi[0] if xi else None
    xi2 = xi[1] if len(xi) > 1 else None
    checks: List[BoundCheck] = []
    rig = cfg.rigidity

    def add(id_, family, sense, gates, units, slack, lhs, rhs, missing=None):
        c = BoundCheck(id_, family, sense, list(gates), units, slack)
        failed = [g for g in gates if g in _FLAG_GATES and not getattr(flags, _FLAG_GATES[g])]
        if failed:
            c.skip("gate: " + ", ".join(failed))
        elif missing:
            c.skip("missing input: " + missing)
        elif lhs is None or rhs is None:
            c.skip("missing input")
        else:
            c.evaluate(lhs, rhs, rig)
        checks.append(c)
        return c

    sb, sg = cfg.slack_bem, cfg.slack_geometric
    no_xi = None if xi1 is not None else "spectrum"
    no_cap = None if cap is not None else "capacity"

    # first eigenvalue
    add("xi1_lower_support", "eigenvalue_lower", "lower", ["star_shaped"], "1/length", sb,
        xi1, fr.min_support_ratio, no_xi)
    quer = 1.0 / fr.quermass_rhs if fr.quermass_rhs else None
    add("xi1_upper_quermass", "eigenvalue_upper", "upper", ["convex"], "1/length", sb,
        xi1, quer / A if quer else None, no_xi or (None if quer else "quermass"))
    add("xi1_upper_inverse_support", "eigenvalue_upper", "upper", ["star_shaped"], "1/length", sb,
        xi1, fr.inverse_support / A if fr.inverse_support else None, no_xi)
    half_H = 0.5 * fr.total_mean_curvature
    add("xi1_upper_mean_curvature_outer_minimizing", "eigenvalue_upper", "upper",
        ["convex (sufficient for mean convex + outer-minimizing)"], "1/length", sb, xi1, half_H / A, no_xi)
    add("xi1_upper_mean_curvature_star", "eigenvalue_upper", "upper", ["mean_convex", "star_shaped"],
        "1/length", sb, xi1, half_H / A, no_xi)
    s = fr.willmore / SIXTEEN_PI - 1.0
    try:
        new = new_capacity_bound_rhs(A, fr.willmore, cfg.willmore_tol)
        w_reason = None
    except WillmoreBelowThreshold as exc:
        new, w_reason = None, str(exc)
    add("xi1_upper_willmore", "eigenvalue_upper", "upper", ["connected"], "1/length", sb, xi1,
        math.sqrt(4 * math.pi / A) * sqrt_over_arsinh(s) if new else None, no_xi or w_reason)
    abs32 = (fr.abs_mean_curvature_32 / A) ** (2.0 / 3.0)
    add("xi1_upper_abs_mean_curvature", "eigenvalue_upper", "upper", [], "1/length", sb, xi1, abs32, no_xi)
    add("xi1_upper_payne", "payne", "upper", [], "1/length", sb, xi1,
        cap / A if cap is not None else None, no_xi or no_cap)

    # capacity
    add("cap_upper_quermass", "capacity", "upper", ["convex"], "length", sb, cap, quer,
        no_cap or (None if quer else "quermass"))
    add("cap_upper_inverse_support", "capacity", "upper", ["star_shaped"], "length", sb, cap,
        fr.inverse_support, no_cap)
    add("cap_upper_mean_curvature_outer_minimizing", "capacity", "upper",
        ["convex (sufficient for mean convex + outer-minimizing)"], "length", sb, cap, half_H, no_cap)
    add("cap_upper_mean_curvature_star", "capacity", "upper", ["mean_convex", "star_shaped"], "length", sb,
        cap, half_H, no_cap)
    add("cap_upper_bray_miao", "capacity", "upper", ["connected"], "length", sb, cap,
        new.bray_miao if new else math.sqrt(math.pi * A) * (1 + math.sqrt(max(fr.willmore, 0) / SIXTEEN_PI)),
        no_cap)
    add("cap_upper_abs_mean_curvature", "capacity", "upper", [], "length", sb, cap, A * abs32, no_cap)
    add("cap_upper_max_mean_curvature", "capacity", "upper", [], "length", sb, cap,
        0.5 * A * fr.max_mean_curvature, no_cap)
    add("cap_upper_arsinh", "capacity", "upper", ["connected"], "length", sb, cap,
        new.new if new else None, no_cap or w_reason)

    # geometry
    add("alexandrov_fenchel", "geometric", "upper", ["convex"], "length^3", sg,
        1.5 * fr.total_mean_curvature * V, A * A)

    # second eigenvalue
    w_gate = None
    if tensors is None:
        w_gate = "tensors"
    elif not tensors.w_mean_defect < cfg.w_mean_tol:
        w_gate = f"gate: w-mean defect {tensors.w_mean_defect:.2e} >= {cfg.w_mean_tol:g}"
    no_xi2 = None if xi2 is not None else "second eigenvalue"
    c = add("xi2_upper", "second_eigenvalue", "upper", [], "1/length", sb, xi2,
            max(cap / A, 2 * A / (3 * V)) if cap is not None else None, no_xi2 or no_cap)
    if w_gate and c.status != SKIPPED:
        c.lhs = c.rhs = c.margin = None
        c.skip(w_gate)
    for id_, lhs, rhs in (("xi1_upper_volume", xi1, A / (3 * V)), ("xi2_upper_volume", xi2, 2 * A / (3 * V))):
        c = add(id_, "second_eigenvalue", "upper", ["convex"], "1/length", sb, lhs, rhs,
                no_xi if id_.startswith("xi1") else no_xi2)
        if w_gate and c.status != SKIPPED:
            c.lhs = c.rhs = c.margin = None
            c.skip(w_gate)

    # tensors
    add("w_ave_lower", "tensor", "lower", [], "length^3", sb,
        tensors.W_ave if tensors else None, tensors.volume / 2 if tensors else None,
        None if tensors else "tensors")
    add("p_ave_lower", "tensor", "lower", [], "length^3", sb,
        tensors.P_ave if tensors else None, 2 * tensors.volume if tensors else None,
        None if tensors else "tensors")

    add("willmore_lower", "geometric", "lower", [], "1", sg, fr.willmore, SIXTEEN_PI)

    # identity: div P - |P|^2 = 0 for P = x/|x|^2, sampled at the vertices
    res = _radial_field_residual(mesh.vertices)
    c = BoundCheck("radial_field_identity", "identity", "upper", [], "1", cfg.identity_tol,
                   lhs=res, rhs=0.0, margin=None,
                   status=HOLDS if res < cfg.identity_tol else VIOLATED)
    checks.append(c)

    return BoundReport(mesh.name, flags, fr, xi, cap, tensors, checks)


_FLAG_GATES = {
    "star_shaped": "star_shaped",
    "convex": "convex",
    "convex (sufficient for mean convex + outer-minimizing)": "convex",
    "mean_convex": "mean_convex",
    "connected": "connected",
}


@dataclass(frozen=True)
class ElementaryPoint:
    s: float
    lhs: float
    rhs: float
    holds: bool


def check_elementary_inequality(s_grid: Sequence[float]) -> List[ElementaryPoint]:
    """2 sqrt(s)/arsinh(sqrt(s)) < 1 + sqrt(s + 1) at every grid point."""
    out = []
    for s in s_grid:
        s = float(s)
        if not s > 0:
            raise ValueError("grid points must be positive")
        lhs = 2.0 * sqrt_over_arsinh(s)
        rhs = 1.0 + math.sqrt(s + 1.0)
        out.append(ElementaryPoint(s, lhs, rhs, lhs < rhs))
    return out
