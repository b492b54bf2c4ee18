"""Command-line entry point and deterministic JSON/CSV report writer.

Exit codes: 0 success, 1 usage or input error, 2 bound violation beyond
slack, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import inspect
import json
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .audit import AuditConfig, audit, check_elementary_inequality
from .ball import ball_capacity, ball_spectrum, ball_tensors
from .bem import assemble, solve_capacity, solve_steklov
from .errors import ExSteklovError
from .functionals import FunctionalReport, functional_report
from .imcf import FlowTrace, new_capacity_bound_rhs, run_flow
from .mesh import (
    TriangleMesh,
    classify,
    compute_geometry,
    load_mesh,
    make_dumbbell,
    make_egg,
    make_ellipsoid,
    make_icosphere,
    make_octahedron,
    make_torus,
    write_off,
)
from .tensors import compute_tensors, tensor_bounds_check

SCHEMA_VERSION = "1.0"
SIG_DIGITS = 12

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, EXIT_NUMERICAL = 0, 1, 2, 3

GENERATORS = {
    "icosphere": make_icosphere,
    "ellipsoid": make_ellipsoid,
    "egg": make_egg,
    "dumbbell": make_dumbbell,
    "torus": make_torus,
    "octahedron": make_octahedron,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def q(value, units: str) -> dict:
    """A number (or nested list of numbers) with its units."""
    if isinstance(value, np.ndarray):
        value = value.tolist()
    return {"value": value, "units": units}


def _clean(obj):
    """Round floats to SIG_DIGITS significant digits, recursively."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.{SIG_DIGITS}g}")
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def write_report(report: dict, path, trace: Optional[FlowTrace] = None) -> None:
    """Write deterministic JSON to ``path``; a flow trace goes to the
    sibling file with suffix .csv."""
    path = Path(path)
    path.write_text(dumps(report))
    if trace is not None:
        trace.write_csv(path.with_suffix(".csv"))


def _mesh_block(mesh: TriangleMesh, source: str) -> dict:
    return {
        "name": mesh.name,
        "source": source,
        "n_vertices": q(mesh.n_vertices, "count"),
        "n_faces": q(mesh.n_faces, "count"),
        "diameter": q(mesh.diameter, "length"),
    }


def _flags_block(flags) -> dict:
    return {k: (q(v, "count") if isinstance(v, (int, np.integer)) and not isinstance(v, bool) else v)
            for k, v in flags.as_dict().items()}


def _functionals_block(fr: FunctionalReport) -> dict:
    return {k: (q(v, fr.UNITS[k]) if v is not None else None) for k, v in fr.as_dict().items()}


def _tensor_block(t, check=None, error: Optional[str] = None) -> dict:
    out = {
        "W": q(t.W, "length^3"),
        "P": q(t.P, "length^3"),
        "psi_bar": q(t.psi_bar, "1"),
        "W_ave": q(t.W_ave, "length^3"),
        "P_ave": q(t.P_ave, "length^3"),
        "volume": q(t.volume, "length^3"),
        "slack_W": q(t.slack_W, "1"),
        "slack_P": q(t.slack_P, "1"),
        "w_mean_integrals": q(t.w_means, "length^3"),
        "w_mean_defect": q(t.w_mean_defect, "1"),
        "dirichlet_constants": q(t.dirichlet_constants, "length"),
    }
    if check is not None:
        out["matrix_bounds"] = {
            "min_eig_slack_W": q(check.min_eig_W, "1"),
            "min_eig_slack_P": q(check.min_eig_P, "1"),
            "rhs_norm_W": q(check.rhs_norm_W, "1"),
            "rhs_norm_P": q(check.rhs_norm_P, "1"),
            "psi_bar_eigenvalues": q(check.psi_bar_eigs, "1"),
            "tolerance": q(check.tol, "1"),
            "W_matrix_holds": check.W_matrix_holds,
            "P_matrix_holds": check.P_matrix_holds,
            "violations": check.violations,
        }
    if error:
        out["matrix_bounds_error"] = error
    return out


def _check_block(c) -> dict:
    return {
        "id": c.id,
        "family": c.family,
        "sense": c.sense,
        "gates": c.gates,
        "lhs": q(c.lhs, c.units) if c.lhs is not None else None,
        "rhs": q(c.rhs, c.units) if c.rhs is not None else None,
        "margin": q(c.margin, "1") if c.margin is not None else None,
        "slack": q(c.slack, "1"),
        "status": c.status,
        "reason": c.reason,
    }


def _spectral_block(sp) -> dict:
    return {
        "eigenvalues": q(sp.eigenvalues, "1/length"),
        "rayleigh_quotients": q(sp.rayleigh, "1/length"),
        "max_imag": q(sp.max_imag, "1/length"),
    }


# ---------------------------------------------------------------------------
# input
# ---------------------------------------------------------------------------

def parse_generator(spec: str) -> TriangleMesh:
    """``name`` or ``name:key=val,key=val`` for one of :data:`GENERATORS`."""
    name, _, rest = spec.partition(":")
    if name not in GENERATORS:
        raise UsageError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}")
    fn = GENERATORS[name]
    params = inspect.signature(fn).parameters
    kwargs = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq or key not in params:
            raise UsageError(f"bad generator parameter {item!r} for {name}")
        default = params[key].default
        try:
            if isinstance(default, bool):
                kwargs[key] = val.lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                kwargs[key] = int(val)
            else:
                kwargs[key] = float(val)
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {val!r}") from exc
    try:
        return fn(**kwargs)
    except TypeError as exc:
        raise UsageError(str(exc)) from exc


def _load(args) -> tuple[TriangleMesh, str]:
    if (args.mesh is None) == (args.generate is None):
        raise UsageError("give exactly one of a mesh path or --generate")
    if args.generate is not None:
        return parse_generator(args.generate), f"generate:{args.generate}"
    return load_mesh(args.mesh, repair_orientation=args.repair_orientation), str(args.mesh)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _header(command: str) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command, "version": __version__}


def cmd_analyze(args):
    mesh, src = _load(args)
    geometry = compute_geometry(mesh)
    flags = classify(mesh, geometry)
    fr = functional_report(mesh, geometry, flags)
    system = assemble(mesh, geometry)
    sp = solve_steklov(system, k=max(args.count, 2))
    cap, _ = solve_capacity(system)
    tens = compute_tensors(system, mesh, geometry)
    try:
        tcheck, terr = tensor_bounds_check(tens), None
    except ExSteklovError as exc:
        tcheck, terr = None, f"{type(exc).__name__}: {exc}"
    cfg = AuditConfig(slack_bem=args.slack_bem, slack_geometric=args.slack_geometric,
                      rigidity=args.rigidity, w_mean_tol=args.w_mean_tol)
    rep = audit(mesh, geometry, flags, fr, sp, cap, tens, cfg)
    violations = list(rep.violations)
    if tcheck is not None:
        violations += tcheck.violations
    out = _header("analyze")
    out.update({
        "mesh": _mesh_block(mesh, src),
        "flags": _flags_block(flags),
        "functionals": _functionals_block(fr),
        "spectrum": _spectral_block(sp),
        "capacity": q(cap, "length"),
        "tensors": _tensor_block(tens, tcheck, terr),
        "config": {k: q(v, "1") for k, v in cfg.__dict__.items()},
        "checks": [_check_block(c) for c in rep.checks],
        "violations": violations,
    })
    if args.table:
        print(rep.table(), file=sys.stderr)
    return out, None, EXIT_VIOLATION if violations else EXIT_OK


def cmd_steklov(args):
    mesh, src = _load(args)
    system = assemble(mesh)
    sp = solve_steklov(system, k=args.count, method=args.method)
    out = _header("steklov")
    out.update({"mesh": _mesh_block(mesh, src), "spectrum": _spectral_block(sp)})
    return out, None, EXIT_OK


def cmd_capacity(args):
    mesh, src = _load(args)
    geometry = compute_geometry(mesh)
    fr = functional_report(mesh, geometry)
    cap, _ = solve_capacity(assemble(mesh, geometry))
    out = _header("capacity")
    out.update({"mesh": _mesh_block(mesh, src), "capacity": q(cap, "length"),
                "area": q(fr.area, "length^2")})
    try:
        b = new_capacity_bound_rhs(fr.area, fr.willmore)
        out["arsinh_bound"] = q(b.new, "length")
        out["bray_miao_bound"] = q(b.bray_miao, "length")
        out["willmore_excess"] = q(b.s, "1")
    except ExSteklovError as exc:
        out["arsinh_bound_error"] = f"{type(exc).__name__}: {exc}"
    return out, None, EXIT_OK


def cmd_tensors(args):
    mesh, src = _load(args)
    geometry = compute_geometry(mesh)
    tens = compute_tensors(assemble(mesh, geometry), mesh, geometry)
    check = tensor_bounds_check(tens)
    out = _header("tensors")
    out.update({"mesh": _mesh_block(mesh, src), "tensors": _tensor_block(tens, check),
                "violations": check.violations})
    return out, None, EXIT_VIOLATION if check.violations else EXIT_OK


def cmd_imcf(args):
    mesh, src = _load(args)
    trace = run_flow(mesh, args.time, dt0=args.dt, grid_subdivisions=args.grid)
    violations = [k for k in ("m_H", "m_H_tilde") if not trace.monotone(k)]
    out = _header("imcf")
    out.update({
        "mesh": _mesh_block(mesh, src),
        "final_time": q(trace.t[-1], "1"),
        "steps": q(len(trace) - 1, "count"),
        "area_law_defect": q(trace.area_law_defect, "1"),
        "initial": {k: q(getattr(trace, k)[0], trace.UNITS[k]) for k in ("area", "willmore", "m_H", "m_H_tilde")},
        "final": {k: q(getattr(trace, k)[-1], trace.UNITS[k]) for k in ("area", "willmore", "m_H", "m_H_tilde", "roundness")},
        "max_relative_drop": {k: q(trace.max_relative_drop(k), "1") for k in ("m_H", "m_H_tilde")},
        "violations": violations,
    })
    return out, trace, EXIT_VIOLATION if violations else EXIT_OK


def cmd_ball(args):
    n, R = args.dim, args.radius
    try:
        spec = ball_spectrum(n, R, args.count)
        W, P, Pb = ball_tensors(n, R)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = _header("ball")
    out.update({
        "dimension": q(n, "1"),
        "radius": q(R, "length"),
        "eigenvalues": q(spec.values, "1/length"),
        "levels": [{"value": q(v, "1/length"), "multiplicity": q(mu, "count"), "degree": q(m, "1")}
                   for v, mu, m in spec.levels],
        "capacity": q(ball_capacity(n, R), f"length^{n - 2}"),
        "W": q(W, f"length^{n}"),
        "P": q(P, f"length^{n}"),
        "psi_bar": q(Pb, "1"),
    })
    return out, None, EXIT_OK


def cmd_gen(args):
    spec = args.name + (":" + ",".join(args.params) if args.params else "")
    mesh = parse_generator(spec)
    write_off(mesh, args.output)
    out = _header("gen")
    out.update({"mesh": _mesh_block(mesh, f"generate:{spec}"), "output": str(args.output)})
    return out, None, EXIT_OK


def cmd_inequality(args):
    grid = np.logspace(math.log10(args.smin), math.log10(args.smax), args.points)
    pts = check_elementary_inequality(grid)
    out = _header("inequality")
    out["points"] = [{"s": q(p.s, "1"), "lhs": q(p.lhs, "1"), "rhs": q(p.rhs, "1"), "holds": p.holds} for p in pts]
    out["violations"] = [p.s for p in pts if not p.holds]
    return out, None, EXIT_VIOLATION if out["violations"] else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="exsteklov", description="Exterior Steklov eigenvalue, capacity and potential-tensor bounds on closed triangle meshes.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def mesh_cmd(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("mesh", nargs="?", help="OFF or OBJ file")
        s.add_argument("--generate", metavar="NAME[:k=v,...]",
                       help=f"built-in surface instead of a file ({', '.join(sorted(GENERATORS))})")
        s.add_argument("--repair-orientation", action="store_true",
                       help="fix inconsistent face winding instead of failing")
        s.add_argument("-o", "--output", help="write the JSON report here instead of stdout")
        return s

    s = mesh_cmd("analyze", "full pipeline and bound audit")
    s.add_argument("--count", type=int, default=4, help="Steklov eigenvalues to compute")
    s.add_argument("--slack-bem", type=float, default=0.02)
    s.add_argument("--slack-geometric", type=float, default=0.005)
    s.add_argument("--rigidity", type=float, default=0.03)
    s.add_argument("--w-mean-tol", type=float, default=1e-3)
    s.add_argument("--table", action="store_true", help="print a summary table to stderr")
    s.set_defaults(func=cmd_analyze)

    s = mesh_cmd("steklov", "lowest exterior Steklov eigenvalues")
    s.add_argument("--count", type=int, default=4)
    s.add_argument("--method", choices=("auto", "dense", "arpack"), default="auto")
    s.set_defaults(func=cmd_steklov)

    mesh_cmd("capacity", "electrostatic capacity and its curvature bounds").set_defaults(func=cmd_capacity)
    mesh_cmd("tensors", "virtual mass, polarization and mean Hessian").set_defaults(func=cmd_tensors)

    s = mesh_cmd("imcf", "inverse mean curvature flow with Hawking masses")
    s.add_argument("--time", type=float, default=1.0, help="final flow time T")
    s.add_argument("--dt", type=float, default=0.01, help="initial (maximal) time step")
    s.add_argument("--grid", type=int, default=None,
                   help="icosphere level of the parameter grid (default: up to 3, no finer than the mesh)")
    s.set_defaults(func=cmd_imcf)

    s = sub.add_parser("ball", help="closed-form data for the ball")
    s.add_argument("--dim", type=int, default=3)
    s.add_argument("--radius", type=float, default=1.0)
    s.add_argument("--count", type=int, default=4)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_ball)

    s = sub.add_parser("gen", help="write a generated surface as OFF")
    s.add_argument("name", choices=sorted(GENERATORS))
    s.add_argument("params", nargs="*", metavar="key=val")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("inequality", help="sweep the arsinh elementary inequality")
    s.add_argument("--smin", type=float, default=1e-6)
    s.add_argument("--smax", type=float, default=1e6)
    s.add_argument("--points", type=int, default=100)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_inequality)
    return p


def _validate(args):
    for key in ("count", "time", "dt", "grid", "radius", "slack_bem", "slack_geometric", "rigidity",
                "w_mean_tol", "points", "smin", "smax"):
        v = getattr(args, key, None)
        if v is None:
            continue
        if key == "time":
            if v < 0:
                raise UsageError("--time must be >= 0")
        elif not v > 0:
            raise UsageError(f"--{key.replace('_', '-')} must be positive")


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        _validate(args)
        report, trace, code = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExSteklovError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL if exc.kind == "numerical" else EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = getattr(args, "output", None)
    if out and args.command != "gen":
        try:
            write_report(report, out, trace)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    else:
        sys.stdout.write(dumps(report))
    return code


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
