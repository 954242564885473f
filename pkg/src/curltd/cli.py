"""Command-line entry point.

Subcommands cover the whole workflow: mesh generation, the offline
table precompute, single state/derivative evaluations, the one-shot
optimization loop, the verification studies, and VTK export.

Exit codes: 0 success, 1 runtime or study failure, 2 usage or
configuration error.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import cell, fem, generators, optimizer, table as tb, validate, vtkio
from .config import load_config
from .errors import (ConfigError, CurlTDError, GeometryError,
                     MeshFormatError, MissingTableError, PartialTableError,
                     TagError)
from .material import NU0_DEFAULT, MaterialPair, SaturationLaw
from .mesh import read_mesh, write_mesh

_USAGE_ERRORS = (ConfigError, GeometryError, MeshFormatError, TagError)


def _jobs(args):
    if args.jobs is not None:
        return args.jobs
    return int(os.environ.get("CURLTD_JOBS", "1"))


def _add_jobs(parser):
    parser.add_argument("--jobs", type=int, default=None,
                        help="worker threads for assembly "
                             "(default: CURLTD_JOBS or 1)")


def cmd_gen_mesh(args):
    kw = {"kind": args.kind}
    if args.cells is not None:
        kw["h"] = args.extents[0] / args.cells
    elif args.h is not None:
        kw["h"] = args.h
    if args.eps is not None:
        kw["r_out"] = 1.0 / args.eps
    elif args.r_out is not None:
        kw["r_out"] = args.r_out
    if args.kind in ("box", "toy-motor"):
        kw["extents"] = tuple(args.extents)
    if args.grading is not None:
        kw["grading"] = args.grading
    mesh = generators.generate(generators.GeometrySpec(**kw))
    write_mesh(mesh, args.out)
    print(f"wrote {args.out}: {mesh.n_vertices} vertices, "
          f"{mesh.n_tets} tets, {mesh.n_edges} edges")
    return 0


def _material_from_args(args):
    if args.mode == "linear":
        if args.nu1 is None:
            raise ConfigError("linear mode requires --nu1")
        return MaterialPair(mode="linear", nu1=args.nu1,
                            nu2=args.nu0 if args.nu2 is None else args.nu2)
    law = SaturationLaw(nu0=args.nu0, q1=args.q1, q2=args.q2, q3=args.q3)
    return MaterialPair(mode="saturation", law=law, nu2=args.nu2)


def cmd_precompute(args):
    pair = _material_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mesh = cell.default_cell_mesh(epsilon=args.eps, h=args.h)
    jobs = _jobs(args)
    for direction in cell.DIRECTIONS:
        table = tb.precompute(pair, direction, dt=args.dt, t_max=args.t_max,
                              epsilon=args.eps, jobs=jobs, mesh=mesh)
        path = out_dir / f"{direction}.json"
        tb.save_table(path, table)
        print(f"wrote {path}: {len(table.t_grid)} rows, "
              f"t_max={table.t_max}")
    return 0


def cmd_solve_state(args):
    cfg = load_config(args.config)
    mesh = generators.generate(cfg.geometry)
    mag = fem.block_magnetization(mesh, cfg.magnetization.m,
                                  x_range=cfg.magnetization.x_range,
                                  z_range=cfg.magnetization.z_range)
    state = optimizer.initial_state(mesh,
                                    design_tags=cfg.optimization.design_tags,
                                    psi0=cfg.optimization.psi0)
    u, log = fem.newton_solve(mesh, cfg.material, state.side_array(), mag,
                              settings=cfg.solve, jobs=_jobs(args))
    J = optimizer.eval_J(mesh, cfg.objective, u)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "state_field.json", "w") as fh:
        json.dump({"coefficients": u.coefficients.tolist(), "J": J}, fh)
    curls = fem.space(mesh).curls(u.coefficients)
    vtkio.write_vtk(out / "state.vtk", mesh,
                    cell_data={"curl_mag": np.linalg.norm(curls, axis=1)},
                    point_data={"psi": state.psi}, title="state solve")
    print(f"converged in {len(log)} iterations, J = {J:.6e}")
    print(f"wrote {out / 'state_field.json'} and {out / 'state.vtk'}")
    return 0


def cmd_evaluate_td(args):
    cfg = load_config(args.config)
    mesh = generators.generate(cfg.geometry)
    tables = {d: tb.load_table(p) for d, p in cfg.tables.items()}
    mag = fem.block_magnetization(mesh, cfg.magnetization.m,
                                  x_range=cfg.magnetization.x_range,
                                  z_range=cfg.magnetization.z_range)
    state = optimizer.initial_state(mesh,
                                    design_tags=cfg.optimization.design_tags,
                                    psi0=cfg.optimization.psi0)
    jobs = _jobs(args)
    u, _ = fem.newton_solve(mesh, cfg.material, state.side_array(), mag,
                            settings=cfg.solve, jobs=jobs)
    p = optimizer.solve_adjoint(mesh, cfg.material, state.side_array(), u,
                                cfg.objective, settings=cfg.solve, jobs=jobs)
    clamp = args.clamp or cfg.optimization.clamp
    td, n_clamped = optimizer.td_field(mesh, tables, u, p, state,
                                       clamp=clamp)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "td.json", "w") as fh:
        json.dump({"td": td.tolist(), "n_clamped": n_clamped}, fh)
    vtkio.write_vtk(out / "td.vtk", mesh, cell_data={"td": td},
                    title="derivative field")
    print(f"td range [{td.min():.6e}, {td.max():.6e}], "
          f"{n_clamped} tets clamped")
    print(f"wrote {out / 'td.json'} and {out / 'td.vtk'}")
    return 0


def cmd_optimize(args):
    cfg = load_config(args.config)
    if args.clamp:
        from dataclasses import replace
        cfg = replace(cfg, optimization=replace(cfg.optimization,
                                                clamp=True))
    report = optimizer.optimize(cfg)
    for i, (J, frac) in enumerate(zip(report.J_history,
                                      report.iron_fractions)):
        print(f"iteration {i}: J = {J:.6e}, iron fraction = {frac:.4f}")
    if report.clamped_counts and any(report.clamped_counts):
        print(f"clamped evaluations per update: "
              f"{list(report.clamped_counts)}")
    print(f"artifacts in {report.output_dir}: "
          f"{', '.join(report.artifacts)}")
    return 0


_STUDIES = ("rate-inclusion", "rotation-equivariance", "linear-oracle")


def _run_study(name, jobs):
    if name == "rate-inclusion":
        return validate.rate_study_inclusion(
            MaterialPair(), validate.DEFAULT_RATE_EPS, jobs=jobs)
    if name == "rotation-equivariance":
        return validate.rotation_equivariance_study(MaterialPair(),
                                                    jobs=jobs)
    return validate.linear_oracle_study(
        200.0, NU0_DEFAULT, np.array([1.0, 0.0, 0.0]), jobs=jobs)


def cmd_verify(args):
    names = args.only if args.only else list(_STUDIES)
    jobs = _jobs(args)
    all_pass = True
    for name in names:
        report = _run_study(name, jobs)
        validate.save_report(report, args.out_dir)
        verdict = "PASS" if report.passed else "FAIL"
        extras = ", ".join(f"{k}={v:.4g}" if isinstance(v, float)
                           else f"{k}={v}"
                           for k, v in report.rates.items())
        print(f"{verdict} {report.name}"
              + (f" ({extras})" if extras else "")
              + (f" [{report.notes}]" if report.notes else ""))
        all_pass = all_pass and bool(report.passed)
    return 0 if all_pass else 1


def cmd_export_vtk(args):
    mesh = read_mesh(args.mesh)
    vtkio.write_vtk(args.out, mesh,
                    cell_data={"region": mesh.region_tag.astype(float)},
                    title="mesh export")
    print(f"wrote {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="curltd",
        description="Topology-derivative toolkit for 3D nonlinear "
                    "magnetostatics")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-mesh", help="generate a tagged mesh")
    g.add_argument("--kind", required=True,
                   choices=("box", "toy-motor", "graded-ball"))
    g.add_argument("--h", type=float, default=None)
    g.add_argument("--cells", type=int, default=None,
                   help="box cells per edge (overrides --h)")
    g.add_argument("--eps", type=float, default=None,
                   help="graded-ball truncation: outer radius 1/eps")
    g.add_argument("--r-out", type=float, default=None)
    g.add_argument("--grading", type=float, default=None)
    g.add_argument("--extents", type=float, nargs=3,
                   default=(1.0, 1.0, 1.0))
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_mesh)

    p = sub.add_parser("precompute",
                       help="build both derivative tables offline")
    p.add_argument("--mode", choices=("saturation", "linear"),
                   default="saturation")
    p.add_argument("--nu0", type=float, default=NU0_DEFAULT)
    p.add_argument("--q1", type=float, default=200.0)
    p.add_argument("--q2", type=float, default=0.001)
    p.add_argument("--q3", type=float, default=6.0)
    p.add_argument("--nu1", type=float, default=None)
    p.add_argument("--nu2", type=float, default=None)
    p.add_argument("--dt", type=float, default=tb.DEFAULT_DT)
    p.add_argument("--t-max", type=float, default=tb.DEFAULT_T_MAX)
    p.add_argument("--eps", type=float, default=cell.DEFAULT_EPSILON)
    p.add_argument("--h", type=float, default=tb.DEFAULT_TABLE_H)
    p.add_argument("--out-dir", required=True)
    _add_jobs(p)
    p.set_defaults(func=cmd_precompute)

    for name, fn, hlp in (
            ("solve-state", cmd_solve_state, "solve the state problem"),
            ("evaluate-td", cmd_evaluate_td,
             "solve state + adjoint and map the derivative field"),
            ("optimize", cmd_optimize, "run the one-shot loop")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--config", required=True)
        if name in ("evaluate-td", "optimize"):
            s.add_argument("--clamp", action="store_true",
                           help="clamp out-of-range field magnitudes to "
                                "the table edge instead of failing")
        _add_jobs(s)
        s.set_defaults(func=fn)

    v = sub.add_parser("verify", help="run the verification studies")
    v.add_argument("--only", action="append", choices=_STUDIES,
                   help="run a single study (repeatable)")
    v.add_argument("--out-dir", default="reports")
    _add_jobs(v)
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("export-vtk", help="convert a mesh file to VTK")
    e.add_argument("--mesh", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export_vtk)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MissingTableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PartialTableError as exc:
        ts = ", ".join(f"{t:.6g}" for t in exc.failed_t)
        print(f"error: precompute failed at t = [{ts}]", file=sys.stderr)
        return 1
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CurlTDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
