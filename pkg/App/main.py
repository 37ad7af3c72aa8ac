"""
Command-line driver for the split-step solver, the modal analysis and the benchmarks.

    python App/main.py converge --case iv --orders 1 --meshes 10,20,40
    python App/main.py cavity --m 32 --tfinal 20 --bc tn
    python App/main.py cylinder --order 1 --refine 4 --tfinal 8 --bc wabe
    python App/main.py modal detz --k 1,5,10,100 --h 0.1 --nu 1 --alpha auto
    python App/main.py mesh gen --kind stretched --m 64 --output cavity.mesh
"""

import argparse
import logging
import os
import sys
import threading

import numpy as np

from benchmarks import (
    CYLINDER_ALPHA,
    CavityConfig,
    CylinderConfig,
    cavity_checks,
    cavity_contour_rows,
    run_cavity,
    run_cylinder,
    stream_function,
)
from errors import InvalidArgumentError
from export_csv import write_csv, write_rows, write_scan, write_study
from export_json import RunManifest
from export_vtk import write_vtk
from manufactured import BOUNDARY_MODES, CASES, NORMS, QUANTITIES, ManufacturedCase, convergence_study
from mesh import (
    CYLINDER_MESH_PATH,
    gen_cylinder_channel,
    gen_stretched_square,
    gen_unit_square,
    load_mesh,
    mesh_info,
    refine_uniform,
    save_mesh,
    stretch_for_ratio,
)
from modal import (
    ModalCase,
    algebraic_invariants,
    det_Z,
    detZ_scan,
    leading_sigma,
    limit_detZ,
    q_scan,
    verify_q_lemmas,
)
from run_config import RunConfigManager, load_config_file, split_list
from splitstep import BC_MODES, LINEAR_SOLVERS

LOGGER_NAME = "nsfem"
logger = logging.getLogger(LOGGER_NAME)

LEVELS = {"info": logging.INFO, "success": logging.INFO, "err": logging.ERROR, "debug": logging.DEBUG}
# argparse bookkeeping that is not a run parameter
INTERNAL_KEYS = {"command", "action", "func", "leaf", "config", "load_config", "save_config", "verbose"}


def log(msg, level="info"):
    logger.log(LEVELS.get(level, logging.INFO), msg)


def setup_logging(verbose=False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)-7s %(message)s",
        datefmt="%H:%M:%S",
        stream=sys.stderr,
    )


def make_progress_cb(every=0.1):
    """progress_cb(stage, done, total) that logs roughly every `every` of each stage."""
    lock = threading.Lock()
    last = {}

    def progress_cb(stage, done, total):
        if not total:
            return
        mark = int(done / total / every)
        with lock:
            if mark <= last.get(stage, -1) and done != total:
                return
            last[stage] = mark
        log(f"{stage}: {done}/{total}")

    return progress_cb


# argument types

def int_list(value):
    try:
        return [int(v) for v in split_list(value)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")


def float_list(value):
    try:
        return [float(v) for v in split_list(value)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}")


def str_list(value):
    return split_list(value)


def float_pair(value):
    pair = float_list(value) if isinstance(value, str) else [float(v) for v in value]
    if len(pair) != 2 or not pair[0] < pair[1]:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi' with lo < hi, got {value!r}")
    return pair


def complex_value(value):
    try:
        return complex(str(value).replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a complex number like 1+2j, got {value!r}")


def alpha_value(value):
    if str(value).strip().lower() == "auto":
        return "auto"
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {value!r}")


def bool_value(value):
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {value!r}")


# parser

def _add_common(p, solver=True):
    g = p.add_argument_group("common")
    g.add_argument("--out", default="out", help="output directory")
    g.add_argument("--config", help="key = value file with defaults for any flag")
    g.add_argument("--load-config", metavar="NAME", help="use a saved named configuration as defaults")
    g.add_argument("--save-config", metavar="NAME", help="save the resolved parameters under NAME")
    g.add_argument("--verbose", action="store_true")
    if solver:
        g.add_argument("--bc", choices=BC_MODES, help="pressure boundary condition")
        g.add_argument("--cd", type=float, help="damping constant, alpha = cd / h_min^2 (0 disables)")
        g.add_argument("--dt-safety", type=float, default=0.25)
        g.add_argument("--linear-solver", choices=LINEAR_SOLVERS, default="direct")


def build_parser():
    parser = argparse.ArgumentParser(prog="nsfem", description="Split-step finite-element Navier-Stokes toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    leaves = {}

    def leaf(subparsers, name, key, func, solver=True, **kwargs):
        p = subparsers.add_parser(name, **kwargs)
        _add_common(p, solver)
        p.set_defaults(func=func, leaf=key)
        leaves[key] = p
        return p

    p = leaf(sub, "converge", "converge", cmd_converge, help="manufactured-solution convergence study")
    p.add_argument("--case", type=str_list, default=["iv"], help=f"comma list of {sorted(CASES)}")
    p.add_argument("--orders", "--order", dest="orders", type=int_list, default=[1])
    p.add_argument("--meshes", type=int_list, default=[10, 20, 40], help="cells per side")
    p.add_argument("--boundary", choices=BOUNDARY_MODES, default="noslip")
    p.add_argument("--tfinal", type=float, default=0.1)
    p.add_argument("--mu", type=float, default=0.1)
    p.add_argument("--workers", type=int, default=4)

    p = leaf(sub, "cavity", "cavity", cmd_cavity, help="modified lid-driven cavity")
    p.add_argument("--m", type=int, default=64)
    p.add_argument("--spacing-ratio", type=float, default=2.389)
    p.add_argument("--nu", type=float, default=1e-3)
    p.add_argument("--tfinal", type=float, default=50.0)
    p.add_argument("--order", type=int, choices=(1, 2, 4), default=1)
    p.add_argument("--sample-interval", type=float, default=1.0)
    p.add_argument("--profile-points", type=int, default=129)
    p.add_argument("--contour-grid", type=int, default=201)

    p = leaf(sub, "cylinder", "cylinder", cmd_cylinder, help="flow past a cylinder")
    p.add_argument("--mesh", default=None, help="base mesh file (bundled channel mesh by default)")
    p.add_argument("--refine", type=int, default=4)
    p.add_argument("--nu", type=float, default=1e-3)
    p.add_argument("--tfinal", type=float, default=8.0)
    p.add_argument("--order", type=int, choices=(1, 2, 4), default=1)
    p.add_argument("--alpha", type=float, default=CYLINDER_ALPHA, help="damping coefficient unless --cd is given")
    p.add_argument("--stride", type=int, default=10)

    modal = sub.add_parser("modal", help="normal-mode analysis")
    msub = modal.add_subparsers(dest="action", required=True)

    p = leaf(msub, "qscan", "modal qscan", cmd_qscan, solver=False, help="q1(s), q(s) on real s and lemma checks")
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--k", type=float_list, default=list(range(1, 11)))
    p.add_argument("--s-max", type=float, default=100.0)
    p.add_argument("--n-s", type=int, default=1000)

    p = leaf(msub, "detz", "modal detz", cmd_detz, solver=False, help="zero contours of det Z over complex s")
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--k", type=float_list, default=[1.0, 5.0, 10.0, 100.0])
    p.add_argument("--alpha", type=alpha_value, default="auto", help="number, or auto for cd / h^2")
    p.add_argument("--cd", type=float, default=1.0)
    p.add_argument("--re-range", nargs=2, type=float, metavar=("LO", "HI"), default=[-20.0, 20.0])
    p.add_argument("--im-range", nargs=2, type=float, metavar=("LO", "HI"), default=[-30.0, 30.0])
    p.add_argument("--n-re", type=int, default=400)
    p.add_argument("--n-im", type=int, default=600)

    p = leaf(msub, "limit", "modal limit", cmd_limit, solver=False, help="det Z against its h -> 0 limit")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=100.0)
    p.add_argument("--s", type=complex_value, default=complex(1, 2))
    p.add_argument("--hs", type=float_list, default=[1e-1, 1e-2, 1e-3])

    p = leaf(msub, "sigma", "modal sigma", cmd_sigma, solver=False, help="leading-order boundary-layer amplitudes")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=100.0)
    p.add_argument("--s", type=complex_value, default=complex(1, 0))
    p.add_argument("--bc", choices=BC_MODES, default="tn", help="tn gives r = 1, wabe r = 2")
    p.add_argument("--g0", type=complex_value, default=complex(1, 0))
    p.add_argument("--h", type=float, default=1.0)

    p = leaf(msub, "invariants", "modal invariants", cmd_invariants, solver=False, help="random-draw root identity checks")
    p.add_argument("--draws", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)

    mesh = sub.add_parser("mesh", help="mesh utilities")
    gsub = mesh.add_subparsers(dest="action", required=True)

    p = leaf(gsub, "gen", "mesh gen", cmd_mesh_gen, solver=False, help="generate a mesh file")
    p.add_argument("--kind", choices=("square", "stretched", "cylinder"), default="square")
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--spacing-ratio", type=float, default=2.389)
    p.add_argument("--output", required=True)

    p = leaf(gsub, "refine", "mesh refine", cmd_mesh_refine, solver=False, help="uniform refinement")
    p.add_argument("--input", required=True)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--output", required=True)

    p = leaf(gsub, "info", "mesh info", cmd_mesh_info, solver=False, help="mesh statistics")
    p.add_argument("--input", required=True)

    return parser, leaves


def _convert(action, value):
    if value is None:
        return None
    if isinstance(action, argparse._StoreTrueAction):
        return bool_value(value)
    if action.nargs == 2:
        return float_pair(value)
    if isinstance(value, str) and action.type is not None:
        value = action.type(value)
    if action.choices is not None and value not in action.choices:
        raise argparse.ArgumentTypeError(f"{value!r} is not one of {list(action.choices)}")
    return value


def apply_config_defaults(parser, leaf_parser, values):
    """Install config values as defaults of the leaf parser; explicit flags still win."""
    actions = {a.dest: a for a in leaf_parser._actions}
    defaults = {}
    for key, value in values.items():
        if key in INTERNAL_KEYS or key not in actions:
            parser.error(f"unknown config key {key!r}")
        try:
            defaults[key] = _convert(actions[key], value)
        except (argparse.ArgumentTypeError, ValueError) as e:
            parser.error(f"config key {key!r}: {e}")
    leaf_parser.set_defaults(**defaults)


def parse_args(argv=None, manager=None):
    parser, leaves = build_parser()
    args = parser.parse_args(argv)
    values = {}
    try:
        if args.load_config:
            values.update((manager or RunConfigManager()).load(args.load_config))
        if args.config:
            values.update(load_config_file(args.config))
    except (InvalidArgumentError, OSError) as e:
        parser.error(str(e))
    if values:
        apply_config_defaults(parser, leaves[args.leaf], values)
        args = parser.parse_args(argv)
    for action in leaves[args.leaf]._actions:
        pair = getattr(args, action.dest, None)
        if action.nargs == 2 and pair is not None and not pair[0] < pair[1]:
            parser.error(f"{action.option_strings[0]}: expected LO < HI, got {pair[0]:g} {pair[1]:g}")
    return args


def parameters(args):
    return {k: v for k, v in vars(args).items() if k not in INTERNAL_KEYS}


# commands; each returns a summary dict for the run manifest

def cmd_converge(args, manifest):
    summary = {}
    for case_id in args.case:
        case = ManufacturedCase(case_id=case_id, mu=args.mu)
        for order in args.orders:
            study = convergence_study(
                case,
                meshes=args.meshes,
                order=order,
                boundary=args.boundary,
                t_final=args.tfinal,
                dt_safety=args.dt_safety,
                linear_solver=args.linear_solver,
                workers=args.workers,
                log_fn=log,
                progress_cb=make_progress_cb(),
                cd=args.cd,
                bc_mode=args.bc,
            )
            stem = f"converge_{case_id}_p{order}_{args.boundary}"
            for path in write_study(study, args.out, stem):
                manifest.add_output(path)
            print(format_rate_table(study))
            summary[f"{case_id}_p{order}"] = {"rates": study.rates, "failures": len(study.failures)}
            if study.failures:
                log(f"case {case_id} P{order}: {len(study.failures)} run(s) failed", level="err")
    return summary


def format_rate_table(study):
    lines = [f"case {study.case.case_id}, P{study.order}, {study.boundary}", f"{'':>6}" + "".join(f"{n:>10}" for n in NORMS)]
    for q in QUANTITIES:
        lines.append(f"{q:>6}" + "".join(f"{study.rates[f'{q}_{n}']:>10.3f}" for n in NORMS))
    return "\n".join(lines)


def cmd_cavity(args, manifest):
    config = CavityConfig(
        m=args.m,
        spacing_ratio=args.spacing_ratio,
        nu=args.nu,
        t_final=args.tfinal,
        cd=1.0 if args.cd is None else args.cd,
        bc_mode=args.bc or "wabe",
        order=args.order,
        dt_safety=args.dt_safety,
        sample_interval=args.sample_interval,
        profile_points=args.profile_points,
        linear_solver=args.linear_solver,
    )
    result = run_cavity(config, log_fn=log, progress_cb=make_progress_cb())
    psi = stream_function(result.state.u_curr, config.linear_solver)
    out = args.out
    outputs = [
        (write_csv, (result.series, os.path.join(out, "cavity_series.csv"))),
        (write_rows, (["t", "y", "u_center", "x", "v_center"], (r for p in result.profiles for r in p.rows()), os.path.join(out, "cavity_profiles.csv"))),
        (write_rows, (["field", "level", "curve_id", "x", "y"], cavity_contour_rows(result, args.contour_grid, psi), os.path.join(out, "cavity_contours.csv"))),
        (write_vtk, (result.state, result.solver.vspace, os.path.join(out, "cavity_final.vtk"))),
    ]
    for writer, writer_args in outputs:
        writer(*writer_args)
        manifest.add_output(writer_args[-1])
    checks = cavity_checks(result)
    log(
        f"u(0.5, y) min {checks['u_min']:.4f} at y={checks['y_at_u_min']:.3f}, "
        f"profile change over the last 10 time units {checks['profile_change']:.3g}",
        level="success",
    )
    checks.update({"psi_min": float(psi.min()), "alpha": result.solver.alpha, "dofs": result.solver.pspace.num_dofs})
    return checks


def cmd_cylinder(args, manifest):
    config = CylinderConfig(
        mesh_path=args.mesh or CYLINDER_MESH_PATH,
        refine=args.refine,
        nu=args.nu,
        t_final=args.tfinal,
        alpha=args.alpha,
        cd=args.cd,
        bc_mode=args.bc or "wabe",
        order=args.order,
        dt_safety=args.dt_safety,
        stride=args.stride,
        linear_solver=args.linear_solver,
    )
    result = run_cylinder(config, log_fn=log, progress_cb=make_progress_cb())
    series_path = os.path.join(args.out, "cylinder_series.csv")
    vtk_path = os.path.join(args.out, "cylinder_final.vtk")
    write_csv(result.series, series_path)
    write_vtk(result.state, result.solver.vspace, vtk_path)
    manifest.add_output(series_path)
    manifest.add_output(vtk_path)
    return result.summary


def cmd_qscan(args, manifest):
    s_values = np.linspace(args.s_max / args.n_s, args.s_max, args.n_s)
    rows = q_scan(args.h, args.nu, args.k, s_values)
    path = os.path.join(args.out, "modal_qscan.csv")
    write_rows(["k", "s", "q1", "q"], rows, path)
    manifest.add_output(path)
    report = verify_q_lemmas(args.h, args.nu, args.k, s_values)
    for v in report.violations[:20]:
        log(f"k={v['k']:g} s={v['s']:.4g}: {v['check']} fails ({v['value']:.3e})", level="err")
    log(f"q lemma checks: {report.checked} points, {len(report.violations)} violations", level="success" if report.ok else "err")
    return {
        "checked": report.checked,
        "violations": len(report.violations),
        "max_derivative_error": report.max_derivative_error,
        "max_identity_error": report.max_identity_error,
    }


def cmd_detz(args, manifest):
    alpha = args.cd / args.h ** 2 if args.alpha == "auto" else args.alpha
    summary = {"alpha": alpha, "right_half_candidates": {}}
    for k in args.k:
        case = ModalCase(args.h, k, args.nu, alpha)
        scan = detZ_scan(case, tuple(args.re_range), tuple(args.im_range), args.n_re, args.n_im, progress_cb=make_progress_cb())
        for path in write_scan(scan, args.out, f"detz_k{k:g}").values():
            manifest.add_output(path)
        count = scan.intersection_count(right_half=True)
        summary["right_half_candidates"][f"{k:g}"] = count
        log(f"k={k:g}: {count} candidate root cell(s) with Re(s) > 0", level="err" if count else "success")
    return summary


def cmd_limit(args, manifest):
    limit = limit_detZ(args.k, args.nu, args.alpha, args.s)
    rows = []
    for h in args.hs:
        value = det_Z(ModalCase(h, args.k, args.nu, args.alpha, args.s))
        rows.append({"h": h, "re_det": value.real, "im_det": value.imag, "error": abs(value - limit)})
        print(f"h={h:<8g} det Z = {value.real:+.8f} {value.imag:+.8f}i   |det Z - limit| = {abs(value - limit):.3e}")
    print(f"limit      = {limit.real:+.8f} {limit.imag:+.8f}i")
    path = os.path.join(args.out, "modal_limit.csv")
    write_rows(["h", "re_det", "im_det", "error"], rows, path)
    manifest.add_output(path)
    errors = [r["error"] for r in rows]
    return {"limit": limit, "errors": errors, "monotone": all(b < a for a, b in zip(errors, errors[1:]))}


def cmd_sigma(args, manifest):
    r = 1 if args.bc == "tn" else 2
    sigmas = leading_sigma(args.k, args.nu, args.alpha, args.s, r, args.g0, args.h)
    for n, sig in enumerate(sigmas, start=1):
        print(f"sigma{n} = {sig.real:+.10g} {sig.imag:+.10g}i")
    return {"r": r, "sigma": list(sigmas)}


def cmd_invariants(args, manifest):
    worst = algebraic_invariants(args.draws, args.seed)
    for key, value in worst.items():
        print(f"{key:>12}: {value:.3e}" if key != "draws" else f"{key:>12}: {value}")
    return worst


def cmd_mesh_gen(args, manifest):
    if args.kind == "square":
        mesh = gen_unit_square(args.m)
    elif args.kind == "stretched":
        mesh = gen_stretched_square(args.m, stretch_for_ratio(args.spacing_ratio))
    else:
        mesh = gen_cylinder_channel()
    save_mesh(mesh, args.output, comments=[f"{args.kind} m={args.m}"])
    log(f"Wrote {mesh.num_vertices} vertices, {mesh.num_triangles} triangles to {args.output}", level="success")
    return mesh_info(mesh)


def cmd_mesh_refine(args, manifest):
    mesh = refine_uniform(load_mesh(args.input), args.n)
    save_mesh(mesh, args.output, comments=[f"refined x{args.n} from {os.path.basename(args.input)}"])
    log(f"Wrote {mesh.num_vertices} vertices, {mesh.num_triangles} triangles to {args.output}", level="success")
    return mesh_info(mesh)


def cmd_mesh_info(args, manifest):
    info = mesh_info(load_mesh(args.input))
    for key, value in info.items():
        print(f"{key}: {value}")
    return info


def main(argv=None, manager=None):
    args = parse_args(argv, manager)
    setup_logging(args.verbose)
    if args.save_config:
        saved = {k: str(v) if isinstance(v, complex) else v for k, v in parameters(args).items()}
        path = (manager or RunConfigManager()).save(args.save_config, saved, args.leaf)
        log(f"Saved configuration '{args.save_config}' to {path}", level="success")

    manifest = RunManifest(args.leaf, parameters(args))
    log(f"Starting {args.leaf}...")
    try:
        summary = args.func(args, manifest)
    except (ValueError, RuntimeError, OSError) as e:
        log(f"{args.leaf} failed: {e}", level="err")
        manifest.finish({"error": str(e)}, status="failed")
        try:
            manifest.write(args.out)
        except OSError:
            pass
        return 1
    manifest.finish(summary)
    manifest.write(args.out)
    log(f"{args.leaf} completed in {manifest.elapsed:.1f}s; outputs in {args.out}", level="success")
    return 0


if __name__ == "__main__":
    sys.exit(main())
