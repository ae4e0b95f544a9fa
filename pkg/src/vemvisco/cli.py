"""Command-line driver.

Subcommands: mesh | convergence | patch | energy | marker. A JSON config file
passed via --params supplies MaterialParams fields and defaults for the other
flags; explicit command-line flags win. Exit codes: 0 success, 1 acceptance
failure, 2 usage error.
"""

import argparse
import json
import os
import sys

import numpy as np

from .assemble import MaterialParams
from .mesh import cell_geometry, generate_partitioned, quality_report, write_mesh
from .mms import (build_case, convergence_study, damping_ratio,
                  energy_experiment, fitted_rates, make_mesh,
                  marker_experiment, patch_test)

LOW_VISCOSITY = {"mu0p": 1e-5, "lam0p": 1e-6}


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config file must contain a JSON object")
    return cfg


def _materials(cfg):
    keys = ("mu0", "lam0", "mu1", "lam1", "mu0p", "lam0p", "rho")
    return MaterialParams(**{k: float(cfg[k]) for k in keys if k in cfg})


def _setting(args, cfg, name, default):
    val = getattr(args, name, None)
    if val is not None:
        return val
    if name in cfg:
        return cfg[name]
    return default


def _outdir(args, cfg):
    out = _setting(args, cfg, "out", ".")
    os.makedirs(out, exist_ok=True)
    return out


def cmd_mesh(args, cfg):
    sizes = args.sizes
    if args.kind == "partitioned":
        if len(sizes) != 2:
            print("mesh partitioned needs two sizes", file=sys.stderr)
            return 2
        mesh = generate_partitioned(sizes[0], sizes[1], boundary=args.boundary)
    elif args.kind in ("cartesian", "hexagonal"):
        if len(sizes) != 1:
            print(f"mesh {args.kind} needs one size", file=sys.stderr)
            return 2
        mesh = make_mesh(args.kind, sizes[0], boundary=args.boundary)
    else:
        print(f"unknown mesh kind {args.kind!r}", file=sys.stderr)
        return 2
    out = _outdir(args, cfg)
    name = f"{args.kind}_{'x'.join(map(str, sizes))}.vemmesh"
    path = os.path.join(out, name)
    write_mesh(mesh, path)
    rep = quality_report(mesh)
    total_area = sum(cell_geometry(mesh, c).area for c in range(mesh.num_cells))
    print(f"wrote {path}")
    print(f"vertices={mesh.num_vertices} cells={mesh.num_cells} "
          f"edges={mesh.num_edges}")
    print(f"total_area={total_area:.12g} "
          f"min_edge_ratio={rep.min_edge_ratio:.4g} "
          f"min_inradius_ratio={rep.min_inradius_ratio:.4g} "
          f"max_vertices={rep.max_cell_vertices}")
    return 0


def cmd_convergence(args, cfg):
    k = int(_setting(args, cfg, "k", 1))
    case_name = _setting(args, cfg, "case", "poly-t2")
    kind = _setting(args, cfg, "mesh_kind", "cartesian")
    sizes = _setting(args, cfg, "sizes", None)
    if sizes is None:
        sizes = list(range(6, 13))
    elif isinstance(sizes, str):
        sizes = [int(s) for s in sizes.split(",")]
    T = float(_setting(args, cfg, "T", 1.0))
    tau0 = _setting(args, cfg, "tau0", None)
    boundary = _setting(args, cfg, "boundary", "default")
    params = _materials(cfg)

    case = build_case(case_name, params)
    out = _outdir(args, cfg)
    csv_path = os.path.join(out, f"convergence_{case_name}_{kind}_k{k}.csv")
    rows = convergence_study(case, kind, sizes, k, T=T,
                             tau0=None if tau0 is None else float(tau0),
                             boundary=boundary, csv_path=csv_path)
    fields = ("sig0", "sig1", "v", "r", "div")
    print(f"case={case_name} kind={kind} k={k} T={T}  ->  {csv_path}")
    print("h        dofs    " + "  ".join(f"e({f})      rate" for f in fields))
    for r in rows:
        cells = [f"{r.h:<8.4f} {r.dofs:<7d}"]
        for f in fields:
            cells.append(f"{r.errors[f]:.3e} {r.rates[f]:5.2f}")
        print(" ".join(cells))
    fit = fitted_rates(rows)
    target = k + 1 - 0.15
    print("fitted rates: " + "  ".join(f"{f}={fit[f]:.3f}" for f in fields))
    bad = [f for f in fields if fit[f] < target]
    if bad:
        print(f"FAIL: rate below {target:.2f} for: {', '.join(bad)}",
              file=sys.stderr)
        return 1
    print(f"all fitted rates >= {target:.2f}")
    return 0


def cmd_patch(args, cfg):
    k = int(_setting(args, cfg, "k", 1))
    params = _materials(cfg)
    ok = True
    for kind, n in (("cartesian", 3), ("hexagonal", 4)):
        mesh = make_mesh(kind, n)
        worst, errors = patch_test(mesh, k, params=params)
        status = "ok" if worst <= 1e-9 else "FAIL"
        ok = ok and worst <= 1e-9
        print(f"patch {kind} n={n} k={k}: max error {worst:.3e} [{status}]")
    return 0 if ok else 1


def cmd_energy(args, cfg):
    seed = int(_setting(args, cfg, "seed", 0))
    params = _materials(cfg)
    hists = energy_experiment(taus=(0.1, 1.0), seed=seed, params=params)
    ok = True
    for tau, hist in hists.items():
        e = hist.energies
        viol = np.nonzero(np.diff(e) > 1e-12 * e[0])[0]
        if len(viol):
            print(f"tau={tau}: energy increased at step {viol[0] + 1}",
                  file=sys.stderr)
            ok = False
        else:
            print(f"tau={tau}: {len(e) - 1}/{len(e) - 1} nonincreasing steps, "
                  f"E0={e[0]:.6g} -> E_end={e[-1]:.6g}")
    return 0 if ok else 1


def cmd_marker(args, cfg):
    T = float(_setting(args, cfg, "T", 100.0))
    tau = float(_setting(args, cfg, "tau0", 0.1))
    out = _outdir(args, cfg)
    base = dict(mu0=3.0, lam0=2.0, mu1=4.0, lam1=5.0, rho=1000.0)
    presets = {
        "standard": MaterialParams(**base, mu0p=4.0, lam0p=3.0),
        "low-viscosity": MaterialParams(**base, **LOW_VISCOSITY),
    }
    for name, params in presets.items():
        path = os.path.join(out, f"marker_{name}.csv")
        times, vx = marker_experiment(params, T=T, tau=tau, csv_path=path)
        ratio = damping_ratio(times, vx)
        print(f"{name}: late/peak amplitude ratio {ratio:.4f} -> {path}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="vemvisco",
        description="Mixed virtual element solver for viscoelastic wave "
                    "propagation on polygonal meshes.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--params", help="JSON config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="RNG seed")
        p.add_argument("--threads", type=int, default=1,
                       help="assembly threads (currently sequential)")
        p.add_argument("--boundary", choices=("default", "all-dirichlet"),
                       default="default")

    p = sub.add_parser("mesh", help="generate and write a mesh file")
    p.add_argument("kind", choices=("cartesian", "hexagonal", "partitioned"))
    p.add_argument("sizes", type=int, nargs="+")
    common(p)
    p.set_defaults(fn=cmd_mesh)

    p = sub.add_parser("convergence", help="manufactured-solution rate study")
    p.add_argument("--k", type=int, choices=(1, 2, 3))
    p.add_argument("--case", choices=("poly-t2", "poly-t3", "exp-trig"))
    p.add_argument("--mesh-kind", dest="mesh_kind",
                   choices=("cartesian", "hexagonal", "partitioned"))
    p.add_argument("--sizes", help="comma-separated mesh sizes")
    p.add_argument("--T", type=float)
    p.add_argument("--tau0", type=float)
    common(p)
    p.set_defaults(fn=cmd_convergence)

    p = sub.add_parser("patch", help="constant-stress reproduction test")
    p.add_argument("--k", type=int, choices=(1, 2, 3))
    common(p)
    p.set_defaults(fn=cmd_patch)

    p = sub.add_parser("energy", help="unforced energy-decay check")
    common(p)
    p.set_defaults(fn=cmd_energy)

    p = sub.add_parser("marker", help="damped-oscillation marker series")
    p.add_argument("--T", type=float)
    p.add_argument("--tau0", type=float, help="time step")
    common(p)
    p.set_defaults(fn=cmd_marker)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = _load_config(args.params)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return 2
    try:
        return args.fn(args, cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
