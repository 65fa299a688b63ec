"""Command-line interface: run, scale, compare, mesh-info, slice."""

import os

# keep BLAS single-threaded: worker threads own the parallelism, and the
# scaling/determinism guarantees assume serial kernels underneath
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import sys

import numpy as np

from .config import OUTPUT_DIR_ENV, load_config, with_overrides
from .errors import OrodgError


def _cmd_run(args):
    from .runner import run
    cfg = load_config(args.config)
    overrides = {}
    if args.workers:
        overrides["workers"] = args.workers
    if args.output:
        overrides["output_dir"] = args.output
    if overrides:
        cfg = with_overrides(cfg, **overrides)
    result = run(cfg)
    last = result.diagnostics[-1].split(",")
    print(f"run complete: {result.output_dir}")
    print(f"  {result.courant}")
    print(f"  steps={last[0]} t={last[1]} wall={result.wall:.2f}s")
    print(f"  blocks: " + ", ".join(
        f"{k}={v:.2f}s" for k, v in sorted(result.timer_report.blocks.items())))
    return 0


def _cmd_scale(args):
    from .runner import scaling_harness
    cfg = load_config(args.config)
    counts = [int(p) for p in args.workers.split(",")]
    out = args.output or os.path.join(cfg.resolved_output_dir(),
                                      f"scaling-{args.mode}.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    rows = scaling_harness(cfg, counts, mode=args.mode, out_path=out)
    print(f"scaling table written to {out}")
    for r in rows:
        print(f"  P={r.workers}: wall={r.wall:.3f}s speedup={r.speedup:.2f} "
              f"efficiency={r.efficiency:.2%}")
    return 0


def _cmd_compare(args):
    from .runner import efficiency_comparison
    cfg_u = load_config(args.uniform)
    cfg_n = load_config(args.nonconforming)
    report, _, _ = efficiency_comparison(cfg_u, cfg_n)
    print("uniform vs non-conforming:")
    print(f"  wall: {report.wall_uniform:.2f}s vs "
          f"{report.wall_nonconforming:.2f}s (ratio {report.time_ratio:.3f})")
    print(f"  dofs/var: {report.dofs_uniform} vs {report.dofs_nonconforming} "
          f"(ratio {report.dof_ratio:.3f})")
    print(f"  time saving: {100 * (1 - report.time_ratio):.1f}%")
    print(f"  max|w_u|={report.max_w_uniform:.4g} "
          f"max|dw|={report.max_dw:.4g} "
          f"agreement={report.agreement:.2%} of max|w|")
    return 0


def _cmd_mesh_info(args):
    from .runner import setup_run
    cfg = load_config(args.config)
    ctx = setup_run(with_overrides(cfg, workers=1))
    mesh = ctx.mesh
    topo = mesh.topology
    n_sub = ctx.geometry.basis.n_subfaces
    print(f"mesh: dim={mesh.dim} extents={mesh.extents} root={mesh.root_counts}")
    print(f"  leaves: {mesh.n_leaves} (levels 0..{mesh.max_level})")
    for lv in range(mesh.max_level + 1):
        n = sum(1 for l, _ in mesh.leaves if l == lv)
        if n:
            print(f"    level {lv}: {n} leaves, h = "
                  f"{tuple(float(s) for s in mesh.leaf_size(lv))}")
    print(f"  conforming faces: {sum(len(b.left) for b in topo.conforming)}")
    print(f"  hanging faces: {topo.n_hanging_coarse_faces(n_sub)} coarse "
          f"({sum(len(b.coarse) for b in topo.hanging)} sub-faces)")
    print(f"  boundary faces: {topo.n_boundary_faces()}")
    print(f"  dofs per variable (r={cfg.degree}): {ctx.dofs_per_variable}")
    print(f"  min cell diameter: {ctx.geometry.min_diameter:.6g} m")
    return 0


def _cmd_slice(args):
    from .runner import extract_slice, load_snapshot
    fld, geometry, model, t = load_snapshot(args.snapshot)
    axis, coord = args.plane.split("=")
    n = tuple(int(v) for v in args.n.split("x"))
    grids, vals = extract_slice(fld, geometry, (axis.strip(), float(coord)),
                                var=args.var, n_samples=n, model=model)
    out = args.output or (os.path.splitext(args.snapshot)[0]
                          + f".{args.var}-{axis}{coord}.csv")
    with open(out, "w") as f:
        if vals.ndim == 1:
            f.write("coord,value\n")
            for c, v in zip(grids[0], vals):
                f.write(f"{c!r},{v!r}\n")
        else:
            f.write("coord0,coord1,value\n")
            for i, c0 in enumerate(grids[0]):
                for j, c1 in enumerate(grids[1]):
                    f.write(f"{c0!r},{c1!r},{vals[i, j]!r}\n")
    finite = vals[np.isfinite(vals)]
    print(f"slice written to {out} (t={t}, {args.var}: "
          f"min={finite.min():.4g} max={finite.max():.4g})")
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="orodg",
        description="IMEX-DG Euler solver on non-conforming terrain meshes")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one configured run")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=0)
    p.add_argument("--output", default="")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("scale", help="strong/weak scaling harness")
    p.add_argument("config")
    p.add_argument("--mode", choices=("strong", "weak"), default="strong")
    p.add_argument("--workers", default="1,2,4,8")
    p.add_argument("--output", default="")
    p.set_defaults(fn=_cmd_scale)

    p = sub.add_parser("compare", help="uniform vs non-conforming efficiency")
    p.add_argument("uniform")
    p.add_argument("nonconforming")
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("mesh-info", help="print mesh statistics for a config")
    p.add_argument("config")
    p.set_defaults(fn=_cmd_mesh_info)

    p = sub.add_parser("slice", help="sample a plane from a saved snapshot")
    p.add_argument("snapshot")
    p.add_argument("--plane", required=True, help="e.g. z=800 or y=20000")
    p.add_argument("--var", default="w")
    p.add_argument("--n", default="201x81")
    p.add_argument("--output", default="")
    p.set_defaults(fn=_cmd_slice)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except OrodgError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
