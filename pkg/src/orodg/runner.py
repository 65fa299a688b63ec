"""Run orchestration: case assembly, time loop, outputs, harnesses.

A run is: build mesh -> geometry -> initial projection -> IMEX time loop,
with per-step diagnostics (deterministic CSV, identical for any worker
count) and per-block wall-clock accounting (separate CSV; timings are of
course machine-dependent).  The scaling harness repeats runs over worker
counts; the efficiency comparison pits a uniform mesh against a
non-conforming one on the same case.
"""

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import cases
from .basis import lagrange_eval_matrix
from .boundary import wall_everywhere
from .config import CaseConfig, dump_config, save_config, with_overrides
from .dgops import DGOperators
from .errors import ConfigurationError, UsageError
from .field import StateField, project_initial_data
from .geometry import build_geometry
from .imex import ImplicitSolveConfig, SplitOperators, _PrecondCache, ars222, \
    imex_step, run_time_loop
from .mesh import ForestMesh, build_uniform_mesh, dump_mesh, refine_region
from .parallel import WorkerPool
from .partition import partition_leaves
from .physics import FlowModel, conserved_to_primitive, courant_numbers
from .timing import BlockTimer
from .vtkio import write_field_vtk

_PRESET_DEFAULTS = {
    "paper2d": dict(t_final=3600.0, dt=2.0, root=(30, 8),
                    refine=("all", "all"), u_bar=10.0, sigma_max=0.05),
    "paper3d-small": dict(t_final=3600.0, dt=2.0, root=(15, 10, 4),
                          refine=(), u_bar=10.0, sigma_max=0.05),
    "hydrostatic-rest": dict(t_final=3600.0, dt=5.0, root=(60, 16),
                             refine=(), u_bar=0.0, sigma_max=0.0),
    "manufactured": dict(t_final=0.5, dt=0.01, root=(4, 4), refine=(),
                         u_bar=0.0, sigma_max=0.0),
}


def _preset(cfg, key):
    val = getattr(cfg, key)
    if val is None:
        return _PRESET_DEFAULTS[cfg.preset].get(key)
    return val


def _parse_box(text, dim):
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != dim:
        raise ConfigurationError(
            f"refine box {text!r} needs {dim} ranges 'lo:hi'")
    box = []
    for p in parts:
        lo, hi = p.split(":")
        box.append((float(lo), float(hi)))
    return box


def build_case_mesh(cfg, extents, periodic=None):
    root = _preset(cfg, "root")
    mesh = build_uniform_mesh(extents, root, periodic)
    dim = len(extents)
    for directive in (cfg.refine if cfg.refine else
                      _PRESET_DEFAULTS[cfg.preset].get("refine", ())):
        if directive == "all":
            mesh = refine_region(mesh, lambda lf: True, 1)
        else:
            box = _parse_box(directive, dim)

            def inside(lf, box=box):
                c = lf.center
                return all(lo <= c[a] <= hi for a, (lo, hi) in enumerate(box))

            mesh = refine_region(mesh, inside, 1)
    return mesh


@dataclass
class RunContext:
    config: CaseConfig
    mesh: ForestMesh
    geometry: object
    ops: DGOperators
    model: FlowModel
    split: SplitOperators
    initial: StateField
    solve_cfg: ImplicitSolveConfig
    pool: WorkerPool
    timer: BlockTimer
    partition: object
    hill_cfg: object = None
    background: np.ndarray = None
    exact_solution: object = None   # (t, coords) -> state, for manufactured

    @property
    def dofs_per_variable(self):
        return self.mesh.n_leaves * self.geometry.basis.n_nodes


def setup_run(cfg, pool=None, timer=None):
    cfg.validate()
    preset = cfg.preset
    timer = timer or BlockTimer()
    pool = pool or WorkerPool(cfg.workers, cfg.chunk)

    if preset in ("paper2d", "paper3d-small"):
        dim = 2 if preset == "paper2d" else 3
        domain = (60.0e3, 16.0e3) if dim == 2 else (60.0e3, 40.0e3, 16.0e3)
        hill_cfg = cases.HillCaseConfig(domain=domain)
        if _preset(cfg, "u_bar") is not None:
            hill_cfg = cases.replace(hill_cfg, u_bar=_preset(cfg, "u_bar"))
        if _preset(cfg, "n_buoyancy") is not None:
            hill_cfg = cases.replace(hill_cfg, N_buoyancy=_preset(cfg, "n_buoyancy"))
        mesh = build_case_mesh(cfg, domain)
        if dim == 2:
            terrain = lambda x: cases.hill_profile(x, None, hill_cfg)
        else:
            terrain = lambda x, y: cases.hill_profile(x, y, hill_cfg)
        geometry = build_geometry(mesh, cfg.degree, terrain=terrain,
                                  geom_degree=cfg.geom_degree,
                                  n_quad_1d=cfg.quad_points)
        ops = DGOperators(geometry, pool, timer)
        model = FlowModel.dimensional(hill_cfg.constants)
        initial = project_initial_data(geometry,
                                       cases.hydrostatic_initial_state(hill_cfg))
        background = initial.data.copy()
        bcs = cases.farfield_bcs(geometry, background)
        sponge_cfg = cases.SpongeConfig(
            top_depth=_preset(cfg, "sponge_top_depth") or 4.0e3,
            lateral_width=_preset(cfg, "sponge_lateral_width") or 10.0e3,
            sigma_max=(_preset(cfg, "sigma_max")
                       if _preset(cfg, "sigma_max") is not None else 0.05))
        sigma = cases.sponge_sigma(geometry, sponge_cfg, domain,
                                   lateral_axes=tuple(range(dim - 1)))
        sponge = (sigma, background) if sponge_cfg.sigma_max > 0 else None
        split = SplitOperators(ops, model, bcs, sponge=sponge)
        ctx = RunContext(cfg, mesh, geometry, ops, model, split, initial,
                         _solver_cfg(cfg), pool, timer,
                         partition_leaves(mesh, cfg.workers),
                         hill_cfg=hill_cfg, background=background)
        return ctx

    if preset == "hydrostatic-rest":
        domain = (60.0e3, 16.0e3)
        hill_cfg = cases.HillCaseConfig(domain=domain,
                                        u_bar=_preset(cfg, "u_bar") or 0.0)
        if _preset(cfg, "n_buoyancy") is not None:
            hill_cfg = cases.replace(hill_cfg, N_buoyancy=_preset(cfg, "n_buoyancy"))
        mesh = build_case_mesh(cfg, domain)
        geometry = build_geometry(mesh, cfg.degree,
                                  geom_degree=cfg.geom_degree,
                                  n_quad_1d=cfg.quad_points)
        ops = DGOperators(geometry, pool, timer)
        model = FlowModel.dimensional(hill_cfg.constants)
        initial = project_initial_data(geometry,
                                       cases.hydrostatic_initial_state(hill_cfg))
        split = SplitOperators(ops, model, wall_everywhere(mesh))
        return RunContext(cfg, mesh, geometry, ops, model, split, initial,
                          _solver_cfg(cfg), pool, timer,
                          partition_leaves(mesh, cfg.workers),
                          hill_cfg=hill_cfg, background=initial.data.copy())

    if preset == "manufactured":
        domain = (1.0, 1.0)
        mesh = build_case_mesh(cfg, domain, periodic=(True, True))
        geometry = build_geometry(mesh, cfg.degree,
                                  n_quad_1d=cfg.quad_points)
        ops = DGOperators(geometry, pool, timer)
        model = FlowModel(gravity=0.0)
        mcfg = cases.ManufacturedConfig()
        coords = geometry.node_coords

        def forcing(t):
            return np.moveaxis(cases.manufactured_forcing(coords, t, mcfg), 2, 1)

        split = SplitOperators(ops, model, bcs=None, forcing=forcing)
        initial = project_initial_data(
            geometry, lambda c: cases.manufactured_state(c, 0.0, mcfg))
        return RunContext(cfg, mesh, geometry, ops, model, split, initial,
                          _solver_cfg(cfg), pool, timer,
                          partition_leaves(mesh, cfg.workers),
                          exact_solution=lambda t, c: cases.manufactured_state(c, t, mcfg))

    raise ConfigurationError(f"unknown preset {preset!r}")


def _solver_cfg(cfg):
    return ImplicitSolveConfig(
        fp_tol=cfg.fp_tol, fp_max_iter=cfg.fp_max_iter,
        krylov_tol=cfg.krylov_tol, krylov_restart=cfg.krylov_restart,
        krylov_max_iter=cfg.krylov_max_iter,
        preconditioner=cfg.preconditioner)


@dataclass
class RunResult:
    config: CaseConfig
    final: StateField
    diagnostics: list
    timer_report: object
    courant: object
    wall_time: float
    output_dir: str
    context: RunContext

    @property
    def diagnostics_text(self):
        return "\n".join(self.diagnostics) + "\n"


def _fmt(x):
    return repr(float(x))


def run(cfg, probes=(), write_outputs=True):
    """Execute one configured run; returns a RunResult.

    probes: optional (name, node_mask) pairs; max |w| over each masked node
    set is added as a diagnostics column (deterministic).
    """
    t_wall0 = time.perf_counter()
    ctx = setup_run(cfg)
    tableau = ars222()
    dt = _preset(cfg, "dt")
    t_final = _preset(cfg, "t_final")
    if dt is None or t_final is None:
        raise ConfigurationError("dt and t_final must be set")
    outdir = cfg.resolved_output_dir()
    if write_outputs:
        os.makedirs(outdir, exist_ok=True)
        save_config(cfg, os.path.join(outdir, "resolved-config.ini"))
        with open(os.path.join(outdir, "mesh.txt"), "w") as f:
            f.write(dump_mesh(ctx.mesh))

    d = ctx.mesh.dim
    rows = ["step,t,mass,energy,max_w,fp_iters,krylov_iters,mass_flux_accum"
            + "".join(f",max_w_{name}" for name, _ in probes)]
    mass_flux_accum = [0.0]
    base_totals = ctx.ops.integrate_conserved(ctx.initial.data)

    def diagnostics_cb(step, t, data, stats):
        if stats is not None:
            mass_flux_accum[0] += stats.mass_rate * diagnostics_cb.last_h
        if cfg.diagnostics_every and step % cfg.diagnostics_every == 0:
            totals = ctx.ops.integrate_conserved(data)
            w = data[:, d, :] / data[:, 0, :]
            fp = sum(stats.fp_iters) if stats else 0
            kry = sum(stats.krylov_iters) if stats else 0
            row = [str(step), _fmt(t), _fmt(totals[0]), _fmt(totals[d + 1]),
                   _fmt(np.abs(w).max()), str(fp), str(kry),
                   _fmt(mass_flux_accum[0])]
            for name, mask in probes:
                row.append(_fmt(np.abs(w[mask]).max() if mask.any() else 0.0))
            rows.append(",".join(row))

    diagnostics_cb.last_h = dt

    snap_paths = []

    def output_cb(step, t, data, stats):
        if write_outputs and cfg.output_every and step % cfg.output_every == 0:
            path = os.path.join(outdir, f"snapshot-{step:06d}")
            save_snapshot(path + ".npz", ctx, data, t)
            write_field_vtk(StateField(data, ctx.initial.mesh_id, cfg.degree),
                            ctx.geometry, path + ".vtk", model=ctx.model,
                            time_value=t)
            snap_paths.append(path)

    precond = _PrecondCache()

    def stepper(data, t, h):
        diagnostics_cb.last_h = h
        return imex_step(data, t, h, tableau, ctx.split, ctx.solve_cfg,
                         timer=ctx.timer, precond=precond)

    courant = courant_numbers(ctx.initial.data, ctx.geometry, dt, ctx.model)
    final_data, report = run_time_loop(
        ctx.initial.data.copy(), dt, t_final, stepper,
        callbacks=(diagnostics_cb, output_cb), timer=ctx.timer)
    wall = time.perf_counter() - t_wall0

    final = StateField(final_data, ctx.initial.mesh_id, cfg.degree)
    if write_outputs:
        with open(os.path.join(outdir, "diagnostics.csv"), "w") as f:
            f.write("\n".join(rows) + "\n")
        with open(os.path.join(outdir, "timings.csv"), "w") as f:
            f.write(report.csv_header() + "\n")
            f.write("\n".join(report.csv_rows()) + "\n")
            f.write(f"total,{report.total:.9f}\n")
        save_snapshot(os.path.join(outdir, "final.npz"), ctx, final_data,
                      t_final)
        with open(os.path.join(outdir, "courant.txt"), "w") as f:
            f.write(str(courant) + "\n")
    ctx.pool.close()
    return RunResult(cfg, final, rows, report, courant, wall, outdir, ctx)


def save_snapshot(path, ctx, data, t):
    np.savez_compressed(
        path, data=data, t=t, degree=ctx.config.degree,
        mesh_dump=dump_mesh(ctx.mesh), preset=ctx.config.preset,
        config=dump_config(ctx.config))


# ------------------------------------------------------------------ slicing

_DERIVED_VARS = ("rho", "u", "v", "w", "p", "T", "rhoE")


def _derived(data_point, var, model, dim):
    rho = data_point[0]
    if var == "rho":
        return rho
    if var == "rhoE":
        return data_point[dim + 1]
    if var == "u":
        return data_point[1] / rho
    if var == "v" and dim == 3:
        return data_point[2] / rho
    if var == "w":
        return data_point[dim] / rho
    W = conserved_to_primitive(data_point, model, var_axis=0, check=False)
    if var == "p":
        return W.p
    if var == "T":
        return W.T
    raise UsageError(f"unknown slice variable {var!r}; options: {_DERIVED_VARS}")


def locate_point(geometry, point, tol=1e-9):
    """(leaf index, reference coords) of the leaf containing the physical
    point; points on shared element boundaries resolve to the lowest leaf
    index.  Returns None outside the domain."""
    mesh = geometry.mesh
    d = mesh.dim
    x = np.asarray(point, dtype=float)
    surf = geometry.surface
    if surf is not None:
        h = _surface_height_at(surf, x[:d - 1])
    else:
        h = 0.0
    zt = geometry.z_top
    denom = 1.0 - h / zt
    zbox = (x[-1] - h) / denom if denom > 0 else np.inf
    xbox = np.concatenate([x[:d - 1], [zbox]])
    hits = []
    lookup = mesh._lookup
    for level in range(mesh.max_level + 1):
        size = mesh.leaf_size(level)
        base = np.floor(xbox / size).astype(int)
        offsets = [(0,)] * d
        cand_ranges = []
        for a in range(d):
            near = abs(xbox[a] / size[a] - round(xbox[a] / size[a])) < tol
            cand_ranges.append((base[a] - 1, base[a]) if near else (base[a],))
        for cand in np.stack(np.meshgrid(*cand_ranges, indexing="ij"),
                             axis=-1).reshape(-1, d):
            key = (level, tuple(int(c) for c in cand))
            idx = lookup.get(key)
            if idx is None:
                continue
            lo = size * cand
            xi = (xbox - lo) / size
            if np.all(xi >= -tol) and np.all(xi <= 1 + tol):
                hits.append((idx, np.clip(xi, 0.0, 1.0)))
    if not hits:
        return None
    hits.sort(key=lambda h: h[0])
    return hits[0]


def _surface_height_at(surf, xh):
    cols = []
    locs = []
    for a in range(surf.hd):
        c = int(np.clip(np.floor(xh[a] / surf.col_dx[a]), 0,
                        surf.root_counts[a] - 1))
        cols.append(c)
        locs.append(xh[a] / surf.col_dx[a] - c)
    if surf.hd == 1:
        L = lagrange_eval_matrix(surf.nodes, np.array([locs[0]]))
        return float(L @ surf.values[cols[0]])
    Lx = lagrange_eval_matrix(surf.nodes, np.array([locs[0]]))
    Ly = lagrange_eval_matrix(surf.nodes, np.array([locs[1]]))
    return float(Lx @ surf.values[cols[0], cols[1]] @ Ly.T)


def evaluate_at_points(field, geometry, points, var="w", model=None):
    """Sample a (possibly derived) variable at physical points by in-element
    polynomial evaluation; NaN outside the domain."""
    model = model or FlowModel.dimensional()
    basis = geometry.basis
    nodes = basis.nodes_1d
    d = geometry.mesh.dim
    out = np.full(len(points), np.nan)
    for i, pt in enumerate(points):
        hit = locate_point(geometry, pt)
        if hit is None:
            continue
        idx, xi = hit
        mats = [lagrange_eval_matrix(nodes, np.array([xi[a]]))
                for a in range(d)]
        w = mats[0]
        for m in mats[1:]:
            w = np.kron(w, m)
        vals = field.data[idx] @ w.ravel()
        out[i] = _derived(vals, var, model, d)
    return out


def extract_slice(field, geometry, plane, var="w", n_samples=(201, 81),
                  model=None):
    """Uniform sample grid of a variable on an axis-aligned plane.

    plane: (axis_name, coordinate), e.g. ("y", 20e3) for an x-z slice or
    ("z", 800.0) for an x-y slice.  Returns (axes_coords, values) with
    values shaped like the grid.
    """
    mesh = geometry.mesh
    d = mesh.dim
    names = {"x": 0, "y": 1 if d == 3 else None, "z": d - 1}
    axis = names.get(plane[0])
    if axis is None:
        raise UsageError(f"plane axis {plane[0]!r} not in this mesh")
    coord = float(plane[1])
    if not 0.0 <= coord <= mesh.extents[axis]:
        raise UsageError(f"plane {plane} lies outside the domain")
    other = [a for a in range(d) if a != axis]
    grids = [np.linspace(0.0, mesh.extents[a], n_samples[i])
             for i, a in enumerate(other)]
    if len(other) == 1:
        pts = np.zeros((len(grids[0]), d))
        pts[:, other[0]] = grids[0]
        pts[:, axis] = coord
        vals = evaluate_at_points(field, geometry, pts, var, model)
        return grids, vals
    G0, G1 = np.meshgrid(grids[0], grids[1], indexing="ij")
    pts = np.zeros((G0.size, d))
    pts[:, other[0]] = G0.ravel()
    pts[:, other[1]] = G1.ravel()
    pts[:, axis] = coord
    vals = evaluate_at_points(field, geometry, pts, var, model)
    return grids, vals.reshape(G0.shape)


def load_snapshot(path):
    """(StateField, geometry, model, t) back from a saved snapshot."""
    from .config import load_config
    from .mesh import restore_mesh
    blob = np.load(path, allow_pickle=False)
    cfg = load_config(str(blob["config"]))
    mesh = restore_mesh(str(blob["mesh_dump"]))
    ctx_cfg = with_overrides(cfg, workers=1)
    ctx = setup_run(ctx_cfg)
    if dump_mesh(ctx.mesh) != str(blob["mesh_dump"]):
        raise UsageError("snapshot mesh does not match its config")
    fld = StateField(np.array(blob["data"]), ctx.mesh.fingerprint,
                     int(blob["degree"]))
    return fld, ctx.geometry, ctx.model, float(blob["t"])


# ------------------------------------------------------- scaling harness

@dataclass
class ScalingRow:
    workers: int
    n_elements: int
    dofs_per_var: int
    wall: float
    blocks: dict
    speedup: float = 0.0
    efficiency: float = 0.0


def _weak_factors(ratio, dim):
    k = int(round(np.log2(ratio)))
    if 2 ** k != ratio:
        raise ConfigurationError("weak-scaling worker ratios must be powers of 2")
    f = [1] * dim
    for i in range(k):
        f[i % dim] *= 2
    return f


def scaling_harness(base_cfg, worker_counts, mode="strong", out_path=None):
    """Strong or weak scaling over worker counts; returns ScalingRow list.

    Runs are fully independent (fresh mesh and fields each time).  In weak
    mode the root element counts grow with P so the unknowns per worker stay
    near the base value (uniform meshes only).
    """
    if list(worker_counts) != sorted(worker_counts) or worker_counts[0] < 1:
        raise ConfigurationError("worker counts must be ascending and >= 1")
    if mode not in ("strong", "weak"):
        raise ConfigurationError(f"unknown scaling mode {mode!r}")
    rows = []
    for P in worker_counts:
        cfg_p = with_overrides(base_cfg, workers=P, output_dir=None)
        if mode == "weak":
            if base_cfg.refine:
                raise ConfigurationError("weak mode needs a uniform mesh spec")
            ratio = P // worker_counts[0]
            root0 = _preset(base_cfg, "root")
            f = _weak_factors(ratio, len(root0))
            cfg_p = with_overrides(cfg_p,
                                   root=tuple(c * m for c, m in zip(root0, f)))
        try:
            res = run(cfg_p, write_outputs=False)
            rows.append(ScalingRow(P, res.context.mesh.n_leaves,
                                   res.context.dofs_per_variable, res.wall,
                                   dict(res.timer_report.blocks)))
        except Exception as err:      # record the failure, keep the table
            rows.append(ScalingRow(P, 0, 0, float("nan"),
                                   {"error": str(err)}))
    base = rows[0]
    for row in rows:
        if np.isfinite(row.wall) and np.isfinite(base.wall):
            if mode == "strong":
                row.speedup = base.wall / row.wall * base.workers
                row.efficiency = row.speedup / row.workers
            else:
                row.speedup = base.wall / row.wall
                row.efficiency = base.wall / row.wall
    if out_path:
        hdr = ("workers,n_elements,dofs_per_var,wall_s,speedup,efficiency,"
               + ",".join(f"t_{b}" for b in
                          ("explicit_residual", "implicit_fixed_point",
                           "krylov", "ghost_exchange", "output")))
        lines = [hdr]
        for r in rows:
            lines.append(
                f"{r.workers},{r.n_elements},{r.dofs_per_var},{r.wall:.6f},"
                f"{r.speedup:.4f},{r.efficiency:.4f},"
                + ",".join(f"{r.blocks.get(b, 0.0):.6f}" for b in
                           ("explicit_residual", "implicit_fixed_point",
                            "krylov", "ghost_exchange", "output")))
        with open(out_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return rows


@dataclass
class ComparisonReport:
    wall_uniform: float
    wall_nonconforming: float
    dofs_uniform: int
    dofs_nonconforming: int
    max_w_uniform: float
    max_dw: float
    probe_box: list

    @property
    def time_ratio(self):
        return self.wall_nonconforming / self.wall_uniform

    @property
    def dof_ratio(self):
        return self.dofs_nonconforming / self.dofs_uniform

    @property
    def agreement(self):
        return self.max_dw / self.max_w_uniform if self.max_w_uniform else 0.0


def finest_region_box(mesh, margin=0.0):
    """Bounding box of the finest-level leaves."""
    views = [mesh.leaf_view(i) for i in range(mesh.n_leaves)
             if mesh.leaves[i][0] == mesh.max_level]
    lo = np.min([v.lo for v in views], axis=0) + margin
    hi = np.max([v.hi for v in views], axis=0) - margin
    return lo, hi


def efficiency_comparison(cfg_uniform, cfg_nonconforming, n_probe=(161, 49),
                          probes=()):
    """Run the uniform/non-conforming pair and compare cost and solution.

    Both configs must share the case, degree, dt, t_final and finest
    resolution.  The solution-agreement metric is max |w_u - w_n| over a
    probe grid inside the non-conforming mesh's finest-level region,
    relative to max |w_u| there.
    """
    for key in ("preset", "degree"):
        if getattr(cfg_uniform, key) != getattr(cfg_nonconforming, key):
            raise UsageError(f"configs disagree on {key}")
    for key in ("dt", "t_final"):
        if _preset(cfg_uniform, key) != _preset(cfg_nonconforming, key):
            raise UsageError(f"configs disagree on {key}")
    res_u = run(cfg_uniform, probes=probes, write_outputs=False)
    res_n = run(cfg_nonconforming, probes=probes, write_outputs=False)
    mesh_u, mesh_n = res_u.context.mesh, res_n.context.mesh
    h_u = mesh_u.leaf_size(mesh_u.max_level)
    h_n = mesh_n.leaf_size(mesh_n.max_level)
    if not np.allclose(h_u, h_n, rtol=1e-12):
        raise UsageError(
            f"finest resolutions differ: {h_u} vs {h_n}")
    lo, hi = finest_region_box(mesh_n, margin=1.0)
    grids = [np.linspace(lo[a], hi[a], n_probe[a]) for a in range(mesh_n.dim)]
    mg = np.meshgrid(*grids, indexing="ij")
    pts = np.stack([g.ravel() for g in mg], axis=-1)
    w_u = evaluate_at_points(res_u.final, res_u.context.geometry, pts, "w",
                             res_u.context.model)
    w_n = evaluate_at_points(res_n.final, res_n.context.geometry, pts, "w",
                             res_n.context.model)
    ok = np.isfinite(w_u) & np.isfinite(w_n)
    report = ComparisonReport(
        wall_uniform=res_u.wall, wall_nonconforming=res_n.wall,
        dofs_uniform=res_u.context.dofs_per_variable,
        dofs_nonconforming=res_n.context.dofs_per_variable,
        max_w_uniform=float(np.abs(w_u[ok]).max()),
        max_dw=float(np.abs(w_u[ok] - w_n[ok]).max()),
        probe_box=[lo.tolist(), hi.tolist()])
    return report, res_u, res_n
