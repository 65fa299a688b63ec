"""IMEX Runge-Kutta time stepping with implicit acoustics.

Splitting: the continuity equation and all advective fluxes (plus gravity,
sponge damping and any manufactured forcing) are explicit with a Rusanov
flux whose dissipation speed is the local flow speed; the pressure gradient
in the momentum equations and the (rho e + p) u divergence in the energy
equation are implicit with centered fluxes.

Each implicit stage solves the nonlinear coupled momentum/energy system by
a fixed-point loop on the pressure: the specific enthalpy and the kinetic
energy are frozen at the current iterate, stage momentum is eliminated into
the stage energy equation, and the resulting non-symmetric Helmholtz-like
system for the total-energy unknown is solved matrix-free with GMRES.
Momentum follows by back-substitution, then the frozen coefficients are
updated until the relative pressure increment drops below tolerance.

The default tableau is ARS(2,2,2) (gamma = 1 - 1/sqrt(2)), second order,
with an L-stable, stiffly accurate implicit part.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, SolverError
from .krylov import block_jacobi_preconditioner, element_coloring, gmres
from .physics import conserved_to_primitive, gravity_source
from .timing import NullTimer


@dataclass(frozen=True)
class ButcherTableau:
    """Paired explicit/implicit (DIRK) Runge-Kutta coefficients."""

    name: str
    a_ex: np.ndarray
    b_ex: np.ndarray
    a_im: np.ndarray
    b_im: np.ndarray

    def __post_init__(self):
        s = self.stages
        for M in (self.a_ex, self.a_im):
            if M.shape != (s, s):
                raise ConfigurationError("tableau matrices must be s x s")
        if np.any(np.triu(self.a_ex) != 0.0):
            raise ConfigurationError("explicit tableau must be strictly lower")
        if np.any(np.triu(self.a_im, 1) != 0.0):
            raise ConfigurationError("implicit tableau must be lower triangular")
        for b in (self.b_ex, self.b_im):
            if abs(b.sum() - 1.0) > 1e-13:
                raise ConfigurationError("weights must sum to 1")
        for b, c in ((self.b_ex, self.c_ex), (self.b_im, self.c_im)):
            if abs(b @ c - 0.5) > 1e-13:
                raise ConfigurationError("second-order condition b.c = 1/2 fails")
        if np.max(np.abs(self.c_ex - self.c_im)) > 1e-13:
            raise ConfigurationError("explicit/implicit abscissae must agree")

    @property
    def stages(self):
        return len(self.b_ex)

    @property
    def c_ex(self):
        return self.a_ex.sum(axis=1)

    @property
    def c_im(self):
        return self.a_im.sum(axis=1)

    @property
    def stiffly_accurate(self):
        return (np.allclose(self.a_im[-1], self.b_im, atol=1e-14)
                and np.allclose(self.a_ex[-1], self.b_ex, atol=1e-14))


def ars222():
    """ARS(2,2,2): classical second-order IMEX pair, L-stable implicit part."""
    g = 1.0 - 1.0 / np.sqrt(2.0)
    delta = 1.0 - 1.0 / (2.0 * g)
    a_ex = np.array([[0.0, 0.0, 0.0],
                     [g, 0.0, 0.0],
                     [delta, 1.0 - delta, 0.0]])
    b_ex = np.array([delta, 1.0 - delta, 0.0])
    a_im = np.array([[0.0, 0.0, 0.0],
                     [0.0, g, 0.0],
                     [0.0, 1.0 - g, g]])
    b_im = np.array([0.0, 1.0 - g, g])
    return ButcherTableau("ARS(2,2,2)", a_ex, b_ex, a_im, b_im)


TABLEAUX = {"ars222": ars222}


@dataclass(frozen=True)
class ImplicitSolveConfig:
    fp_tol: float = 1e-6           # relative pressure-increment tolerance
    fp_max_iter: int = 10
    krylov_tol: float = 1e-8
    krylov_restart: int = 30
    krylov_max_iter: int = 1000
    preconditioner: str = "none"   # 'none' | 'block_jacobi'
    precond_refresh: int = 20      # rebuild cadence, in implicit solves

    def __post_init__(self):
        for t in (self.fp_tol, self.krylov_tol):
            if not 0.0 < t < 1.0:
                raise ConfigurationError(f"tolerance {t} outside (0,1)")
        for n in (self.fp_max_iter, self.krylov_restart, self.krylov_max_iter):
            if n < 1:
                raise ConfigurationError("iteration caps must be >= 1")
        if self.preconditioner not in ("none", "block_jacobi"):
            raise ConfigurationError(
                f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class StepStats:
    fp_iters: list = field(default_factory=list)       # per implicit stage
    krylov_iters: list = field(default_factory=list)   # per linear solve
    pressure_increments: list = field(default_factory=list)
    mass_rate: float = 0.0      # b-weighted continuity boundary-flux sum


class SplitOperators:
    """Explicit and implicit semi-discrete residuals over the DG kernels.

    Residuals are in nodal dU/dt form (mass matrix already inverted).
    sponge: optional (sigma, background) pair of nodal arrays; forcing:
    optional callable t -> nodal source array.
    """

    def __init__(self, ops, model, bcs=None, sponge=None, forcing=None):
        self.ops = ops
        self.geometry = ops.geometry
        self.model = model
        self.bcs = bcs
        self.sponge = sponge
        self.forcing = forcing
        d = ops.dim
        self.dim = d
        self._last_mass_rate = 0.0

    def explicit_residual(self, data, t=0.0):
        ops = self.ops
        d = self.dim
        dual = ops.divergence_advective(data, self.model, self.bcs)
        self._last_mass_rate = -float(dual[:, 0, :].sum())
        R = -self.geometry.apply_mass_inverse(dual)
        W = conserved_to_primitive(data, self.model, var_axis=1, check=False)
        S = np.zeros_like(data)
        gravity_source(W, out=np.moveaxis(S, 1, 0))
        R += S
        if self.sponge is not None:
            sigma, background = self.sponge
            R[:, 1:] -= sigma[:, None, :] * (data[:, 1:] - background[:, 1:])
        if self.forcing is not None:
            R += self.forcing(t)
        return R

    def implicit_residual(self, data):
        """Pressure-gradient and enthalpy-divergence terms at the given
        state (used for splitting checks; inside a step the stage value is
        reconstructed algebraically from the solved system)."""
        ops = self.ops
        d = self.dim
        W = conserved_to_primitive(data, self.model, var_axis=1, check=False)
        h = W.e + W.p / W.rho
        R = np.zeros_like(data)
        gd = ops.gradient_scalar(W.p, self.model, self.bcs)
        R[:, 1:1 + d] = -self.model.inv_mach_sq \
            * self.geometry.apply_mass_inverse(gd)
        dv = ops.divergence_hv(data[:, 1:1 + d], h, self.model, self.bcs)
        R[:, 1 + d] = -self.geometry.apply_mass_inverse(dv)[:, 0]
        return R

    def full_residual(self, data, t=0.0):
        return self.explicit_residual(data, t) + self.implicit_residual(data)

    # -- implicit-stage machinery -----------------------------------------

    def frozen_coefficients(self, data):
        """(h, K) nodal arrays at the linearization state: specific enthalpy
        and kinetic energy density rho*k."""
        W = conserved_to_primitive(data, self.model, var_axis=1, check=False)
        h = W.e + W.p / W.rho
        K = W.rho * W.k
        return h, K

    def energy_affine_map(self, a_dt, h, K, m_e, e_e):
        """The affine map F with fixed point (rho E)* = F((rho E)*):

            F(x) = e_E - a dt * Div(h (m_E - a dt /M^2 * Grad(p(x))))
            p(x) = (gamma - 1)(x - M^2 K)

        Returns (F, grad_p) where grad_p(x) is the nodal pressure gradient
        used again for the momentum back-substitution.
        """
        ops = self.ops
        geom = self.geometry
        model = self.model
        gm1 = model.gamma - 1.0
        kf = model.kinetic_factor

        div_hv = ops.prepare_divergence_hv(h, model, self.bcs)

        def pressure(x):
            return gm1 * (x - kf * K)

        def grad_p(x):
            gd = ops.gradient_scalar(pressure(x), model, self.bcs)
            return geom.apply_mass_inverse(gd)

        def F(x):
            mom = m_e - a_dt * model.inv_mach_sq * grad_p(x)
            return e_e - a_dt * geom.apply_mass_inverse(div_hv(mom))[:, 0]

        return F, grad_p


def build_helmholtz_action(split, a_dt, lin_state, m_e=None, e_e=None):
    """Homogeneous action of the linear energy/pressure stage operator.

    a_dt = 0 reduces to the identity.  The operator is produced as the
    difference of the affine stage map against its value at zero, so any
    boundary data drops out and action(0) = 0 exactly.
    """
    d = split.dim
    if m_e is None:
        m_e = lin_state[:, 1:1 + d].copy()
    if e_e is None:
        e_e = lin_state[:, 1 + d].copy()
    h, K = split.frozen_coefficients(lin_state)
    F, _ = split.energy_affine_map(a_dt, h, K, m_e, e_e)
    shape = e_e.shape
    F0 = F(np.zeros(shape))

    def action(xflat):
        x = xflat.reshape(shape)
        return (x - (F(x) - F0)).ravel()

    return action


class _PrecondCache:
    def __init__(self):
        self.apply = None
        self.age = 10 ** 9
        self.coloring = None


def imex_step(data, t, dt, tableau, split, cfg, timer=None, precond=None):
    """One IMEX-RK step; returns (new_data, StepStats).

    data: (n_el, n_var, n_nodes) conserved nodal array.
    """
    timer = timer or NullTimer()
    d = split.dim
    s = tableau.stages
    geom = split.geometry
    KE = [None] * s
    KI = [None] * s
    stats = StepStats()
    U_stage = data

    for l in range(s):
        acc = data.copy()
        for j in range(l):
            if tableau.a_ex[l, j] != 0.0:
                acc += (dt * tableau.a_ex[l, j]) * KE[j]
            if tableau.a_im[l, j] != 0.0 and KI[j] is not None:
                acc += (dt * tableau.a_im[l, j]) * KI[j]
        a_ll = tableau.a_im[l, l]
        if a_ll == 0.0:
            U_stage = acc
            KI[l] = None
        else:
            with timer.block("implicit_fixed_point"):
                U_stage, fp_iters = _solve_implicit_stage(
                    acc, U_stage, dt * a_ll, split, cfg, stats, timer, precond)
            KI[l] = (U_stage - acc) / (dt * a_ll)
            stats.fp_iters.append(fp_iters)
        conserved_to_primitive(U_stage, split.model, var_axis=1, check=True,
                               where=f"stage {l} at t={t}")
        needs_ke = (tableau.b_ex[l] != 0.0
                    or np.any(tableau.a_ex[l + 1:, l] != 0.0))
        if needs_ke:
            with timer.block("explicit_residual"):
                KE[l] = split.explicit_residual(U_stage, t + tableau.c_ex[l] * dt)
            stats.mass_rate += tableau.b_ex[l] * split._last_mass_rate
    if tableau.stiffly_accurate:
        return U_stage, stats
    out = data.copy()
    for l in range(s):
        if tableau.b_ex[l] != 0.0:
            out += (dt * tableau.b_ex[l]) * KE[l]
        if tableau.b_im[l] != 0.0 and KI[l] is not None:
            out += (dt * tableau.b_im[l]) * KI[l]
    return out, stats


def _solve_implicit_stage(acc, guess, a_dt, split, cfg, stats, timer, precond):
    """Pressure fixed point for one DIRK stage.

    acc holds the known stage contributions (and the already-final stage
    density, since continuity is explicit); guess provides the starting
    iterate for the frozen coefficients.
    """
    d = split.dim
    model = split.model
    geom = split.geometry
    gm1 = model.gamma - 1.0
    m_e = acc[:, 1:1 + d].copy()
    e_e = acc[:, 1 + d].copy()
    iterate = acc.copy()
    # the stage density is known; coefficient freeze starts from the guess
    iterate[:, 1:] = guess[:, 1:]
    W = conserved_to_primitive(iterate, model, var_axis=1, check=False)
    p_old = W.p.copy()
    x = iterate[:, 1 + d].copy()

    converged = False
    for k in range(cfg.fp_max_iter):
        h, K = split.frozen_coefficients(iterate)
        F, grad_p = split.energy_affine_map(a_dt, h, K, m_e, e_e)
        shape = x.shape
        F0 = F(np.zeros(shape))

        def action(v):
            xv = v.reshape(shape)
            return (xv - (F(xv) - F0)).ravel()

        M = None
        if cfg.preconditioner == "block_jacobi" and precond is not None:
            if precond.apply is None or precond.age >= cfg.precond_refresh:
                if precond.coloring is None:
                    precond.coloring = element_coloring(split.ops.mesh)
                precond.apply = block_jacobi_preconditioner(
                    action, shape[0], shape[1], precond.coloring)
                precond.age = 0
            precond.age += 1
            M = precond.apply
        with timer.block("krylov"):
            sol, kstats = gmres(action, F0.ravel(), x0=x.ravel(),
                                tol_rel=cfg.krylov_tol,
                                restart=cfg.krylov_restart,
                                max_iter=cfg.krylov_max_iter,
                                preconditioner=M)
        stats.krylov_iters.append(kstats.iterations)
        if not kstats.converged:
            raise SolverError(
                f"GMRES stalled: residual {kstats.residual:.3e} after "
                f"{kstats.iterations} iterations", stats=kstats)
        x = sol.reshape(shape)
        p_new = gm1 * (x - model.kinetic_factor * K)
        mom = m_e - a_dt * model.inv_mach_sq * grad_p(x)
        iterate[:, 1:1 + d] = mom
        iterate[:, 1 + d] = x
        dp = np.linalg.norm(p_new - p_old) / max(np.linalg.norm(p_old), 1e-300)
        stats.pressure_increments.append(dp)
        p_old = p_new
        if dp <= cfg.fp_tol:
            converged = True
            break
    if not converged:
        raise SolverError(
            f"pressure fixed point did not converge: last increment "
            f"{stats.pressure_increments[-1]:.3e} after {cfg.fp_max_iter} "
            "iterations", stats=stats)
    return iterate, k + 1


def run_time_loop(data, dt, t_final, stepper, callbacks=(), timer=None,
                  t0=0.0):
    """Advance with fixed dt, landing exactly on t_final with a final
    partial step.  callbacks are called as cb(step_index, t, data, stats)
    after each step; step 0 is called once with the initial state."""
    if dt <= 0 or t_final <= t0:
        raise ConfigurationError("need dt > 0 and t_final > t0")
    timer = timer or NullTimer()
    per_step = []
    t = t0
    step = 0
    with timer.block("output"):
        for cb in callbacks:
            cb(step, t, data, None)
    n_full = int(np.floor((t_final - t0) / dt + 1e-12))
    remainder = (t_final - t0) - n_full * dt
    if remainder < 1e-12 * dt:
        remainder = 0.0
    n_steps = n_full + (1 if remainder else 0)
    for step in range(1, n_steps + 1):
        h = dt if step <= n_full else remainder
        try:
            data, stats = stepper(data, t, h)
        except Exception as err:
            raise SolverError(f"step {step} at t={t:.6g} failed: {err}") \
                from err
        t = t0 + step * dt if step < n_steps else t_final
        with timer.block("output"):
            for cb in callbacks:
                cb(step, t, data, stats)
        per_step.append(timer.step_snapshot())
    return data, timer.report(per_step)
