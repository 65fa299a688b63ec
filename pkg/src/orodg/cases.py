"""Benchmark cases and boundary machinery.

The flagship case is stratified flow over a bell-shaped hill: domain
(0,60)x(0,40)x(0,16) km (y dropped in 2D), hill half-width 1 km and height
400 m at the domain center, buoyancy frequency N = 0.01 1/s, background
wind 10 m/s, ideal gas with p_ref = 1e5 Pa and T_ref = 293.15 K.  Wall
boundary at the bottom; top and lateral boundaries use a far-field ghost
state plus a Rayleigh sponge relaxing momentum and energy toward the
discrete background (the stand-in for true non-reflecting conditions).

Also here: a flat hydrostatic-rest configuration (walls all around) and a
gravity-free space-time-periodic manufactured solution with analytic
forcing for convergence tests.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .boundary import BoundaryCondition, mirror_state
from .dgops import _mm
from .errors import ConfigurationError
from .physics import CONST, FlowModel, PhysicalConstants

apply_wall_bc = mirror_state


@dataclass(frozen=True)
class HillCaseConfig:
    h_c: float = 400.0            # m
    a_c: float = 1000.0           # m
    x_c: float = 30.0e3           # m
    y_c: float = 20.0e3           # m (3D only)
    N_buoyancy: float = 0.01      # 1/s
    u_bar: float = 10.0           # m/s
    p_ref: float = 1.0e5          # Pa
    T_ref: float = 293.15         # K
    domain: tuple = (60.0e3, 40.0e3, 16.0e3)
    t_final: float = 3600.0       # s
    dt: float = 2.0               # s
    constants: PhysicalConstants = CONST

    def __post_init__(self):
        if self.a_c <= 0:
            raise ConfigurationError("hill half-width must be positive")
        if not 0 <= self.h_c < self.domain[-1]:
            raise ConfigurationError("hill height must sit inside the domain")

    @property
    def dim(self):
        return len(self.domain)

    @property
    def rho_ref(self):
        return self.p_ref / (self.constants.R * self.T_ref)


@dataclass(frozen=True)
class SpongeConfig:
    top_depth: float = 4.0e3      # m
    lateral_width: float = 10.0e3  # m
    sigma_max: float = 0.05       # 1/s
    # ramp: sigma = sigma_max * sin^2(pi/2 * normalized depth)

    def __post_init__(self):
        if self.sigma_max < 0 or self.top_depth < 0 or self.lateral_width < 0:
            raise ConfigurationError("sponge parameters must be >= 0")


def hill_profile(x, y=None, cfg=HillCaseConfig()):
    """Bell-shaped mountain h_c / [1 + ((x-x_c)/a_c)^2 + ((y-y_c)/a_c)^2]^1.5;
    the y term is dropped in 2D."""
    r2 = ((np.asarray(x, dtype=float) - cfg.x_c) / cfg.a_c) ** 2
    if y is not None:
        r2 = r2 + ((np.asarray(y, dtype=float) - cfg.y_c) / cfg.a_c) ** 2
    return cfg.h_c / (1.0 + r2) ** 1.5


def hydrostatic_state(z, cfg=HillCaseConfig()):
    """Stratified hydrostatic background: pressure and density profiles of a
    constant-buoyancy-frequency atmosphere,

        p   = p_ref {1 - (g^2/N^2) Gamma (rho_ref/p_ref) [1 - e^(-N^2 z/g)]}^(1/Gamma)
        rho = rho_ref (p/p_ref)^(1/gamma) e^(-N^2 z/g),

    an exact pair: dp/dz = -rho g pointwise.  (The g^2/N^2 prefactor is the
    dimensionally consistent one: (g^2/N^2)(rho_ref/p_ref) is a pure number.)

    Returns (p, rho, u_bar).  Raises if the domain is tall enough to push the
    pressure bracket non-positive.
    """
    c = cfg.constants
    z = np.asarray(z, dtype=float)
    Gamma = c.Gamma
    N2_over_g = cfg.N_buoyancy ** 2 / c.g
    decay = np.exp(-N2_over_g * z)
    bracket = 1.0 - (c.g ** 2 / cfg.N_buoyancy ** 2) * Gamma \
        * (cfg.rho_ref / cfg.p_ref) * (1.0 - decay)
    if np.any(bracket <= 0.0):
        raise ConfigurationError(
            "hydrostatic profile breaks down: domain too tall for these "
            f"constants (min bracket {bracket.min():.4g})")
    p = cfg.p_ref * bracket ** (1.0 / Gamma)
    rho = cfg.rho_ref * (p / cfg.p_ref) ** (1.0 / c.gamma) * decay
    return p, rho, cfg.u_bar


def hydrostatic_initial_state(cfg, u_bar=None):
    """Pointwise conserved-state function of the hydrostatic background."""
    ub = cfg.u_bar if u_bar is None else u_bar
    gamma = cfg.constants.gamma
    d = cfg.dim

    def f(coords):
        z = coords[..., -1]
        p, rho, _ = hydrostatic_state(z, cfg)
        out = np.zeros(coords.shape[:-1] + (d + 2,))
        out[..., 0] = rho
        out[..., 1] = rho * ub
        out[..., 1 + d] = p / (gamma - 1.0) + 0.5 * rho * ub ** 2
        return out

    return f


def sponge_sigma(geometry, sponge, extents, lateral_axes=(0,)):
    """Nodal Rayleigh damping rate: sin^2 ramps from zero at the sponge base
    to sigma_max at the top/lateral boundaries, combined by maximum."""
    coords = geometry.node_coords
    sigma = np.zeros(coords.shape[:2])
    if sponge.sigma_max == 0.0:
        return sigma
    z_top = extents[-1]
    if sponge.top_depth > 0.0:
        depth = (coords[..., -1] - (z_top - sponge.top_depth)) / sponge.top_depth
        ramp = np.clip(depth, 0.0, 1.0)
        sigma = np.maximum(sigma, np.sin(0.5 * np.pi * ramp) ** 2)
    if sponge.lateral_width > 0.0:
        for a in lateral_axes:
            w = sponge.lateral_width
            lo = np.clip((w - coords[..., a]) / w, 0.0, 1.0)
            hi = np.clip((coords[..., a] - (extents[a] - w)) / w, 0.0, 1.0)
            ramp = np.maximum(lo, hi)
            sigma = np.maximum(sigma, np.sin(0.5 * np.pi * ramp) ** 2)
    return sponge.sigma_max * sigma


def apply_sponge(residual, state, background, sigma):
    """Add -sigma (U - U_background) to the momentum and energy residuals
    (density is never damped, so the sponge cannot create or destroy mass)."""
    residual[:, 1:] -= sigma[:, None, :] * (state[:, 1:] - background[:, 1:])
    return residual


def farfield_bcs(geometry, background_data, wall_axes_sides=(("z", 0),)):
    """Boundary list: wall at the named (axis, side) pairs, far-field ghost
    traces of the discrete background everywhere else."""
    mesh = geometry.mesh
    d = mesh.dim
    axis_names = {"x": 0, "y": 1, "z": d - 1}
    walls = {(axis_names[a], s) for a, s in wall_axes_sides}
    basis = geometry.basis
    bcs = []
    for batch in mesh.topology.boundary:
        if (batch.axis, batch.side) in walls:
            bcs.append(BoundaryCondition("wall"))
            continue
        fidx = basis.face_nodes[batch.axis][batch.side]
        K = background_data.shape[1]
        vals = background_data[np.ix_(batch.leaves, np.arange(K), fidx)]
        traces = _mm(vals, basis.face_interp.T.copy())
        bcs.append(BoundaryCondition("farfield", traces))
    return bcs


# ---------------------------------------------------------------- manufactured

@dataclass(frozen=True)
class ManufacturedConfig:
    """Gravity-free space-time-periodic exact solution on the unit box.

    All fields ride a single phase theta = k (x + z) - omega t, which keeps
    the analytic forcing compact.
    """

    rho0: float = 1.0
    amp_rho: float = 0.15
    u0: float = 0.4
    amp_u: float = 0.12
    w0: float = -0.3
    amp_w: float = 0.1
    p0: float = 1.0
    amp_p: float = 0.15
    wavenumber: float = 2.0 * math.pi
    omega: float = 2.0 * math.pi * 0.7
    gamma: float = CONST.gamma


def manufactured_primitives(cfg, th):
    s, c = np.sin(th), np.cos(th)
    rho = cfg.rho0 + cfg.amp_rho * s
    ux = cfg.u0 + cfg.amp_u * c
    uz = cfg.w0 + cfg.amp_w * s
    p = cfg.p0 + cfg.amp_p * c
    drho = cfg.amp_rho * c
    dux = -cfg.amp_u * s
    duz = cfg.amp_w * c
    dp = -cfg.amp_p * s
    return (rho, ux, uz, p), (drho, dux, duz, dp)


def manufactured_state(coords, t, cfg=ManufacturedConfig()):
    """Exact conserved state at the given coordinates and time."""
    th = cfg.wavenumber * (coords[..., 0] + coords[..., 1]) - cfg.omega * t
    (rho, ux, uz, p), _ = manufactured_primitives(cfg, th)
    out = np.empty(coords.shape[:-1] + (4,))
    out[..., 0] = rho
    out[..., 1] = rho * ux
    out[..., 2] = rho * uz
    out[..., 3] = p / (cfg.gamma - 1.0) + 0.5 * rho * (ux ** 2 + uz ** 2)
    return out


def manufactured_forcing(coords, t, cfg=ManufacturedConfig()):
    """Analytic source S = dU/dt + div F(U) of the exact solution.

    Every field depends on the single phase theta, so each term is a
    theta-derivative scaled by (-omega) in time and by k in both space
    directions; the products are expanded by hand and cross-checked against
    a symbolic oracle in the test suite.
    """
    k, om = cfg.wavenumber, cfg.omega
    gm1 = cfg.gamma - 1.0
    th = k * (coords[..., 0] + coords[..., 1]) - om * t
    (rho, ux, uz, p), (drho, dux, duz, dp) = manufactured_primitives(cfg, th)

    ke = 0.5 * (ux ** 2 + uz ** 2)
    rE = p / gm1 + rho * ke
    dke = ux * dux + uz * duz
    drE = dp / gm1 + drho * ke + rho * dke

    # d/dtheta of the conserved vector and of both flux columns
    dU = (drho,
          drho * ux + rho * dux,
          drho * uz + rho * duz,
          drE)
    dFx = (drho * ux + rho * dux,
           drho * ux * ux + 2.0 * rho * ux * dux + dp,
           drho * uz * ux + rho * duz * ux + rho * uz * dux,
           (drE + dp) * ux + (rE + p) * dux)
    dFz = (drho * uz + rho * duz,
           drho * ux * uz + rho * dux * uz + rho * ux * duz,
           drho * uz * uz + 2.0 * rho * uz * duz + dp,
           (drE + dp) * uz + (rE + p) * duz)

    out = np.empty(coords.shape[:-1] + (4,))
    for i in range(4):
        out[..., i] = -om * dU[i] + k * (dFx[i] + dFz[i])
    return out


def manufactured_case(t, coords=None, cfg=ManufacturedConfig()):
    """Exact state and forcing at time t (spec-level convenience)."""
    if coords is None:
        raise ConfigurationError("manufactured_case needs sample coordinates")
    return manufactured_state(coords, t, cfg), manufactured_forcing(coords, t, cfg)
