"""Continuous-model layer: ideal-gas Euler with gravity.

Conserved layout everywhere: variable axis holds (rho, rho*u_1..rho*u_d,
rho*E).  Functions are pure and broadcast over arbitrary trailing shapes;
the variable axis is axis 1 for (n_el, n_var, n_pts) arrays and axis 0 for
single-point states.

A FlowModel carries the coefficients that differ between the dimensional
equations and their non-dimensional form (1/M^2 on the pressure gradient,
M^2 on kinetic energy in the energy flux and gravity work, 1/Fr^2 on the
gravity source), so the same kernels integrate either form.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, PositivityError


@dataclass(frozen=True)
class PhysicalConstants:
    R: float = 287.0          # J/(kg K)
    g: float = 9.81           # m/s^2
    gamma: float = 1.4

    def __post_init__(self):
        if self.R <= 0 or self.g <= 0 or self.gamma <= 1:
            raise ConfigurationError(f"non-physical constants: {self}")

    @property
    def Gamma(self):
        """(gamma - 1) / gamma, derived so there is a single source of truth."""
        return (self.gamma - 1.0) / self.gamma


CONST = PhysicalConstants()


@dataclass(frozen=True)
class ScalingNumbers:
    """Mach and Froude numbers with the reference quantities behind them."""

    length_ref: float
    velocity_ref: float
    density_ref: float
    temperature_ref: float
    constants: PhysicalConstants = CONST

    def __post_init__(self):
        for name in ("length_ref", "velocity_ref", "density_ref", "temperature_ref"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"reference {name} must be positive")

    @property
    def mach(self):
        c = self.constants
        return self.velocity_ref / np.sqrt(c.gamma * c.R * self.temperature_ref)

    @property
    def froude(self):
        return self.velocity_ref / np.sqrt(self.constants.g * self.length_ref)

    @property
    def energy_ref(self):
        """Specific-energy scale: gamma R T_ref = c_ref^2."""
        c = self.constants
        return c.gamma * c.R * self.temperature_ref

    @property
    def pressure_ref(self):
        return self.density_ref * self.energy_ref

    @property
    def time_ref(self):
        return self.length_ref / self.velocity_ref


@dataclass(frozen=True)
class FlowModel:
    """Equation-set coefficients; dimensional by default."""

    gamma: float = CONST.gamma
    R_gas: float = CONST.R
    gravity: float = CONST.g       # coefficient of rho in the momentum source
    inv_mach_sq: float = 1.0       # on the pressure gradient / pressure flux
    kinetic_factor: float = 1.0    # M^2 on rho*k in energy flux and EOS

    @classmethod
    def dimensional(cls, constants=CONST):
        return cls(gamma=constants.gamma, R_gas=constants.R,
                   gravity=constants.g, inv_mach_sq=1.0, kinetic_factor=1.0)

    @classmethod
    def nondimensional(cls, scaling):
        c = scaling.constants
        m2 = scaling.mach ** 2
        return cls(gamma=c.gamma, R_gas=1.0 / c.gamma,
                   gravity=1.0 / scaling.froude ** 2,
                   inv_mach_sq=1.0 / m2, kinetic_factor=m2)


DIMENSIONAL = FlowModel.dimensional()


@dataclass
class PrimitiveState:
    rho: np.ndarray
    u: np.ndarray            # (d, ...) velocity components
    p: np.ndarray

    model: FlowModel = field(default=DIMENSIONAL, repr=False)

    @property
    def T(self):
        return self.p / (self.rho * self.model.R_gas)

    @property
    def e(self):
        return self.p / ((self.model.gamma - 1.0) * self.rho)

    @property
    def k(self):
        return 0.5 * (self.u ** 2).sum(axis=0)

    @property
    def sound_speed(self):
        return np.sqrt(self.model.gamma * self.model.inv_mach_sq
                       * self.p / self.rho)


def n_variables(dim):
    return dim + 2


def _positivity_check(name, arr, where):
    if np.all(arr > 0.0):
        return
    flat = np.argmin(arr)
    loc = np.unravel_index(flat, arr.shape)
    raise PositivityError(
        f"non-positive {name} ({arr[loc]:.6e}) at index {loc}"
        + (f" in {where}" if where else ""),
        element=loc[0] if arr.ndim > 1 else None,
        node=loc[-1] if arr.ndim > 1 else None,
        values=float(arr[loc]))


def conserved_to_primitive(U, model=DIMENSIONAL, var_axis=0, check=True,
                           where=None):
    """Primitive state from conserved variables along var_axis."""
    U = np.asarray(U)
    d = U.shape[var_axis] - 2
    rho = np.take(U, 0, axis=var_axis)
    mom = np.stack([np.take(U, 1 + a, axis=var_axis) for a in range(d)])
    rhoE = np.take(U, d + 1, axis=var_axis)
    if check:
        _positivity_check("density", rho, where)
    u = mom / rho
    k = 0.5 * (u ** 2).sum(axis=0)
    p = (model.gamma - 1.0) * (rhoE - model.kinetic_factor * rho * k)
    if check:
        _positivity_check("pressure", p, where)
    return PrimitiveState(rho=rho, u=u, p=p, model=model)


def primitive_to_conserved(W, var_axis=0):
    model = W.model
    rhoE = W.rho * W.e + model.kinetic_factor * W.rho * W.k
    comps = [W.rho] + [W.rho * W.u[a] for a in range(W.u.shape[0])] + [rhoE]
    return np.stack(comps, axis=var_axis)


def inviscid_flux(W):
    """Full flux tensor, shape (n_var, d) + spatial shape."""
    model = W.model
    d = W.u.shape[0]
    shape = (d + 2, d) + W.rho.shape
    F = np.empty(shape)
    rho_u = W.rho * W.u
    F[0] = rho_u
    for a in range(d):
        F[1 + a] = rho_u[a] * W.u
        F[1 + a, a] += model.inv_mach_sq * W.p
    enth = W.rho * W.e + model.kinetic_factor * W.rho * W.k + W.p
    F[d + 1] = enth * W.u
    return F


def advective_flux(W):
    """Explicit-part flux: mass, momentum advection, kinetic-energy advection.

    The pressure terms (momentum pressure flux, (rho e + p) u in the energy
    equation) belong to the implicit operator.
    """
    model = W.model
    d = W.u.shape[0]
    F = np.empty((d + 2, d) + W.rho.shape)
    rho_u = W.rho * W.u
    F[0] = rho_u
    for a in range(d):
        F[1 + a] = rho_u[a] * W.u
    F[d + 1] = model.kinetic_factor * W.rho * W.k * W.u
    return F


def gravity_source(W, out=None):
    """Source column [0; -rho g k; -g_e rho w], w the vertical velocity."""
    model = W.model
    d = W.u.shape[0]
    S = out if out is not None else np.zeros((d + 2,) + W.rho.shape)
    S[0] = 0.0
    S[1:d] = 0.0
    S[d] = -model.gravity * W.rho
    S[d + 1] = -model.kinetic_factor * model.gravity * W.rho * W.u[d - 1]
    return S


def nondimensionalize(U, scaling, var_axis=0):
    """Conserved state in the scaled variables of the non-dimensional form."""
    return U / _state_scales(U.shape[var_axis] - 2, scaling, U.ndim, var_axis)


def redimensionalize(U_star, scaling, var_axis=0):
    return U_star * _state_scales(U_star.shape[var_axis] - 2, scaling,
                                  U_star.ndim, var_axis)


def _state_scales(d, scaling, ndim, var_axis):
    rr, ur = scaling.density_ref, scaling.velocity_ref
    scales = np.array([rr] + [rr * ur] * d + [rr * scaling.energy_ref])
    shape = [1] * ndim
    shape[var_axis] = d + 2
    return scales.reshape(shape)


@dataclass(frozen=True)
class CourantReport:
    acoustic: float
    advective: float
    dt: float
    degree: int
    min_diameter: float
    dim: int
    max_sound_speed: float
    max_speed: float

    def __str__(self):
        return (f"C={self.acoustic:.4g} C_u={self.advective:.4g} "
                f"(dt={self.dt}, r={self.degree}, Hmin={self.min_diameter:.6g}, "
                f"d={self.dim}, c_max={self.max_sound_speed:.6g}, "
                f"|u|_max={self.max_speed:.6g})")


def courant_numbers(field_data, geometry, dt, model=DIMENSIONAL):
    """Acoustic and advective Courant numbers C = r c dt / (H sqrt(d)).

    c is the sound speed maximized over all volume quadrature nodes, H the
    minimum cell diameter; the report carries the raw ingredients so any
    alternative grouping can be recomputed.
    """
    basis = geometry.basis
    Uq = np.einsum('qi,evi->evq', basis.vol_interp, field_data)
    W = conserved_to_primitive(Uq, model, var_axis=1)
    c_max = float(W.sound_speed.max())
    u_max = float(np.sqrt((W.u ** 2).sum(axis=0)).max())
    h_min = geometry.min_diameter
    d = geometry.mesh.dim
    fac = basis.degree * dt / (h_min * np.sqrt(d))
    return CourantReport(acoustic=fac * c_max, advective=fac * u_max, dt=dt,
                         degree=basis.degree, min_diameter=h_min, dim=d,
                         max_sound_speed=c_max, max_speed=u_max)
