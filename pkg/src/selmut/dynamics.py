"""Explicit time integration of the small-mutation system in Hopf-Cole form.

The density ``n = exp(u / eps)`` is never formed directly. ``u`` is advanced
by

    u_t = c r(x) - d(x) (1 + rho) + eps u_xx + |u_x|**2

with the gradient term discretized by a Lax-Friedrichs flux, and after each
step the population ``rho = int n dx`` and the nutrient ``c`` are recomputed.
"""
from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .elliptic import OutOfRangeTrait, solve_metastable, solve_nutrient
from .model import ModelParams, SpatialGrid, TraitGrid
from .profiles import track_argmax
from .schemes import LF_PAD, growth_term, lf_hamiltonian, max_slope, one_sided_slopes, trait_curvature

__all__ = [
    "CflViolation",
    "NonFiniteField",
    "MassUnreachable",
    "Profile",
    "InitSpec",
    "StateEps",
    "init_state",
    "compute_rho",
    "cfl_timestep",
    "cfl_dt",
    "step",
    "simulate",
    "run",
    "snapshot_times",
]

SAFETY = 0.9
THETA = 0.5
DELTA = 1e-12
BOUNDARY_WARN_CELLS = 5


class CflViolation(ValueError):
    pass


class NonFiniteField(FloatingPointError):
    pass


class MassUnreachable(ValueError):
    pass


@dataclass(frozen=True)
class Profile:
    """Scalar field over the spatial domain.

    ``constant``: ``value``; ``affine``: ``value + slope * (y1 - lo1)``;
    ``sinusoidal``: ``value + amplitude * prod_k sin(2 pi wavenumber (y_k - lo_k) / L_k)``.
    """

    kind: str = "constant"
    value: float = 0.0
    slope: float = 0.0
    amplitude: float = 0.0
    wavenumber: float = 1.0

    KINDS = ("constant", "affine", "sinusoidal")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")

    def evaluate(self, grid: SpatialGrid) -> np.ndarray:
        y = grid.interior_coords()
        out = np.full(grid.size, float(self.value))
        if self.kind == "affine":
            out += self.slope * (y[:, 0] - grid.extents[0][0])
        elif self.kind == "sinusoidal":
            wave = np.ones(grid.size)
            for k, (lo, hi) in enumerate(grid.extents):
                wave *= np.sin(2 * np.pi * self.wavenumber * (y[:, k] - lo) / (hi - lo))
            out += self.amplitude * wave
        return out


@dataclass(frozen=True)
class InitSpec:
    """Initial data: Gaussian-type profiles centred on ``x0(y)`` with mass ``rho0(y)``.

    ``rho0=None`` selects the meta-stable population attached to ``x0``. The
    mass is then modified as ``rho0 * (1 + rho_modulation * wave) + rho_shift``
    where ``wave`` is the unit sinusoid of :class:`Profile`.
    """

    x0: Profile = Profile()
    sigma: float = 1.0
    rho0: Optional[Profile] = None
    rho_shift: float = 0.0
    rho_modulation: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def k0(self) -> float:
        """Uniform concavity constant of the initial profile."""
        return min(self.sigma**-2, self.sigma**2)

    def initial_mass(self, params: ModelParams, grid: SpatialGrid) -> np.ndarray:
        x0 = self.x0.evaluate(grid)
        if self.rho0 is None:
            base = solve_metastable(x0, params, grid).rho
        else:
            base = self.rho0.evaluate(grid)
        wave = Profile("sinusoidal", 0.0, amplitude=1.0).evaluate(grid)
        return base * (1.0 + self.rho_modulation * wave) + self.rho_shift


@dataclass(frozen=True, eq=False)
class StateEps:
    t: float
    u: np.ndarray
    rho: np.ndarray
    c: np.ndarray
    params: ModelParams
    grid: SpatialGrid
    k0: float = math.nan

    @property
    def tgrid(self) -> TraitGrid:
        return self.params.grid

    @property
    def eps(self) -> float:
        return self.params.eps

    @property
    def xbar(self) -> np.ndarray:
        return track_argmax(self.u, self.params.grid)

    def replace(self, **changes) -> "StateEps":
        return dataclasses.replace(self, **changes)


def _log_trapezoid_exp(v: np.ndarray, eps: float, dx: float):
    """``log int exp(v / eps) dx`` per column, plus the column max of ``v``."""
    top = np.max(v, axis=0)
    w = np.exp((v - top) / eps)
    integral = dx * (np.sum(w, axis=0) - 0.5 * (w[0] + w[-1]))
    with np.errstate(divide="ignore"):
        return top / eps + np.log(integral), top


def compute_rho(u: np.ndarray, eps: float, tgrid: TraitGrid) -> np.ndarray:
    """Trapezoid quadrature of ``exp(u / eps)`` over the trait grid.

    Evaluated as ``exp(max u / eps) * int exp((u - max u) / eps) dx`` so that
    neither factor under- or overflows for moderate masses.
    """
    log_mass, _ = _log_trapezoid_exp(np.asarray(u, dtype=float), eps, tgrid.dx)
    with np.errstate(over="ignore", under="ignore"):
        return np.exp(log_mass)


def init_state(spec: InitSpec, params: ModelParams, grid: SpatialGrid) -> StateEps:
    """Build ``u0 = m(y) - (x - x0(y))**2 / (2 sigma**2)`` with prescribed mass."""
    tgrid = params.grid
    x0 = spec.x0.evaluate(grid)
    if np.any(x0 < tgrid.x_min) or np.any(x0 > tgrid.x_max):
        raise OutOfRangeTrait(f"initial fittest trait outside [{tgrid.x_min}, {tgrid.x_max}]")
    rho0 = spec.initial_mass(params, grid)
    if not np.all(np.isfinite(rho0)) or np.min(rho0) <= 0:
        raise MassUnreachable("initial mass must be finite and positive")

    shape = -((tgrid.x[:, None] - x0[None, :]) ** 2) / (2.0 * spec.sigma**2)
    log_q, _ = _log_trapezoid_exp(shape, params.eps, tgrid.dx)
    if not np.all(np.isfinite(log_q)):
        raise MassUnreachable("trait window carries no mass for the requested profile")
    m = params.eps * (np.log(rho0) - log_q)
    u = m[None, :] + shape
    rho = compute_rho(u, params.eps, tgrid)
    if np.max(np.abs(rho / rho0 - 1.0)) > 1e-10:
        raise MassUnreachable("could not match the requested mass to relative 1e-10")
    c = solve_nutrient(rho, params, grid)
    return StateEps(0.0, u, rho, c, params, grid, k0=spec.k0)


def cfl_timestep(eps, dx, max_grad, relax_rate=1.0, safety=SAFETY, theta=THETA, delta=DELTA) -> float:
    """Stable explicit step for the viscous Hopf-Cole equation.

    The diffusion and Lax-Friedrichs limits are combined harmonically,
    ``1 / (2 eps / dx**2 + (2 max|u_x| + delta) / dx)``, because both act on
    the same stencil; the relaxation limit ``theta * eps / relax_rate``
    resolves the fast population dynamics.
    """
    hyperbolic = 1.0 / (2.0 * eps / dx**2 + (2.0 * max_grad + delta) / dx)
    return safety * min(hyperbolic, theta * eps / max(1.0, relax_rate))


def _relax_rate(state: StateEps) -> float:
    p = state.params
    rho, c = state.rho, state.c
    rate = rho * (np.max(p.d) + np.max(np.abs(p.r)) * c / (p.lam + rho))
    return float(np.max(rate))


def cfl_dt(state: StateEps, safety=SAFETY, theta=THETA) -> float:
    g = max_slope(state.u, state.tgrid.dx)
    return cfl_timestep(state.eps, state.tgrid.dx, g, _relax_rate(state), safety=safety, theta=theta)


def _hj_rhs(u, c, rho, params, eps):
    """Right-hand side of the Hopf-Cole equation (``eps=0`` drops viscosity)."""
    dx = params.grid.dx
    pm, pp = one_sided_slopes(u, dx)
    alpha = 2.0 * max(np.max(np.abs(pm)), np.max(np.abs(pp))) + LF_PAD
    rhs = params.r[:, None] * c[None, :] - params.d[:, None] * (1.0 + rho[None, :])
    rhs = rhs + growth_term(pm, pp, alpha)
    if eps:
        rhs = rhs + eps * trait_curvature(u, dx)
    return rhs


def step(state: StateEps, dt: float) -> StateEps:
    """Advance one explicit Euler step and re-solve ``rho`` and ``c``."""
    limit = cfl_dt(state)
    if dt > limit * (1.0 + 1e-12):
        raise CflViolation(f"dt={dt:.3e} exceeds stable step {limit:.3e}")
    p = state.params
    u = state.u + dt * _hj_rhs(state.u, state.c, state.rho, p, p.eps)
    if not np.all(np.isfinite(u)):
        raise NonFiniteField(f"non-finite u at t={state.t + dt:.6g}")
    rho = compute_rho(u, p.eps, p.grid)
    if not np.all(np.isfinite(rho)):
        raise NonFiniteField(f"non-finite population at t={state.t + dt:.6g}")
    c = solve_nutrient(rho, p, state.grid, x0=state.c)
    return state.replace(t=state.t + dt, u=u, rho=rho, c=c)


def snapshot_times(T: float, every: float, start: float = 0.0) -> np.ndarray:
    """``start, start + every, ...`` up to ``T`` inclusive (``T`` always present)."""
    if T < start or every <= 0:
        raise ValueError("need T >= start and a positive snapshot interval")
    span = T - start
    k = int(math.floor(span / every + 1e-9))
    times = start + every * np.arange(k + 1)
    if T - times[-1] > 1e-12 * max(1.0, T):
        times = np.append(times, T)
    return times


def _near_trait_boundary(xbar, tgrid):
    margin = BOUNDARY_WARN_CELLS * tgrid.dx
    return bool(np.any(xbar < tgrid.x_min + margin) or np.any(xbar > tgrid.x_max - margin))


def integrate(
    state,
    advance: Callable,
    stable_dt: Callable,
    T: float,
    every: float,
    on_step: Optional[Callable] = None,
    progress: Optional[Callable[[str], None]] = None,
    progress_every: int = 100,
) -> list:
    """Step with the stable ``dt`` from ``state.t`` up to the absolute time ``T``.

    Steps are shortened to land exactly on the snapshot times
    ``state.t + k * every``; the returned list starts with ``state``.
    """
    targets = snapshot_times(T, every, start=state.t)
    snaps = [state]
    n = 0
    warned = False
    for target in targets[1:]:
        while state.t < target - 1e-12 * max(1.0, target):
            dt = min(stable_dt(state), target - state.t)
            state = advance(state, dt)
            n += 1
            if on_step is not None:
                on_step(state)
            if progress is not None and n % progress_every == 0:
                top = np.max(state.u, axis=0)
                progress(f"step {n} t={state.t:.6f} dt={dt:.3e} max_x u in [{top.min():.6f}, {top.max():.6f}]")
            if not warned and _near_trait_boundary(state.xbar, state.params.grid):
                warnings.warn("fittest trait within 5 cells of the trait boundary", RuntimeWarning, stacklevel=2)
                warned = True
        state = state.replace(t=float(target))
        snaps.append(state)
    return snaps


def simulate(
    params: ModelParams,
    grid: SpatialGrid,
    init: InitSpec,
    T: float,
    every: float,
    on_step: Optional[Callable] = None,
    progress: Optional[Callable[[str], None]] = None,
) -> List[StateEps]:
    """Integrate from :func:`init_state` up to ``T``, returning the snapshots."""
    state = init_state(init, params, grid)
    return integrate(state, step, cfl_dt, T, every, on_step=on_step, progress=progress)


def run(config, progress: Optional[Callable[[str], None]] = None, with_reports: bool = False):
    """Integrate a :class:`~selmut.config.RunConfig`; optionally attach diagnostics."""
    snaps = simulate(config.params, config.grid, config.init, config.T, config.snapshot_every, progress=progress)
    if not with_reports:
        return snaps
    from .diagnostics import report

    return snaps, [report(s, tol_scale=config.tol_scale) for s in snaps]
