"""Constrained Hamilton-Jacobi limit with meta-stable closure.

The limit profile obeys ``u_t = c r(x) - d(x)(1 + rho) + |u_x|**2`` with
``max_x u(., y, t) = 0``. Instead of a Lagrange multiplier, ``(rho, c)`` are
taken as the meta-stable pair attached to the current maximum point, and the
constraint is restored after each explicit step by subtracting the column
maximum.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .dynamics import CflViolation, InitSpec, NonFiniteField, integrate
from .elliptic import MetaState, OutOfRangeTrait, solve_metastable
from .model import ModelParams, SpatialGrid
from .profiles import track_argmax
from .schemes import LF_PAD, growth_term, lf_hamiltonian, max_slope, one_sided_slopes

__all__ = [
    "LimitState",
    "lf_hamiltonian",
    "track_argmax",
    "init_limit",
    "limit_cfl",
    "limit_step",
    "simulate_limit",
    "run_limit",
]

SAFETY = 0.9
DELTA = 1e-12


@dataclass(frozen=True, eq=False)
class LimitState:
    t: float
    u: np.ndarray
    xbar: np.ndarray
    rho: np.ndarray
    c: np.ndarray
    params: ModelParams
    grid: SpatialGrid
    meta: Optional[MetaState] = None

    def replace(self, **changes) -> "LimitState":
        return dataclasses.replace(self, **changes)


def _close(t, u, params, grid, guess=None) -> LimitState:
    u = u - np.max(u, axis=0)[None, :]
    xbar = track_argmax(u, params.grid)
    meta = solve_metastable(xbar, params, grid, init_guess=guess)
    return LimitState(t, u, xbar, meta.rho, meta.c, params, grid, meta)


def init_limit(spec: InitSpec, params: ModelParams, grid: SpatialGrid) -> LimitState:
    """Initial limit profile ``-(x - x0(y))**2 / (2 sigma**2)``, already projected."""
    tgrid = params.grid
    x0 = spec.x0.evaluate(grid)
    if np.any(x0 < tgrid.x_min) or np.any(x0 > tgrid.x_max):
        raise OutOfRangeTrait(f"initial fittest trait outside [{tgrid.x_min}, {tgrid.x_max}]")
    u = -((tgrid.x[:, None] - x0[None, :]) ** 2) / (2.0 * spec.sigma**2)
    return _close(0.0, u, params, grid)


def limit_cfl(state: LimitState, safety=SAFETY, delta=DELTA) -> float:
    dx = state.params.grid.dx
    alpha = 2.0 * max_slope(state.u, dx) + LF_PAD
    return safety * dx / (2.0 * alpha + delta)


def limit_step(state: LimitState, dt: float) -> LimitState:
    """One explicit monotone step followed by projection and closure."""
    limit = limit_cfl(state)
    if dt > limit * (1.0 + 1e-12):
        raise CflViolation(f"dt={dt:.3e} exceeds stable step {limit:.3e}")
    p = state.params
    dx = p.grid.dx
    pm, pp = one_sided_slopes(state.u, dx)
    alpha = 2.0 * max(np.max(np.abs(pm)), np.max(np.abs(pp))) + LF_PAD
    rhs = p.r[:, None] * state.c[None, :] - p.d[:, None] * (1.0 + state.rho[None, :])
    u = state.u + dt * (rhs + growth_term(pm, pp, alpha))
    if not np.all(np.isfinite(u)):
        raise NonFiniteField(f"non-finite limit profile at t={state.t + dt:.6g}")
    return _close(state.t + dt, u, p, state.grid, guess=state.c)


def simulate_limit(
    params: ModelParams,
    grid: SpatialGrid,
    init: InitSpec,
    T: float,
    every: float,
    on_step: Optional[Callable] = None,
    progress: Optional[Callable[[str], None]] = None,
) -> List[LimitState]:
    state = init_limit(init, params, grid)
    return integrate(state, limit_step, limit_cfl, T, every, on_step=on_step, progress=progress)


def run_limit(config, progress: Optional[Callable[[str], None]] = None) -> List[LimitState]:
    return simulate_limit(config.params, config.grid, config.init, config.T, config.snapshot_every, progress=progress)
