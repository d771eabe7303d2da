"""Nutrient and meta-stable elliptic solvers.

Both problems are discretized with second-order centered differences for
``-Laplacian`` on the interior nodes of a :class:`~selmut.model.SpatialGrid`;
Dirichlet rows are eliminated, so every vector here has length ``grid.size``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import cg, spsolve

from .model import ModelParams, SpatialGrid, equilibrium_bounds
from .profiles import NonConcaveProfile, second_differences, track_argmax

__all__ = [
    "SolverFailure",
    "NewtonDiverged",
    "OutOfRangeTrait",
    "MetaState",
    "negative_laplacian",
    "apply_negative_laplacian",
    "solve_nutrient",
    "nutrient_residual",
    "solve_metastable",
    "metastable_from_argmax",
]

NUTRIENT_RTOL = 1e-10
CG_RTOL = 1e-12
NEWTON_MAX_ITER = 50
NEWTON_MAX_HALVINGS = 10


class SolverFailure(RuntimeError):
    pass


class NewtonDiverged(SolverFailure):
    def __init__(self, message, residual=None, iterate=None):
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate


class OutOfRangeTrait(ValueError):
    pass


@functools.lru_cache(maxsize=32)
def negative_laplacian(grid: SpatialGrid) -> sp.csr_matrix:
    """Sparse ``-Laplacian`` with homogeneous Dirichlet rows eliminated."""
    ops = []
    for n, h in zip(grid.interior_shape, grid.spacing):
        ops.append(sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h**2)
    if grid.dim == 1:
        return sp.csr_matrix(ops[0])
    eye0 = sp.identity(grid.interior_shape[0])
    eye1 = sp.identity(grid.interior_shape[1])
    return sp.csr_matrix(sp.kron(ops[0], eye1) + sp.kron(eye0, ops[1]))


def apply_negative_laplacian(values: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    return negative_laplacian(grid) @ values


def _solve_1d(grid: SpatialGrid, diag_extra: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    (n,), (h,) = grid.interior_shape, grid.spacing
    ab = np.empty((3, n))
    ab[0, 0] = ab[2, -1] = 0.0
    ab[0, 1:] = -1.0 / h**2
    ab[2, :-1] = -1.0 / h**2
    ab[1] = 2.0 / h**2 + diag_extra
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def _solve_cg(grid: SpatialGrid, diag_extra: np.ndarray, rhs: np.ndarray, x0=None) -> np.ndarray:
    A = negative_laplacian(grid) + sp.diags(diag_extra)
    precond = sp.diags(1.0 / A.diagonal())
    sol, info = cg(A, rhs, x0=x0, rtol=CG_RTOL, atol=0.0, M=precond, maxiter=20 * grid.size)
    if info != 0:
        raise SolverFailure(f"conjugate gradient did not converge (info={info})")
    return sol


def nutrient_residual(c: np.ndarray, rho: np.ndarray, params: ModelParams, grid: SpatialGrid) -> np.ndarray:
    return apply_negative_laplacian(c, grid) + (rho + params.lam) * c - params.lam * params.c_B


def solve_nutrient(rho: np.ndarray, params: ModelParams, grid: SpatialGrid, x0=None) -> np.ndarray:
    """Solve ``-Lap c + (rho + lam) c = lam c_B`` with ``c = 0`` on the boundary.

    1D problems use a banded direct solve, 2D problems Jacobi-preconditioned
    conjugate gradients. The max-norm residual is checked against
    ``1e-10 * lam * c_B``.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (grid.size,):
        raise ValueError(f"rho has shape {rho.shape}, expected ({grid.size},)")
    if not np.all(np.isfinite(rho)) or np.min(rho) < 0:
        raise SolverFailure("population density must be finite and nonnegative")
    source = params.lam * params.c_B
    if source == 0:
        return np.zeros(grid.size)
    rhs = np.full(grid.size, source)
    extra = rho + params.lam
    if grid.dim == 1:
        c = _solve_1d(grid, extra, rhs)
    else:
        c = _solve_cg(grid, extra, rhs, x0=x0)
    res = np.max(np.abs(nutrient_residual(c, rho, params, grid)))
    if not res <= NUTRIENT_RTOL * source:
        # one step of iterative refinement before giving up
        corr = rhs - (apply_negative_laplacian(c, grid) + extra * c)
        c = c + (_solve_1d(grid, extra, corr) if grid.dim == 1 else _solve_cg(grid, extra, corr))
        res = np.max(np.abs(nutrient_residual(c, rho, params, grid)))
        if not res <= NUTRIENT_RTOL * source:
            raise SolverFailure(f"nutrient residual {res:.3e} above tolerance")
    return c


@dataclass
class MetaState:
    """Meta-stable nutrient/population pair attached to a fittest-trait field."""

    xbar: np.ndarray
    f: np.ndarray
    c: np.ndarray
    rho: np.ndarray
    newton_iters: int
    residual: float
    residual_history: list = field(default_factory=list)


def _check_traits(xbar, params):
    g = params.grid
    slack = 1e-12 * (g.x_max - g.x_min)
    if np.any(xbar < g.x_min - slack) or np.any(xbar > g.x_max + slack):
        raise OutOfRangeTrait(f"fittest trait outside [{g.x_min}, {g.x_max}]")


def solve_metastable(
    xbar,
    params: ModelParams,
    grid: SpatialGrid,
    init_guess: Optional[np.ndarray] = None,
    tol: Optional[float] = None,
    max_iter: int = NEWTON_MAX_ITER,
) -> MetaState:
    """Damped Newton solve of ``-Lap c + (lam + f c - 1) c = lam c_B``.

    Here ``f = r(xbar) / d(xbar)`` with ``r`` and ``d`` linearly interpolated
    between trait nodes; the population is recovered as ``rho = c f - 1``.
    The default initial guess is the constant lower nutrient bound.
    """
    xbar = np.broadcast_to(np.asarray(xbar, dtype=float), (grid.size,)).copy()
    _check_traits(xbar, params)
    f = params.r_at(xbar) / params.d_at(xbar)
    lam, source = params.lam, params.lam * params.c_B
    tol = NUTRIENT_RTOL * source if tol is None else tol
    if init_guess is None:
        _, _, c_lo, _ = equilibrium_bounds(params)
        c = np.full(grid.size, c_lo)
    else:
        c = np.broadcast_to(np.asarray(init_guess, dtype=float), (grid.size,)).copy()

    L = negative_laplacian(grid)

    def residual(c):
        return L @ c + (lam - 1.0 + f * c) * c - source

    F = residual(c)
    norm = np.max(np.abs(F))
    history = [norm]
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise NewtonDiverged(f"no convergence in {max_iter} Newton iterations (residual {norm:.3e})", norm, c)
        jac_diag = lam - 1.0 + 2.0 * f * c
        if grid.dim == 1:
            step = _solve_1d(grid, jac_diag, -F)
        else:
            step = spsolve(sp.csc_matrix(L + sp.diags(jac_diag)), -F)
        t = 1.0
        for _ in range(NEWTON_MAX_HALVINGS + 1):
            trial = c + t * step
            F_trial = residual(trial)
            n_trial = np.max(np.abs(F_trial))
            if n_trial < norm:
                break
            t *= 0.5
        else:
            raise NewtonDiverged(f"damping failed to reduce the residual {norm:.3e}", norm, c)
        c, F, norm = trial, F_trial, n_trial
        history.append(norm)
        it += 1
    return MetaState(xbar=xbar, f=f, c=c, rho=c * f - 1.0, newton_iters=it, residual=norm, residual_history=history)


def metastable_from_argmax(u: np.ndarray, params: ModelParams, grid: SpatialGrid, **kwargs) -> MetaState:
    """Meta-stable state attached to the maximum points of a concave profile."""
    u = np.asarray(u, dtype=float)
    curv = second_differences(u, params.grid.dx)
    if np.max(curv) >= 0:
        j = int(np.argmax(np.max(curv, axis=0)))
        raise NonConcaveProfile(f"profile at spatial index {j} is not strictly concave in x")
    return solve_metastable(track_argmax(u, params.grid), params, grid, **kwargs)
