"""Grids, coefficient sampling and parameter validation.

The trait variable lives on a truncated uniform grid, the spatial domain is a
1D interval or a 2D rectangle with homogeneous Dirichlet data for the
nutrient. Population fields are stored at interior spatial nodes only, in
row-major order, so a field over ``(x, y)`` has shape ``(n_x, n_interior)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "ModelError",
    "EmptyGrid",
    "NonPositiveCoefficient",
    "ConvexityViolation",
    "InsufficientCB",
    "TraitGrid",
    "SpatialGrid",
    "CoefficientSpec",
    "ModelParams",
    "ValidatedParams",
    "sample_coefficients",
    "validate_params",
    "equilibrium_bounds",
]

SHAPE_RTOL = 1e-12


class ModelError(ValueError):
    """Base class for invalid model inputs."""


class EmptyGrid(ModelError):
    pass


class NonPositiveCoefficient(ModelError):
    pass


class ConvexityViolation(ModelError):
    pass


class InsufficientCB(ModelError):
    def __init__(self, message, rho_lo=None, rho_hi=None):
        super().__init__(message)
        self.rho_lo = rho_lo
        self.rho_hi = rho_hi


@dataclass(frozen=True)
class TraitGrid:
    x_min: float
    x_max: float
    n_x: int

    def __post_init__(self):
        if self.n_x < 3:
            raise EmptyGrid(f"trait grid needs at least 3 points, got {self.n_x}")
        if not self.x_max > self.x_min:
            raise EmptyGrid(f"empty trait interval [{self.x_min}, {self.x_max}]")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_x)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform box grid with Dirichlet boundary.

    ``extents`` holds one ``(lo, hi)`` pair per axis and ``n`` the number of
    points per axis *including* the two boundary nodes.
    """

    extents: tuple
    n: tuple

    def __post_init__(self):
        extents = tuple((float(lo), float(hi)) for lo, hi in self.extents)
        n = tuple(int(k) for k in self.n)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "n", n)
        if len(extents) not in (1, 2) or len(n) != len(extents):
            raise EmptyGrid("spatial grid must be 1D or 2D with one count per axis")
        for (lo, hi), k in zip(extents, n):
            if not hi > lo:
                raise EmptyGrid(f"empty spatial interval [{lo}, {hi}]")
            if k - 2 < 3:
                raise EmptyGrid(f"need at least 3 interior points per axis, got {k - 2}")

    @classmethod
    def interval(cls, lo: float = 0.0, hi: float = 1.0, n: int = 101) -> "SpatialGrid":
        return cls(((lo, hi),), (n,))

    @classmethod
    def rectangle(cls, xlim=(0.0, 1.0), ylim=(0.0, 1.0), n=(41, 41)) -> "SpatialGrid":
        return cls((tuple(xlim), tuple(ylim)), tuple(n))

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def spacing(self) -> tuple:
        return tuple((hi - lo) / (k - 1) for (lo, hi), k in zip(self.extents, self.n))

    @property
    def interior_shape(self) -> tuple:
        return tuple(k - 2 for k in self.n)

    @property
    def size(self) -> int:
        return int(np.prod(self.interior_shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def measure(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.extents]))

    def axis(self, k: int) -> np.ndarray:
        lo, hi = self.extents[k]
        return np.linspace(lo, hi, self.n[k])

    def interior_axis(self, k: int) -> np.ndarray:
        return self.axis(k)[1:-1]

    def interior_coords(self) -> np.ndarray:
        """Coordinates of interior nodes, shape ``(size, dim)``, row-major."""
        axes = [self.interior_axis(k) for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def integrate(self, values: np.ndarray) -> float:
        """Midpoint quadrature of an interior-node field."""
        return float(np.sum(values) * self.cell_volume)


@dataclass(frozen=True)
class CoefficientSpec:
    """Parametric description of ``r`` or ``d``.

    family is one of ``"quadratic-concave"`` (``value - curvature*(x-vertex)**2``),
    ``"quadratic-convex"`` (``value + curvature*(x-vertex)**2``), ``"constant"``
    or ``"tabulated"``.
    """

    family: str
    value: float = 1.0
    curvature: float = 0.0
    vertex: float = 0.0
    clamp: Optional[tuple] = None
    table: Optional[Sequence[float]] = None

    FAMILIES = ("quadratic-concave", "quadratic-convex", "constant", "tabulated")

    def __post_init__(self):
        if self.family not in self.FAMILIES:
            raise ModelError(f"unknown coefficient family {self.family!r}")
        if self.clamp is not None:
            lo, hi = self.clamp
            if not 0 < lo < hi:
                raise ModelError(f"clamp bounds must satisfy 0 < lo < hi, got {self.clamp}")
        if self.curvature < 0:
            raise ModelError("curvature must be nonnegative; the family fixes the sign")


def sample_coefficients(spec: CoefficientSpec, grid: TraitGrid) -> np.ndarray:
    """Evaluate a coefficient family at the trait nodes, then clamp."""
    x = grid.x
    if spec.family == "tabulated":
        if spec.table is None or len(spec.table) != grid.n_x:
            got = 0 if spec.table is None else len(spec.table)
            raise EmptyGrid(f"tabulated coefficient has {got} values, grid has {grid.n_x}")
        values = np.asarray(spec.table, dtype=float).copy()
    elif spec.family == "constant":
        values = np.full(grid.n_x, float(spec.value))
    else:
        sign = -1.0 if spec.family == "quadratic-concave" else 1.0
        values = spec.value + sign * spec.curvature * (x - spec.vertex) ** 2
    if spec.clamp is not None:
        values = np.clip(values, spec.clamp[0], spec.clamp[1])
    return values


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Sampled coefficients and scalar parameters of the selection-mutation system."""

    grid: TraitGrid
    r: np.ndarray
    d: np.ndarray
    lam: float
    c_B: float
    eps: float

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float))
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float))
        for name in ("r", "d"):
            arr = getattr(self, name)
            if arr.shape != (self.grid.n_x,):
                raise EmptyGrid(f"{name} has shape {arr.shape}, expected ({self.grid.n_x},)")
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"{name} has non-finite entries")

    def with_eps(self, eps: float) -> "ModelParams":
        kwargs = {k: getattr(self, k) for k in ("grid", "r", "d", "lam", "c_B")}
        if isinstance(self, ValidatedParams):
            return validate_params(ModelParams(eps=eps, **kwargs))
        return ModelParams(eps=eps, **kwargs)

    def r_at(self, x) -> np.ndarray:
        return np.interp(x, self.grid.x, self.r)

    def d_at(self, x) -> np.ndarray:
        return np.interp(x, self.grid.x, self.d)

    def echo(self) -> dict:
        return {
            "trait": [self.grid.x_min, self.grid.x_max, self.grid.n_x],
            "r": self.r.tolist(),
            "d": self.d.tolist(),
            "lam": self.lam,
            "c_B": self.c_B,
            "eps": self.eps,
        }


@dataclass(frozen=True, eq=False)
class ValidatedParams(ModelParams):
    rho_lo: float = field(default=np.nan)
    rho_hi: float = field(default=np.nan)
    c_lo: float = field(default=np.nan)
    c_hi: float = field(default=np.nan)


def _bounds(r, d, lam, c_B):
    rho_hi = c_B * np.max(r) / np.min(d) - 1.0
    if lam + rho_hi <= 0:
        # no positive population can be sustained; the lower bound is meaningless
        return -np.inf, float(rho_hi), float(c_B), float(c_B)
    rho_lo = np.min(r) / np.max(d) * c_B * lam / (lam + rho_hi) - 1.0
    c_lo = lam * c_B / (lam + rho_hi)
    return float(rho_lo), float(rho_hi), float(c_lo), float(c_B)


def _second_difference(values):
    return values[:-2] - 2.0 * values[1:-1] + values[2:]


def validate_params(params: ModelParams) -> ValidatedParams:
    """Check the standing assumptions and attach the invariant-region bounds.

    Raises
    ------
    NonPositiveCoefficient
        if ``r``, ``d``, ``lam`` or ``c_B`` is not strictly positive, or
        ``eps`` is outside ``(0, 1)``.
    ConvexityViolation
        if the discrete second difference of ``r`` is positive or that of ``d``
        negative beyond ``1e-12 * max|.|``.
    InsufficientCB
        if the upper or the lower population bound is not positive.
    """
    r, d = params.r, params.d
    if np.min(r) <= 0 or np.min(d) <= 0:
        raise NonPositiveCoefficient("r and d must be bounded below by a positive constant")
    if params.lam <= 0:
        raise NonPositiveCoefficient(f"lam must be positive, got {params.lam}")
    if params.c_B <= 0:
        raise NonPositiveCoefficient(f"c_B must be positive, got {params.c_B}")
    if not 0 < params.eps < 1:
        raise NonPositiveCoefficient(f"eps must lie in (0, 1), got {params.eps}")

    d2r = _second_difference(r)
    if np.max(d2r) > SHAPE_RTOL * np.max(np.abs(r)):
        i = int(np.argmax(d2r)) + 1
        raise ConvexityViolation(f"r is not concave at trait node {i} (second difference {d2r[i - 1]:.3e})")
    d2d = _second_difference(d)
    if np.min(d2d) < -SHAPE_RTOL * np.max(np.abs(d)):
        i = int(np.argmin(d2d)) + 1
        raise ConvexityViolation(f"d is not convex at trait node {i} (second difference {d2d[i - 1]:.3e})")

    rho_lo, rho_hi, c_lo, c_hi = _bounds(r, d, params.lam, params.c_B)
    if not rho_hi > 0:
        raise InsufficientCB(
            f"c_B={params.c_B} too small: upper population bound rho_hi={rho_hi:.6g} <= 0",
            rho_lo=rho_lo,
            rho_hi=rho_hi,
        )
    if not rho_lo > 0:
        raise InsufficientCB(
            f"c_B={params.c_B} too small: lower population bound rho_lo={rho_lo:.6g} <= 0",
            rho_lo=rho_lo,
            rho_hi=rho_hi,
        )
    return ValidatedParams(
        grid=params.grid,
        r=r,
        d=d,
        lam=float(params.lam),
        c_B=float(params.c_B),
        eps=float(params.eps),
        rho_lo=rho_lo,
        rho_hi=rho_hi,
        c_lo=c_lo,
        c_hi=c_hi,
    )


def equilibrium_bounds(params: ModelParams) -> tuple:
    """Return ``(rho_lo, rho_hi, c_lo, c_hi)`` for the invariant region."""
    if isinstance(params, ValidatedParams):
        return params.rho_lo, params.rho_hi, params.c_lo, params.c_hi
    return _bounds(params.r, params.d, params.lam, params.c_B)
