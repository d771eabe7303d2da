"""Runtime checks and post-hoc analysis of simulated states.

Every function here is read-only with respect to the states it receives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from .elliptic import MetaState, solve_metastable, solve_nutrient
from .model import ModelParams, SpatialGrid, TraitGrid, equilibrium_bounds
from .profiles import second_differences, track_argmax

__all__ = [
    "NeedThreePoints",
    "Violation",
    "RateFit",
    "HolderFit",
    "LyapunovTerms",
    "DiagnosticsReport",
    "StudyReport",
    "check_bounds",
    "concavity_envelope",
    "riccati_envelope",
    "effective_curvature",
    "max_u_bounds",
    "max_u_window",
    "TEST_FUNCTIONS",
    "concentration_error",
    "holder_xeps",
    "lyapunov",
    "fast_system_flow",
    "rho_equation_residual",
    "meta_distance",
    "fit_rate",
    "convergence_study",
    "report",
]


class NeedThreePoints(ValueError):
    pass


class Violation(NamedTuple):
    field: str
    index: int
    excess: float


def _forward_gradient_sq(w: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """Squared forward differences of an interior field, zero Dirichlet extension."""
    arr = w.reshape(grid.interior_shape)
    total = 0.0
    for k, h in enumerate(grid.spacing):
        pad = [(0, 0)] * grid.dim
        pad[k] = (1, 1)
        diffs = np.diff(np.pad(arr, pad), axis=k) / h
        total = total + np.sum(diffs**2)
    return total


def check_bounds(
    state,
    dt: Optional[float] = None,
    rho_tol: Optional[float] = None,
    c_tol: float = 1e-10,
    c_margin: int = 1,
    check_c_lower: bool = True,
) -> List[Violation]:
    """List the entries of ``rho`` and ``c`` outside the invariant region.

    ``rho`` is checked against ``[rho_lo, rho_hi]`` with tolerance
    ``5 (dt + dx**2)`` by default, ``c`` against ``[0, c_B]`` with ``c_tol``.
    The lower nutrient bound is only checked at nodes at least ``c_margin``
    cells away from the boundary.
    """
    rho_lo, rho_hi, c_lo, c_hi = equilibrium_bounds(state.params)
    if rho_tol is None:
        if dt is None:
            from .dynamics import cfl_dt

            dt = cfl_dt(state)
        rho_tol = 5.0 * (dt + state.params.grid.dx ** 2)
    out = []

    def collect(name, excess, tol):
        for i in np.flatnonzero(excess > tol):
            out.append(Violation(name, int(i), float(excess[i])))

    collect("rho_lo", rho_lo - state.rho, rho_tol)
    collect("rho_hi", state.rho - rho_hi, rho_tol)
    collect("c_neg", -state.c, c_tol)
    collect("c_hi", state.c - c_hi, c_tol)
    if check_c_lower:
        grid = state.grid
        below = (c_lo - state.c).reshape(grid.interior_shape)
        mask = np.zeros(grid.interior_shape, dtype=bool)
        inner = tuple(slice(c_margin, n - c_margin) for n in grid.interior_shape)
        mask[inner] = True
        collect("c_lo", np.where(mask, below, -np.inf).ravel(), c_tol)
    return out


def concavity_envelope(u: np.ndarray, dx: float) -> tuple:
    """Extremes ``(min, max)`` of the centred second differences at interior trait nodes."""
    d2 = second_differences(np.asarray(u, dtype=float), dx)
    return float(np.min(d2)), float(np.max(d2))


def riccati_envelope(t: float, k0: float) -> float:
    """Guaranteed uniform concavity ``K(t) = 1 / (1/K0 + 2t)``."""
    return 1.0 / (1.0 / k0 + 2.0 * t)


def effective_curvature(envelope: tuple) -> float:
    """Largest ``K`` with ``-1/K <= u_xx <= -K`` for the given envelope (0 if not concave)."""
    lo, hi = envelope
    if hi >= 0:
        return 0.0
    return min(-hi, -1.0 / lo)


def max_u_bounds(eps: float, K: float, rho_lo: float, rho_hi: float) -> tuple:
    """Lower and upper admissible values of ``max_x u`` for a ``K``-concave profile."""
    base = -0.5 * eps * math.log(eps)
    lower = base + eps * math.log(rho_lo * math.sqrt(K) / math.sqrt(2 * math.pi))
    upper = base + eps * math.log(rho_hi / math.sqrt(2 * K * math.pi))
    return lower, upper


def max_u_window(state, K: Optional[float] = None, tol: float = 0.0):
    """``(lower, actual, upper, ok)`` with ``actual`` the per-location maximum of ``u``."""
    if K is None:
        K = effective_curvature(concavity_envelope(state.u, state.params.grid.dx))
    rho_lo, rho_hi, _, _ = equilibrium_bounds(state.params)
    actual = np.max(state.u, axis=0)
    if K <= 0:
        return -math.inf, actual, math.inf, False
    lower, upper = max_u_bounds(state.params.eps, K, rho_lo, rho_hi)
    ok = bool(np.all(actual >= lower - tol) and np.all(actual <= upper + tol))
    return lower, actual, upper, ok


def _clamped_identity(x):
    return np.clip(x, -0.5, 0.5)


TEST_FUNCTIONS: Dict[str, Callable] = {
    "x": lambda x: x,
    "sin": np.sin,
    "clamp": _clamped_identity,
}


def concentration_error(state, phi: Callable = TEST_FUNCTIONS["x"]) -> np.ndarray:
    """``|int phi n dx - phi(xbar) rho|`` per location, ``xbar`` the sub-grid argmax."""
    tgrid = state.params.grid
    x = tgrid.x
    u = state.u
    top = np.max(u, axis=0)
    w = np.exp((u - top) / state.params.eps)
    weights = np.full(tgrid.n_x, tgrid.dx)
    weights[[0, -1]] *= 0.5
    phi_x = np.asarray(phi(x), dtype=float)
    moment = np.exp(top / state.params.eps) * ((weights * phi_x) @ w)
    xbar = track_argmax(u, tgrid)
    return np.abs(moment - np.asarray(phi(xbar), dtype=float) * state.rho)


@dataclass
class HolderFit:
    constant: float
    pairs: int
    eps: float


def holder_xeps(trajectory: Sequence, eps: Optional[float] = None) -> HolderFit:
    """Smallest ``C`` with ``|xbar(t) - xbar(s)| <= C (sqrt(eps) + sqrt|t - s|)`` over all pairs."""
    eps = trajectory[0].params.eps if eps is None else eps
    times = np.array([s.t for s in trajectory])
    xs = np.array([track_argmax(s.u, s.params.grid) for s in trajectory])
    i, j = np.triu_indices(len(times), k=1)
    if len(i) == 0:
        return HolderFit(0.0, 0, eps)
    jumps = np.max(np.abs(xs[i] - xs[j]), axis=1)
    scale = math.sqrt(eps) + np.sqrt(np.abs(times[i] - times[j]))
    return HolderFit(float(np.max(jumps / scale)), int(len(i)), eps)


@dataclass
class LyapunovTerms:
    """Weighted distance to a meta-stable state and the terms of its time derivative.

    ``rhs`` is the sum of the three dissipation terms and the cubic term; for
    the frozen-trait fast system it equals ``d value / dt`` exactly.
    """

    value: float
    dissipation_rho: float
    dissipation_grad: float
    dissipation_c: float
    cubic: float

    @property
    def rhs(self) -> float:
        return self.dissipation_rho + self.dissipation_grad + self.dissipation_c + self.cubic

    @property
    def quadratic(self) -> float:
        return self.dissipation_rho + self.dissipation_grad + self.dissipation_c


def lyapunov(state, meta: MetaState) -> LyapunovTerms:
    p, grid = state.params, state.grid
    r_bar = p.r_at(meta.xbar)
    d_bar = p.d_at(meta.xbar)
    drho = state.rho - meta.rho
    dc = state.c - meta.c
    weight = meta.c / (meta.rho * r_bar)
    return LyapunovTerms(
        value=0.5 * grid.integrate(drho**2 * weight),
        dissipation_rho=-grid.integrate(drho**2 * meta.c * d_bar * state.rho / (meta.rho * r_bar)),
        dissipation_grad=-float(_forward_gradient_sq(dc, grid)) * grid.cell_volume,
        dissipation_c=-grid.integrate((p.lam + state.rho) * dc**2),
        cubic=grid.integrate(drho**2 * dc * meta.c / meta.rho),
    )


@dataclass(frozen=True, eq=False)
class FastState:
    """Population/nutrient pair of the frozen-trait system; duck-types a state for :func:`lyapunov`."""

    t: float
    rho: np.ndarray
    c: np.ndarray
    params: ModelParams
    grid: SpatialGrid


def fast_system_flow(rho0, meta: MetaState, params: ModelParams, grid: SpatialGrid, dt: float, n_steps: int):
    """RK4 trajectory of ``rho' = (r(xbar) c - d(xbar)(1 + rho)) rho`` with ``c`` quasi-static."""
    r_bar = params.r_at(meta.xbar)
    d_bar = params.d_at(meta.xbar)

    def rate(rho):
        c = solve_nutrient(rho, params, grid)
        return (r_bar * c - d_bar * (1.0 + rho)) * rho

    rho = np.asarray(rho0, dtype=float).copy()
    out = [FastState(0.0, rho, solve_nutrient(rho, params, grid), params, grid)]
    for k in range(1, n_steps + 1):
        k1 = rate(rho)
        k2 = rate(rho + 0.5 * dt * k1)
        k3 = rate(rho + 0.5 * dt * k2)
        k4 = rate(rho + dt * k3)
        rho = rho + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(FastState(k * dt, rho, solve_nutrient(rho, params, grid), params, grid))
    return out


def rho_equation_residual(trajectory: Sequence, s: Optional[float] = None) -> tuple:
    """Residual of the closed population equation with traits frozen at time ``s``.

    For consecutive snapshots the population derivative is approximated by a
    centred difference, and ``R = eps d_t rho - (r(xbar(s)) c - d(xbar(s))(1 + rho)) rho``
    is evaluated at the interior snapshots. ``s=None`` uses ``s = t``.
    Returns ``(times, R)`` with ``R`` of shape ``(len(times), n_y)``.
    """
    times = np.array([st.t for st in trajectory])
    if len(times) < 3:
        raise ValueError("need at least three snapshots")
    p = trajectory[0].params
    eps = p.eps
    if s is not None:
        ks = int(np.argmin(np.abs(times - s)))
        x_frozen = track_argmax(trajectory[ks].u, p.grid)
    out = []
    for k in range(1, len(times) - 1):
        st = trajectory[k]
        drho = (trajectory[k + 1].rho - trajectory[k - 1].rho) / (times[k + 1] - times[k - 1])
        xb = track_argmax(st.u, p.grid) if s is None else x_frozen
        model = (p.r_at(xb) * st.c - p.d_at(xb) * (1.0 + st.rho)) * st.rho
        out.append(eps * drho - model)
    return times[1:-1], np.array(out)


def meta_distance(state, meta: MetaState) -> tuple:
    """``(int |rho - rho_bar|**2, ||c - c_bar||_H1**2)`` by midpoint sums."""
    grid = state.grid
    drho = state.rho - meta.rho
    dc = state.c - meta.c
    l2 = grid.integrate(drho**2)
    h1 = grid.integrate(dc**2) + _forward_gradient_sq(dc, grid) * grid.cell_volume
    return l2, h1


@dataclass
class RateFit:
    eps: np.ndarray
    stats: np.ndarray
    exponent: float
    constant: float
    residual: float

    def table(self) -> str:
        lines = ["eps,statistic"]
        lines += [f"{e:.17g},{v:.17g}" for e, v in zip(self.eps, self.stats)]
        lines.append(f"# exponent={self.exponent:.6g} constant={self.constant:.6g} residual={self.residual:.3g}")
        return "\n".join(lines)


def fit_rate(eps: Sequence[float], stats: Sequence[float]) -> RateFit:
    """Least-squares fit of ``stat = C eps**p`` on log-log axes."""
    eps = np.asarray(eps, dtype=float)
    stats = np.asarray(stats, dtype=float)
    if len(eps) < 3:
        raise NeedThreePoints(f"rate fit needs at least three eps values, got {len(eps)}")
    if np.any(stats <= 0) or np.any(eps <= 0):
        raise ValueError("rate fit needs positive statistics")
    A = np.vstack([np.log(eps), np.ones_like(eps)]).T
    coef, res, _, _ = np.linalg.lstsq(A, np.log(stats), rcond=None)
    resid = float(np.sqrt(res[0] / len(eps))) if res.size else 0.0
    return RateFit(eps, stats, float(coef[0]), float(math.exp(coef[1])), resid)


@dataclass
class StudyReport:
    eps: list
    sup_distance: list
    initial_distance: list
    distance_at_sqrt_eps: list
    sup_concentration: list
    xbar_final: list
    fit: Optional[RateFit]
    concentration_fit: Optional[RateFit]
    smallness: float
    in_smallness_regime: bool
    xbar_limit_gap: list = field(default_factory=list)

    def table(self) -> str:
        head = "eps,initial_dist,dist_at_sqrt_eps,sup_dist_after_sqrt_eps,sup_concentration,xbar_limit_gap"
        rows = [head]
        for k, e in enumerate(self.eps):
            gap = self.xbar_limit_gap[k] if self.xbar_limit_gap else float("nan")
            rows.append(
                f"{e:.6g},{self.initial_distance[k]:.6e},{self.distance_at_sqrt_eps[k]:.6e},"
                f"{self.sup_distance[k]:.6e},{self.sup_concentration[k]:.6e},{gap:.6e}"
            )
        if self.fit is not None:
            rows.append(f"# distance slope={self.fit.exponent:.4f} (fit residual {self.fit.residual:.3g})")
        if self.concentration_fit is not None:
            rows.append(f"# concentration slope={self.concentration_fit.exponent:.4f}")
        if not self.in_smallness_regime:
            rows.append("# outside smallness regime: no slope assertion")
        return "\n".join(rows)


def _sweep_one(params, grid, init, T, sample_every):
    from .dynamics import cfl_dt, init_state, integrate, step

    state = init_state(init, params, grid)
    t_split = min(math.sqrt(params.eps), T)
    record = {"sup_dist": 0.0, "sup_conc": 0.0, "n": 0}
    meta0 = solve_metastable(track_argmax(state.u, params.grid), params, grid)
    initial = meta_distance(state, meta0)[0]
    guess = [meta0.c]

    def dist(st):
        meta = solve_metastable(track_argmax(st.u, params.grid), params, grid, init_guess=guess[0])
        guess[0] = meta.c
        return meta_distance(st, meta)[0]

    def watch(st):
        record["n"] += 1
        if record["n"] % sample_every:
            return
        record["sup_conc"] = max(record["sup_conc"], float(np.max(concentration_error(st))))
        if st.t >= t_split - 1e-12:
            record["sup_dist"] = max(record["sup_dist"], dist(st))

    first = integrate(state, step, cfl_dt, t_split, t_split, on_step=watch)
    mid = first[-1]
    at_split = dist(mid)
    record["sup_dist"] = max(record["sup_dist"], at_split)
    record["sup_conc"] = max(record["sup_conc"], float(np.max(concentration_error(mid))))
    last = integrate(mid, step, cfl_dt, T, max(T - t_split, 1e-300), on_step=watch)[-1] if T > t_split else mid
    return initial, at_split, record["sup_dist"], record["sup_conc"], track_argmax(last.u, params.grid)


def convergence_study(
    params: ModelParams,
    grid: SpatialGrid,
    init,
    T: float,
    eps_list: Sequence[float],
    smallness: Optional[float] = None,
    compare_limit: bool = True,
    sample_every: int = 1,
) -> StudyReport:
    """Sweep ``eps`` and fit how the meta-stable distance after ``t = sqrt(eps)`` scales.

    ``smallness`` gates the slope assertion (default ``0.1 rho_lo**2 |Omega|``).
    When ``compare_limit`` is set the final fittest traits are compared with
    the constrained limit solver run from the same initial data.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise NeedThreePoints(f"convergence study needs at least three eps values, got {len(eps_list)}")
    rho_lo = equilibrium_bounds(params)[0]
    if smallness is None:
        smallness = 0.1 * rho_lo**2 * grid.measure
    rows = [_sweep_one(params.with_eps(e), grid, init, T, sample_every) for e in eps_list]
    initial = [r[0] for r in rows]
    in_regime = max(initial) <= smallness
    sup_dist = [r[2] for r in rows]
    sup_conc = [r[3] for r in rows]
    fit = fit_rate(eps_list, sup_dist) if min(sup_dist) > 0 else None
    conc_fit = fit_rate(eps_list, sup_conc) if min(sup_conc) > 0 else None
    gaps = []
    if compare_limit:
        from .hj import simulate_limit

        lim = simulate_limit(params, grid, init, T, T if T > 0 else 1.0)[-1]
        gaps = [float(np.max(np.abs(r[4] - lim.xbar))) for r in rows]
    return StudyReport(
        eps=eps_list,
        sup_distance=sup_dist,
        initial_distance=initial,
        distance_at_sqrt_eps=[r[1] for r in rows],
        sup_concentration=sup_conc,
        xbar_final=[r[4] for r in rows],
        fit=fit,
        concentration_fit=conc_fit,
        smallness=smallness,
        in_smallness_regime=in_regime,
        xbar_limit_gap=gaps,
    )


@dataclass
class DiagnosticsReport:
    t: float
    violations: List[Violation]
    envelope: tuple
    riccati_K: float
    window: tuple
    concentration: Dict[str, float]
    lyapunov: Optional[LyapunovTerms]
    distances: Optional[tuple]

    @property
    def ok(self) -> bool:
        return not self.violations and self.window[3]

    def summary(self) -> str:
        lo, actual, hi, ok = self.window
        parts = [
            f"t={self.t:.6g}",
            f"violations={len(self.violations)}",
            f"uxx=[{self.envelope[0]:.4g},{self.envelope[1]:.4g}] K(t)={self.riccati_K:.4g}",
            f"max_u in [{np.min(actual):.6g},{np.max(actual):.6g}] window [{lo:.6g},{hi:.6g}] ok={ok}",
        ]
        if self.distances is not None:
            parts.append(f"dist_rho={self.distances[0]:.4e} dist_c_H1={self.distances[1]:.4e}")
        return " ".join(parts)


def report(state, meta: Optional[MetaState] = None, dt: Optional[float] = None, tol_scale: float = 1.0) -> DiagnosticsReport:
    """Aggregate the pointwise checks for one ``StateEps``."""
    p = state.params
    dx = p.grid.dx
    if dt is None:
        from .dynamics import cfl_dt

        dt = cfl_dt(state)
    env = concavity_envelope(state.u, dx)
    k0 = getattr(state, "k0", math.nan)
    K_t = riccati_envelope(state.t, k0) if np.isfinite(k0) else math.nan
    K_window = effective_curvature(env)
    if np.isfinite(K_t):
        K_window = min(K_t, 1.0 / abs(env[0])) if env[1] < 0 else 0.0
    window = max_u_window(state, K=K_window, tol=0.5 * p.eps * tol_scale)
    if meta is None:
        try:
            meta = solve_metastable(track_argmax(state.u, p.grid), p, state.grid, init_guess=state.c)
        except Exception:
            meta = None
    lyap = lyapunov(state, meta) if meta is not None and np.all(meta.rho > 0) else None
    dists = meta_distance(state, meta) if meta is not None else None
    return DiagnosticsReport(
        t=state.t,
        violations=check_bounds(state, rho_tol=5.0 * (dt + dx**2) * tol_scale, c_tol=1e-10 * tol_scale),
        envelope=env,
        riccati_K=K_t,
        window=window,
        concentration={k: float(np.max(concentration_error(state, f))) for k, f in TEST_FUNCTIONS.items()},
        lyapunov=lyap,
        distances=dists,
    )
