import math

import numpy as np
import pytest

from selmut.diagnostics import (
    NeedThreePoints,
    FastState,
    check_bounds,
    concavity_envelope,
    concentration_error,
    convergence_study,
    effective_curvature,
    fast_system_flow,
    fit_rate,
    holder_xeps,
    lyapunov,
    max_u_bounds,
    max_u_window,
    meta_distance,
    report,
    rho_equation_residual,
)
from selmut.dynamics import InitSpec, Profile, StateEps, cfl_dt, compute_rho, init_state, integrate, simulate, step
from selmut.elliptic import solve_metastable, solve_nutrient
from selmut.model import TraitGrid, equilibrium_bounds
from tests import regimes


def state_from_u(u, params, grid, t=0.0):
    rho = compute_rho(u, params.eps, params.grid)
    return StateEps(t, u, rho, solve_nutrient(rho, params, grid), params, grid)


@pytest.fixture(scope="module")
def wavy_meta(slow_params, grid101):
    xbar = 0.2 * np.sin(2 * np.pi * grid101.interior_coords()[:, 0])
    return solve_metastable(xbar, slow_params, grid101)


# --- invariant region ---------------------------------------------------------


def test_bounds_flag_single_overshoot(slow_params, grid101):
    init = InitSpec(Profile("constant", 0.0))
    state = init_state(init, slow_params, grid101)
    rho_hi = equilibrium_bounds(slow_params)[1]
    rho = state.rho.copy()
    rho[40] = rho_hi + 1.0
    bad = state.replace(rho=rho)
    found = [v for v in check_bounds(bad, dt=1e-4) if v.field.startswith("rho")]
    assert len(found) == 1
    assert found[0].field == "rho_hi" and found[0].index == 40
    assert found[0].excess == pytest.approx(1.0, rel=1e-12)


def test_bounds_hold_along_a_meta_stable_start(slow_params):
    grid = regimes.make_grid(41)
    state = init_state(InitSpec(Profile("constant", 0.0)), slow_params, grid)
    for _ in range(100):
        dt = cfl_dt(state)
        state = step(state, dt)
        assert check_bounds(state, dt=dt) == []


def test_nutrient_lower_bound_skips_boundary_cells(slow_params, grid101):
    state = init_state(InitSpec(Profile("constant", 0.0)), slow_params, grid101)
    c = state.c.copy()
    # a nutrient value near zero next to the Dirichlet boundary is admissible
    c[0] = 1e-6
    state = state.replace(c=c)
    assert [v for v in check_bounds(state, dt=1e-4) if v.field == "c_lo"] == []
    flagged = check_bounds(state, dt=1e-4, c_margin=0)
    assert [(v.field, v.index) for v in flagged] == [("c_lo", 0)]


# --- concavity and the max-u window -------------------------------------------


def test_envelope_of_quadratic_is_exact():
    tg = TraitGrid(-1.0, 1.0, 201)
    lo, hi = concavity_envelope(-tg.x**2 / 2, tg.dx)
    assert lo == pytest.approx(-1.0, abs=1e-10) and hi == pytest.approx(-1.0, abs=1e-10)
    assert effective_curvature((lo, hi)) == pytest.approx(1.0, abs=1e-10)


def test_envelope_of_quartic_degenerates():
    tg = TraitGrid(-1.0, 1.0, 201)
    h = tg.dx
    lo, hi = concavity_envelope(-tg.x**4, h)
    # discrete second difference of x**4 is 12 x**2 + 2 h**2
    assert hi == pytest.approx(-2 * h**2, abs=1e-9)
    assert lo == pytest.approx(-(12 * (1 - h) ** 2 + 2 * h**2), rel=1e-9)


def test_linear_profile_is_not_concave():
    tg = TraitGrid(-1.0, 1.0, 51)
    env = concavity_envelope(np.stack([0.3 * tg.x] * 4, axis=1), tg.dx)
    assert env == pytest.approx((0.0, 0.0), abs=1e-12)
    assert effective_curvature(env) == 0.0


def test_window_closed_form():
    lo, hi = max_u_bounds(0.01, 1.0, 1.0, 3.0)
    assert lo == pytest.approx(0.01384, abs=1e-5)
    assert hi == pytest.approx(0.02483, abs=1e-5)
    assert lo < hi


def test_window_contains_gaussian_of_admissible_mass():
    params = regimes.make_params("slow", eps=0.01, n_x=2001)
    grid = regimes.make_grid(11)
    mass = 2.0
    u = -params.grid.x[:, None] ** 2 / 2 + np.zeros(grid.size)
    u = u + 0.01 * math.log(mass / compute_rho(u, 0.01, params.grid)[0])
    state = state_from_u(u, params, grid)
    assert np.allclose(state.rho, mass, rtol=1e-12)
    lo, actual, hi, ok = max_u_window(state, K=1.0)
    assert ok
    # a Gaussian of variance eps and mass m peaks at eps log(m / sqrt(2 pi eps))
    assert np.allclose(actual, 0.01 * math.log(mass / math.sqrt(2 * math.pi * 0.01)), atol=1e-9)
    assert lo <= actual.min() <= actual.max() <= hi


def test_window_scaling_in_eps_and_k():
    rho_lo, rho_hi = 1.5, 40.0
    for eps in (0.1, 0.05, 0.01, 0.001):
        lo, hi = max_u_bounds(eps, 1.0, rho_lo, rho_hi)
        mid = 0.5 * (lo + hi)
        # the midpoint is -(eps/2) log eps plus a term linear in eps
        offset = 0.5 * math.log(rho_lo * rho_hi) - math.log(math.sqrt(2 * math.pi))
        assert mid == pytest.approx(-0.5 * eps * math.log(eps) + eps * offset, rel=1e-12)
        lo4, hi4 = max_u_bounds(eps, 0.25, rho_lo, rho_hi)
        assert lo - lo4 == pytest.approx(eps * math.log(2), rel=1e-12)
        assert hi4 - hi == pytest.approx(eps * math.log(2), rel=1e-12)


def test_window_rejects_non_concave(slow_params, grid101):
    tg = slow_params.grid
    u = np.stack([0.1 * tg.x] * grid101.size, axis=1)
    lo, actual, hi, ok = max_u_window(state_from_u(u, slow_params, grid101))
    assert not ok and lo == -math.inf and hi == math.inf


# --- concentration ------------------------------------------------------------


def _params_eps(eps, n_x=2001):
    return regimes.make_params("slow", eps=eps, n_x=n_x)


def test_concentration_of_constant_test_function_vanishes():
    params = _params_eps(0.01)
    grid = regimes.make_grid(11)
    u = -(params.grid.x[:, None] - 0.1) ** 2 / 2 + 0.02 + np.zeros(grid.size)
    state = state_from_u(u, params, grid)
    err = concentration_error(state, lambda x: np.full_like(np.asarray(x, dtype=float), 2.5))
    assert np.max(err) <= 1e-12 * np.max(state.rho)


def test_symmetric_gaussian_concentrates_at_its_centre():
    params = _params_eps(0.01)
    grid = regimes.make_grid(11)
    u = -params.grid.x[:, None] ** 2 / 2 + np.zeros(grid.size)
    state = state_from_u(u, params, grid)
    err = concentration_error(state)
    assert np.max(err) <= 1e-12
    assert np.max(err) <= 0.106


def test_asymmetric_profile_shows_sqrt_eps_rate():
    errs = []
    for eps in (0.01, 0.0025):
        params = _params_eps(eps)
        grid = regimes.make_grid(5)
        x = params.grid.x
        # C1 profile with different curvatures on the two sides of the top
        u = np.where(x < 0, -x**2 / 2, -2 * x**2)[:, None] + np.zeros(grid.size)
        state = state_from_u(u, params, grid)
        errs.append(np.max(concentration_error(state) / state.rho))
    # the half-Gaussian mean shift is sqrt(2 eps / pi) (1 - 1/2)
    assert errs[0] == pytest.approx(math.sqrt(2 * 0.01 / math.pi) * 0.5, rel=0.02)
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)


# --- Hoelder estimate for the fittest trait -----------------------------------


def test_holder_constant_of_stationary_run():
    params = regimes.make_params("slow", eps=0.05)
    grid = regimes.make_grid(21)
    snaps = simulate(params, grid, InitSpec(Profile("constant", 0.0)), 0.3, 0.05)
    fit = holder_xeps(snaps)
    assert fit.pairs == len(snaps) * (len(snaps) - 1) // 2
    assert fit.constant <= 1e-8


def _holder_run(eps, dt_scale=1.0, T=0.5):
    params = regimes.make_params("slow", eps=eps)
    grid = regimes.make_grid(21)
    state = init_state(regimes.sinusoidal_init(), params, grid)
    snaps = integrate(state, step, lambda s: dt_scale * cfl_dt(s), T, 0.05)
    return holder_xeps(snaps).constant


def test_holder_constant_is_stable_in_dt_and_eps():
    c1 = _holder_run(0.05)
    c_half = _holder_run(0.05, dt_scale=0.5)
    assert 0 < c1 < math.inf
    assert c_half == pytest.approx(c1, rel=0.1)
    cs = [c1, _holder_run(0.1), _holder_run(0.025)]
    assert max(cs) / min(cs) <= 2.0


# --- Lyapunov functional ------------------------------------------------------


def test_lyapunov_vanishes_at_the_meta_stable_state(slow_params, grid101, wavy_meta):
    st = FastState(0.0, wavy_meta.rho, wavy_meta.c, slow_params, grid101)
    terms = lyapunov(st, wavy_meta)
    for v in (terms.value, terms.dissipation_rho, terms.dissipation_grad, terms.dissipation_c, terms.cubic):
        assert v == 0.0


def _perturbed_flow(amplitude, meta, params, grid, n_steps=100, dt=1e-4):
    wave = np.sin(2 * np.pi * grid.interior_coords()[:, 0])
    return fast_system_flow(meta.rho * (1 + amplitude * wave), meta, params, grid, dt, n_steps)


def test_lyapunov_decreases_along_the_fast_system(slow_params, grid101, wavy_meta):
    traj = _perturbed_flow(1e-2, wavy_meta, slow_params, grid101)
    terms = [lyapunov(s, wavy_meta) for s in traj]
    values = np.array([t.value for t in terms])
    assert values[0] > 0
    assert np.all(np.diff(values) < 0)
    assert all(t.rhs < 0 for t in terms)
    assert all(t.dissipation_rho <= 0 and t.dissipation_grad <= 0 and t.dissipation_c <= 0 for t in terms)


def test_lyapunov_identity_matches_time_derivative(slow_params, grid101, wavy_meta):
    dt = 1e-5
    traj = _perturbed_flow(1e-2, wavy_meta, slow_params, grid101, n_steps=2, dt=dt)
    values = [lyapunov(s, wavy_meta).value for s in traj]
    rate = (values[2] - values[0]) / (2 * dt)
    rhs = lyapunov(traj[1], wavy_meta).rhs
    assert rate == pytest.approx(rhs, rel=1e-4)


def test_cubic_term_is_higher_order(slow_params, grid101, wavy_meta):
    amps = np.array([1e-3, 1e-2, 1e-1])
    quad, cubic = [], []
    for a in amps:
        st = _perturbed_flow(a, wavy_meta, slow_params, grid101, n_steps=0)[0]
        terms = lyapunov(st, wavy_meta)
        quad.append(abs(terms.quadratic))
        cubic.append(abs(terms.cubic))
    q_slope = np.polyfit(np.log(amps), np.log(quad), 1)[0]
    c_slope = np.polyfit(np.log(amps), np.log(cubic), 1)[0]
    assert q_slope == pytest.approx(2.0, abs=0.05)
    assert c_slope >= 2.9
    assert cubic[1] / quad[1] <= 1e-3


# --- closed population equation -----------------------------------------------


def _drifting_run(eps):
    params = regimes.make_params("slow", eps=eps)
    grid = regimes.make_grid(21)
    return simulate(params, grid, InitSpec(Profile("constant", 0.5)), 0.5, 0.01)


def test_population_residual_shrinks_with_eps():
    late = []
    eps_list = [0.1, 0.05, 0.025, 0.0125]
    for eps in eps_list:
        t, R = rho_equation_residual(_drifting_run(eps))
        late.append(np.max(np.abs(R[t > 0.3])))
    slope = fit_rate(eps_list, late).exponent
    # consistent with the sqrt(eps) bound
    assert slope >= 0.5


def test_frozen_trait_residual_grows_with_time_lag():
    snaps = _drifting_run(0.05)
    t, R = rho_equation_residual(snaps)
    ts, Rs = rho_equation_residual(snaps, s=0.2)
    lag = np.abs(ts - 0.2)
    extra = np.max(np.abs(Rs - R), axis=1)
    sel = (lag > 0) & (lag <= 0.2)
    slope = np.polyfit(np.log(lag[sel]), np.log(extra[sel]), 1)[0]
    # the bound allows sqrt|t - s|; a smooth drift gives a linear lag
    assert slope >= 0.5
    assert np.max(extra[lag == 0]) == 0.0


def test_trait_homogeneous_residual_converges_with_the_trait_grid():
    from selmut.model import ModelParams, SpatialGrid, TraitGrid

    worst = []
    for n_x in (201, 401, 801):
        tg = TraitGrid(-2.0, 2.0, n_x)
        params = ModelParams(tg, np.full(n_x, 3.0), np.full(n_x, 1.0), 3.0, 4.0, 0.05)
        init = InitSpec(Profile("constant", 0.0), 1.0, Profile("constant", 1.0))
        snaps = simulate(params, SpatialGrid.interval(0, 1, 11), init, 0.2, 0.002)
        worst.append(np.max(np.abs(rho_equation_residual(snaps)[1])))
    # only the scheme's numerical viscosity remains, first order in dx
    assert worst[0] / worst[1] == pytest.approx(2.0, rel=0.1)
    assert worst[1] / worst[2] == pytest.approx(2.0, rel=0.1)


def test_residual_needs_three_snapshots(slow_params, grid101):
    st = init_state(InitSpec(), slow_params, regimes.make_grid(11))
    with pytest.raises(ValueError):
        rho_equation_residual([st, st])


# --- distances, rates and the study -------------------------------------------


def test_meta_distance_zero_and_constant_shift(slow_params, grid101, wavy_meta):
    st = FastState(0.0, wavy_meta.rho, wavy_meta.c, slow_params, grid101)
    assert meta_distance(st, wavy_meta) == (0.0, 0.0)
    delta = 0.3
    shifted = FastState(0.0, wavy_meta.rho + delta, wavy_meta.c, slow_params, grid101)
    l2, h1 = meta_distance(shifted, wavy_meta)
    assert l2 == pytest.approx(delta**2 * grid101.size * grid101.cell_volume, rel=1e-12)
    assert h1 == 0.0


def test_fit_rate_recovers_power_law():
    eps = [0.2, 0.1, 0.05, 0.025]
    fit = fit_rate(eps, [3.0 * e**1.5 for e in eps])
    assert fit.exponent == pytest.approx(1.5, abs=1e-12)
    assert fit.constant == pytest.approx(3.0, rel=1e-12)
    assert fit.residual <= 1e-12
    assert "exponent=1.5" in fit.table()


def test_fit_rate_input_checks():
    with pytest.raises(NeedThreePoints):
        fit_rate([0.1, 0.05], [1.0, 0.5])
    with pytest.raises(ValueError):
        fit_rate([0.1, 0.05, 0.02], [1.0, 0.0, 0.5])


def test_study_needs_three_eps(slow_params):
    with pytest.raises(NeedThreePoints):
        convergence_study(slow_params, regimes.make_grid(11), InitSpec(), 0.1, [0.1])


def test_study_flags_large_initial_perturbation():
    params = regimes.make_params("slow", n_x=101)
    grid = regimes.make_grid(11)
    init = InitSpec(Profile("constant", 0.0), rho_shift=1.0)
    rep = convergence_study(params, grid, init, 0.05, [0.02, 0.01, 0.005], smallness=1e-3, compare_limit=False)
    assert not rep.in_smallness_regime
    assert "outside smallness regime" in rep.table()
    assert len(rep.table().splitlines()) >= 4


def test_report_is_finite_and_side_effect_free(slow_params, grid101):
    state = init_state(regimes.sinusoidal_init(), slow_params, grid101)
    arrays = [state.u.copy(), state.rho.copy(), state.c.copy()]
    rep = report(state)
    for before, after in zip(arrays, [state.u, state.rho, state.c]):
        assert np.array_equal(before, after)
    assert rep.ok
    assert all(math.isfinite(v) for v in rep.concentration.values())
    assert math.isfinite(rep.lyapunov.value) and all(math.isfinite(d) for d in rep.distances)
    assert "violations=0" in rep.summary()
