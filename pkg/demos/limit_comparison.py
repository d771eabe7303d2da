"""
The constrained limit and its eps approximations
================================================

Run the eps = 0 solver, which keeps max_x u = 0 and closes the population with
the meta-stable state, and compare its fittest traits with eps-runs from the
same initial data.
"""

# %%
import numpy as np

from selmut import InitSpec, Profile, SpatialGrid, TraitGrid, ModelParams, validate_params
from selmut.dynamics import simulate
from selmut.hj import simulate_limit
from selmut.model import CoefficientSpec, sample_coefficients

tgrid = TraitGrid(-1.0, 1.0, 201)
r = sample_coefficients(CoefficientSpec("quadratic-concave", 30.0, 1.0), tgrid)
d = sample_coefficients(CoefficientSpec("quadratic-convex", 0.1, 0.01), tgrid)
params = validate_params(ModelParams(tgrid, r, d, lam=3.0, c_B=4.0, eps=0.1))
grid = SpatialGrid.interval(0.0, 1.0, 101)
init = InitSpec(Profile("sinusoidal", 0.0, amplitude=0.3))
T = 0.5

# %%
limit = simulate_limit(params, grid, init, T, T)[-1]
print("limit: |max_x u| =", np.max(np.abs(limit.u.max(axis=0))))
print("limit: rho in [%.4g, %.4g]" % (limit.rho.min(), limit.rho.max()))

# %%
# The gap in the fittest trait shrinks with eps.
for eps in (0.1, 0.05, 0.025):
    final = simulate(params.with_eps(eps), grid, init, T, T)[-1]
    gap = np.max(np.abs(final.xbar - limit.xbar))
    print(f"eps={eps:<6} sup |xbar_eps - xbar_limit| = {gap:.3e}")
