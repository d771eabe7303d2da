"""
Attraction to the meta-stable state
===================================

Start slightly off the meta-stable population and sweep eps. After the
initial layer t = sqrt(eps) the population stays close to the meta-stable
state, and the distance shrinks with eps. The sweep takes about half a minute.
"""

# %%
import math

from selmut import InitSpec, Profile, SpatialGrid, TraitGrid, ModelParams, validate_params
from selmut.diagnostics import convergence_study
from selmut.model import CoefficientSpec, equilibrium_bounds, sample_coefficients

# death rates of order one make the population relax quickly
tgrid = TraitGrid(-1.0, 1.0, 201)
r = sample_coefficients(CoefficientSpec("quadratic-concave", 300.0, 1.0), tgrid)
d = sample_coefficients(CoefficientSpec("quadratic-convex", 1.0, 0.001), tgrid)
params = validate_params(ModelParams(tgrid, r, d, lam=3.0, c_B=4.0, eps=0.2))
grid = SpatialGrid.interval(0.0, 1.0, 101)

# %%
# A constant mass shift puts the squared L2 distance at 0.04 rho_lo**2 |Omega|.
rho_lo = equilibrium_bounds(params)[0]
shift = rho_lo * math.sqrt(0.04 * grid.measure / (grid.size * grid.cell_volume))
init = InitSpec(Profile("sinusoidal", 0.0, amplitude=0.3), rho_shift=shift)

# %%
study = convergence_study(params, grid, init, T=1.0, eps_list=[0.2, 0.1, 0.05, 0.025], compare_limit=False)
print(study.table())
