"""Selection-mutation dynamics with a diffusing nutrient.

Simulates the Hopf-Cole form of the small-mutation system, its meta-stable
states and its constrained Hamilton-Jacobi limit, and checks the quantitative
estimates those objects satisfy.
"""
from .model import (
    CoefficientSpec,
    ConvexityViolation,
    EmptyGrid,
    InsufficientCB,
    ModelError,
    ModelParams,
    NonPositiveCoefficient,
    SpatialGrid,
    TraitGrid,
    ValidatedParams,
    equilibrium_bounds,
    sample_coefficients,
    validate_params,
)
from .profiles import NonConcaveProfile, track_argmax
from .elliptic import (
    MetaState,
    NewtonDiverged,
    OutOfRangeTrait,
    SolverFailure,
    metastable_from_argmax,
    solve_metastable,
    solve_nutrient,
)
from .schemes import lf_hamiltonian
from .dynamics import (
    CflViolation,
    InitSpec,
    MassUnreachable,
    NonFiniteField,
    Profile,
    StateEps,
    cfl_dt,
    compute_rho,
    init_state,
    simulate,
    step,
)
from .hj import LimitState, init_limit, limit_step, simulate_limit
from .config import ConfigError, RunConfig, load_config, parse_config
from .snapshots import read_snapshot, write_snapshot

__version__ = "0.1.0"
