import numpy as np
import pytest
from hypothesis import given, strategies as st

from selmut.model import TraitGrid
from selmut.profiles import NonConcaveProfile, count_maxima_runs, second_differences, track_argmax
from tests.oracles import dense_argmax


@given(st.floats(-0.9, 0.9), st.integers(11, 301))
def test_quadratic_argmax_is_exact(x0, n):
    g = TraitGrid(-1, 1, n)
    u = -((g.x - x0) ** 2)
    assert track_argmax(u, g) == pytest.approx(x0, abs=1e-12)


def test_quartic_against_dense_oracle():
    # zero curvature at the peak: the three-point vertex is only first order here
    f = lambda x: -((x - 0.31) ** 4)
    ref = dense_argmax(f, -1, 1)
    errors = []
    for n in (41, 81, 161, 321):
        g = TraitGrid(-1, 1, n)
        err = abs(track_argmax(f(g.x), g) - ref)
        assert err <= 0.25 * g.dx
        errors.append(err)
    assert errors[-1] < errors[0] / 4


def test_flat_profile_breaks_ties_low():
    g = TraitGrid(-1, 1, 11)
    assert track_argmax(np.zeros(11), g) == -1.0
    u = np.array([0, 1, 2, 3, 3, 2, 1, 0, -1, -2, -3], dtype=float)
    # plateau of two nodes: lower node, vertex refinement is exact for the parabola through it
    assert track_argmax(u, g) == pytest.approx(g.x[3] + 0.5 * g.dx)


def test_boundary_maximum_returns_node():
    g = TraitGrid(0, 1, 11)
    assert track_argmax(-g.x, g) == 0.0
    assert track_argmax(g.x, g) == 1.0


def test_columns_are_independent():
    g = TraitGrid(-1, 1, 101)
    centers = np.array([-0.5, 0.0, 0.37])
    u = -((g.x[:, None] - centers[None, :]) ** 2)
    assert track_argmax(u, g) == pytest.approx(centers, abs=1e-12)


def test_two_separated_maxima_raise():
    g = TraitGrid(-1, 1, 41)
    u = -((g.x**2 - 0.25) ** 2)
    with pytest.raises(NonConcaveProfile):
        track_argmax(u, g)
    assert count_maxima_runs(u)[0] == 2


def test_second_differences_constant_curvature():
    g = TraitGrid(-1, 1, 21)
    d2 = second_differences(-0.5 * g.x**2, g.dx)
    assert d2 == pytest.approx(np.full(19, -1.0), abs=1e-12)


def test_vertex_between_boundary_node_and_neighbour():
    # the top of the parabola lies between the first two nodes; both tie
    g = TraitGrid(-1, 1, 11)
    u = -((g.x + 0.9) ** 2)
    assert track_argmax(u, g) == pytest.approx(-0.9, abs=1e-12)
    assert track_argmax(u[::-1], g) == pytest.approx(0.9, abs=1e-12)
