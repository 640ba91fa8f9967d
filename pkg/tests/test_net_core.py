import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colombeau import expr as E
from colombeau.errors import (CapabilityError, ConfigurationError, GridLookupError,
                              InvariantViolation)
from colombeau.net_core import (CompactBox, Concentration, EpsilonGrid, GeneralizedNumber,
                                GeneralizedPoint, NetFunction, NetVectorField, default_grid,
                                eval_net, make_epsilon_grid, partial, point_at, sample_box)


def test_default_grid_shape():
    g = default_grid()
    assert len(g) == 21
    assert g.values[0] == 2.0 ** -4 and g.values[-1] == 2.0 ** -24
    assert g.tail_start == 10
    assert len(g.tail) == 11


@pytest.mark.parametrize("kw", [dict(base=1.0), dict(base=0.0), dict(k_min=4, k_max=8),
                                dict(k_min=-1, k_max=10)])
def test_grid_validation(kw):
    with pytest.raises(ConfigurationError):
        make_epsilon_grid(**kw)


def test_grid_rejects_unsorted():
    with pytest.raises(ConfigurationError):
        EpsilonGrid(tuple(2.0 ** -k for k in range(10))[::-1], 2)


def test_grid_lookup(grid):
    assert grid.index(2.0 ** -5) == 1
    with pytest.raises(GridLookupError):
        grid.check(0.3)


def test_box_validation():
    with pytest.raises(ConfigurationError):
        CompactBox(((0.0, 0.0),))
    with pytest.raises(ConfigurationError):
        CompactBox(((0.0, 1.0),), resolution=10)
    with pytest.raises(ConfigurationError):
        CompactBox(((0.0, math.inf),))


def test_sample_box_contains_corners_and_center():
    K = CompactBox(((-1.0, 1.0), (0.5, 2.0)))
    pts = sample_box(K)
    assert pts.shape == (41 * 41, 2)
    rows = {tuple(p) for p in pts}
    assert (-1.0, 0.5) in rows and (1.0, 2.0) in rows and (0.0, 1.25) in rows
    assert np.all(K.contains(pts))


def test_sample_box_dimension_cap():
    with pytest.raises(CapabilityError):
        sample_box(CompactBox.cube(1.0, 5))


def test_concentration_points_are_added(grid):
    u = NetFunction(grid, 2, E.var(0), concentration=Concentration(1.0, ((0.5, 0.0),)))
    eps = grid.values[-1]
    pts = u.sample_points(eps, CompactBox.cube(1.0, 2))
    assert len(pts) > 41 * 41
    assert np.any(np.all(pts == [0.5 * eps, 0.0], axis=1))


def test_exact_partials(grid):
    u = NetFunction(grid, 2, E.EPS * E.power(E.var(0), 2) * E.var(1))
    eps = grid.values[3]
    assert partial(u, eps, (1, 1), [3.0, 5.0]) == pytest.approx(2 * eps * 3.0, rel=1e-15)
    assert eval_net(u, eps, [1.0, 2.0]) == pytest.approx(2 * eps)
    with pytest.raises(CapabilityError):
        u.partial(eps, (2, 1), np.zeros((1, 2)))


def test_black_box_net_matches_closed_form(grid):
    f = NetFunction.from_callable(grid, 1, lambda eps, x: math.sin(x[0]) / eps)
    g = NetFunction(grid, 1, E.func("sin", E.var(0)) * E.power(E.EPS, -1))
    X = np.linspace(-1, 1, 7)[:, None]
    eps = grid.values[2]
    assert f.approximate and not g.approximate
    np.testing.assert_allclose(f.partial(eps, (1,), X), g.partial(eps, (1,), X), rtol=1e-8)
    np.testing.assert_allclose(f.partial(eps, (2,), X), g.partial(eps, (2,), X), rtol=1e-4, atol=1e-3)


def test_eval_rows_matches_eval(grid):
    u = NetFunction(grid, 1, E.EPS * E.var(0))
    X = np.array([[1.0], [1.0], [2.0]])
    e = np.array(grid.values[:3])
    np.testing.assert_array_equal(u.eval_rows(e, X), e * X[:, 0])


def test_vector_field_validation(grid):
    a = NetFunction(grid, 2, E.var(0))
    with pytest.raises(ConfigurationError):
        NetVectorField([a])
    v = NetVectorField.from_exprs(grid, [-E.var(1), E.var(0)])
    np.testing.assert_array_equal(v.eval(grid.values[0], np.array([[1.0, 0.0]])), [[0.0, 1.0]])
    assert not v.depends_on_eps


def test_generalized_point_bound(grid):
    p = GeneralizedPoint(grid, (E.EPS, 0), bound=1.0)
    p.check()
    q = GeneralizedPoint(grid, (E.power(E.EPS, -1),), bound=1.0)
    with pytest.raises(InvariantViolation):
        q.check()


def test_generalized_number_from_callable(grid):
    n = GeneralizedNumber(grid, lambda e: -math.log(e), name="loge")
    np.testing.assert_allclose(n.values(), -np.log(grid.values))


@settings(max_examples=30, deadline=None)
@given(k=st.integers(4, 24), x=st.floats(-2, 2))
def test_point_evaluation_agrees_with_batch(k, x):
    g = default_grid()
    u = NetFunction(g, 1, E.func("bump", E.power(E.var(0) * E.power(E.EPS, -1), 2)))
    eps = 2.0 ** -k
    batch = u.eval(eps, np.array([[x], [0.0]]))
    assert eval_net(u, eps, [x]) == batch[0]
