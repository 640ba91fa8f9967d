import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colombeau import expr as E
from colombeau.asymptotics import growth_profile
from colombeau.embeddings import FLOW_PAIRS
from colombeau.errors import ConfigurationError, ConstructionInsufficientError, InvariantViolation, \
    PreconditionError
from colombeau.flow_engine import flow
from colombeau.invariance import (budgeted_residual, build_invariant_representative,
                                  default_flow_samples, flow_invariance_test,
                                  generalized_rotation_test, infinitesimal_test, lie_derivative,
                                  planar_slice, polar_reduce_2d, standard_rotation_test,
                                  translation_tests)
from colombeau.net_core import CompactBox, GeneralizedNumber, GeneralizedPoint, NetFunction

CENTER, RADIUS = 0.5, 0.3


def bump_phi(y1, y2):
    s = ((y1 - CENTER) ** 2 + y2 ** 2) / RADIUS ** 2
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(s < 1, np.exp(1 - 1 / np.where(s < 1, 1 - s, 1.0)), 0.0)


def bump_rotation_field(Y1, Y2, h=1e-6):
    """y1 d2 phi - y2 d1 phi by central differences."""
    d1 = (bump_phi(Y1 + h, Y2) - bump_phi(Y1 - h, Y2)) / (2 * h)
    d2 = (bump_phi(Y1, Y2 + h) - bump_phi(Y1, Y2 - h)) / (2 * h)
    return Y1 * d2 - Y2 * d1


def bump_rotation_oracle(m=1201):
    a = np.linspace(CENTER - RADIUS, CENTER + RADIUS, m)
    b = np.linspace(-RADIUS, RADIUS, m)
    Y1, Y2 = np.meshgrid(a, b, indexing="ij")
    return float(np.max(np.abs(bump_rotation_field(Y1, Y2))))


@pytest.fixture(scope="module")
def rot_flow(gal, K2):
    return flow(gal["xi_12_rotation"], (-4.0, 4.0), K2)


def test_lie_derivative_examples(gal, K2):
    xi = gal["xi_12_rotation"]
    assert lie_derivative(xi, gal["sq_norm_2d"]).expr == E.ZERO
    assert lie_derivative(xi, gal["coord_x1_2d"]).expr == -E.var(1)


def test_bump_lie_derivative_matches_change_of_variables(gal, K2):
    lu = lie_derivative(gal["xi_12_rotation"], gal["bump_asym_2d"])
    _, sups = growth_profile(lu, K2).tail
    oracle = bump_rotation_oracle()
    assert np.ptp(sups) <= 1e-9 * oracle
    # grid sampling only sees a lower bound of the true sup
    assert 0.9 * oracle <= sups[0] <= oracle * (1 + 1e-6)
    Y = np.random.default_rng(2).uniform([0.2, -0.3], [0.8, 0.3], (200, 2))
    want = bump_rotation_field(Y[:, 0], Y[:, 1])
    for eps in lu.grid.values[::5]:
        np.testing.assert_allclose(lu.eval(eps, eps * Y), want, atol=1e-7)


def test_infinitesimal_examples(gal, K2, annulus):
    xi = gal["xi_12_rotation"]
    assert infinitesimal_test(xi, gal["delta_radial_2d"], K2).passed
    assert not infinitesimal_test(xi, gal["bump_asym_2d"], K2).passed
    v = infinitesimal_test(xi, gal["bump_asym_2d"], annulus)
    assert v.passed and set(v.evidence.values) == {0.0}


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 1000))
def test_lie_derivative_is_linear(gal, a, b, seed):
    xi = gal["xi_12_rotation"]
    u, w = gal["gauss_2d"], gal["coord_x1_2d"]
    comb = u.with_expr(E.const(a) * u.expr + E.const(b) * w.expr, name="comb")
    X = np.random.default_rng(seed).uniform(-1, 1, (30, 2))
    eps = u.grid.values[7]
    lhs = lie_derivative(xi, comb).eval(eps, X)
    rhs = a * lie_derivative(xi, u).eval(eps, X) + b * lie_derivative(xi, w).eval(eps, X)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_lie_derivative_grid_mismatch(gal):
    from colombeau.net_core import make_epsilon_grid
    other = NetFunction(make_epsilon_grid(4, 20), 2, E.var(0))
    with pytest.raises(ConfigurationError):
        lie_derivative(gal["xi_12_rotation"], other)


def test_flow_examples(rot_flow, gal, grid):
    one = [GeneralizedPoint(grid, (1.0, 0.0), 1.0)]
    etas = [GeneralizedNumber(grid, v) for v in (0.3, 2.5, E.EPS)]
    v = flow_invariance_test(rot_flow, gal["sq_norm_2d"], etas, one)
    assert v.passed and max(v.evidence.values) <= 1e-9
    zero = flow_invariance_test(rot_flow, gal["coord_x1_2d"], [GeneralizedNumber(grid, 0.0)], one)
    assert set(zero.evidence.values) == {0.0}
    pi = flow_invariance_test(rot_flow, gal["coord_x1_2d"], [GeneralizedNumber(grid, math.pi)], one)
    assert not pi.passed
    np.testing.assert_allclose(pi.evidence.values, 2.0, atol=1e-12)


def test_eta_outside_span_is_rejected(rot_flow, gal, grid):
    with pytest.raises(PreconditionError):
        flow_invariance_test(rot_flow, gal["sq_norm_2d"], [GeneralizedNumber(grid, 5.0)],
                             [GeneralizedPoint(grid, (1.0, 0.0), 1.0)])


def test_flow_samples_cover_concentration(grid):
    etas, pts = default_flow_samples(grid, 2)
    assert any(e.name == "0" or e.values().max() == 0 for e in etas)
    assert all(np.linalg.norm(p.position(e)) <= p.bound for p in pts for e in grid)


@pytest.mark.parametrize("xi_name,u_name", FLOW_PAIRS)
def test_infinitesimal_and_flow_agree(gal, xi_name, u_name):
    xi, u = gal[xi_name], gal[u_name]
    K = CompactBox.cube(1.0, xi.dimension)
    fl = flow(xi, (-4.0, 4.0), K)
    assert infinitesimal_test(xi, u, K).passed == flow_invariance_test(fl, u).passed


TRANSLATION_CASES = [("coord_x2_2d", True), ("x2_plus_eps5_sin_x1", True), ("coord_x1_2d", False),
                     ("strip_delta_2d", True), ("x2_plus_eps_x1", False), ("gauss_2d", False)]


@pytest.mark.parametrize("name,expected", TRANSLATION_CASES)
def test_translation_triple_agrees(gal, K2, name, expected):
    verdicts = translation_tests(gal[name], 0, K2)
    assert [v.passed for v in verdicts] == [expected] * 3


def test_representative_examples(gal, K2):
    rep = build_invariant_representative(gal["x2_plus_eps5_sin_x1"], 0, K2)
    assert rep.certified and rep.representative.expr == E.var(1)
    assert rep.difference_slope == pytest.approx(5.0, abs=1e-6)
    same = build_invariant_representative(gal["coord_x2_2d"], 0, K2)
    assert same.representative.expr == gal["coord_x2_2d"].expr
    with pytest.raises(PreconditionError):
        build_invariant_representative(gal["coord_x1_2d"], 0, K2)


def test_slice_difference_has_slope_five(gal, K2):
    u = gal["x2_plus_eps5_sin_x1"]
    diff = u.with_expr(u.expr - E.var(1))
    from colombeau.asymptotics import fit_slope
    eps, sups = growth_profile(diff, K2).tail
    assert fit_slope(eps, sups, 1e-300)[0] == pytest.approx(5.0, abs=1e-6)


def test_construction_insufficient(grid):
    # constant in x1 on K, but the slice at x1 = 0 sees the bump
    u = NetFunction(grid, 2, E.ONE - E.func("bump", E.power(E.var(0), 2)))
    K = CompactBox(((2.0, 3.0), (-1.0, 1.0)))
    v1, v2, v3 = translation_tests(u, 0, K)
    assert v2.passed and not v3.passed
    with pytest.raises(ConstructionInsufficientError):
        build_invariant_representative(u, 0, K)


@settings(max_examples=20, deadline=None)
@given(x=st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2), k=st.integers(0, 20))
def test_representative_partial_is_exactly_zero(gal, K2, x, k):
    rep = build_invariant_representative(gal["x2_plus_eps5_sin_x1"], 0, K2).representative
    eps = rep.grid.values[k]
    assert rep.partial(eps, (1, 0), np.array([x]))[0] == 0.0


def test_standard_rotation_examples(gal, K1, K2):
    v = standard_rotation_test(gal["delta_radial_2d"], K2)
    assert v.passed and set(v.evidence.values) == {0.0}
    bad = standard_rotation_test(gal["bump_asym_2d"], K2, angles=(math.pi / 2,))
    assert not bad.passed
    _, tail = bad.evidence.tail
    assert np.ptp(tail) == 0.0 and tail[0] == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ConfigurationError):
        standard_rotation_test(gal["eps_1d"], K1)


def test_generalized_rotation_examples(gal, K2, grid):
    log_angle = {(0, 1): GeneralizedNumber(grid, -E.func("log", E.EPS))}
    v = generalized_rotation_test(gal["delta_radial_2d"], K2, [log_angle])
    assert v.passed and set(v.evidence.values) == {0.0}
    sin_angle = {(0, 1): GeneralizedNumber(grid, E.func("sin", E.power(E.EPS, -1)))}
    assert generalized_rotation_test(gal["sq_norm_2d"], K2, [sin_angle]).passed
    quarter = {(0, 1): GeneralizedNumber(grid, math.pi / 2)}
    assert not generalized_rotation_test(gal["bump_asym_2d"], K2, [quarter]).passed


@pytest.mark.parametrize("box", [((0.5, 1.0), (-1.0, 1.0)), ((-1.0, -0.2), (0.3, 1.0)),
                                 ((0.1, 0.9), (0.1, 0.9))])
def test_localization_away_from_origin(gal, box):
    K = CompactBox(box)
    u = gal["bump_asym_2d"]
    assert standard_rotation_test(u, K).passed
    assert generalized_rotation_test(u, K).passed


@pytest.mark.parametrize("box", [((-1.0, 1.0), (-1.0, 1.0)), ((-0.1, 0.2), (-0.05, 0.3))])
def test_localization_around_origin(gal, box):
    K = CompactBox(box)
    u = gal["bump_asym_2d"]
    assert not standard_rotation_test(u, K).passed
    assert not generalized_rotation_test(u, K).passed


def test_budget_absorbs_rounding_only(gal, grid):
    u = gal["sq_norm_2d"]
    X = np.array([[0.6, 0.8]])
    Y = X * (1 + 1e-15)
    assert budgeted_residual(u, grid.values[0], X, Y, 1e-12)[0] == 0.0
    assert budgeted_residual(u, grid.values[0], X, 2 * X, 1e-12)[0] == pytest.approx(3.0)


def test_polar_examples(gal, grid):
    v = polar_reduce_2d(gal["sq_norm_2d"], GeneralizedNumber(grid, 2.0))
    assert v.constant
    np.testing.assert_allclose(v.v.eval(grid.values[3], np.linspace(0, 6, 7)[:, None]), 4.0, rtol=1e-14)
    d = polar_reduce_2d(gal["delta_radial_2d"], GeneralizedNumber(grid, E.EPS))
    assert d.constant and d.dv.expr == E.ZERO
    b = polar_reduce_2d(gal["bump_asym_2d"], GeneralizedNumber(grid, E.const(0.5) * E.EPS))
    assert not b.constant
    _, tail = growth_profile(b.dv, CompactBox(((0.0, 2 * math.pi),))).tail
    assert tail.min() > 0 and np.ptp(tail) <= 1e-9 * tail.max()
    with pytest.raises(PreconditionError):
        polar_reduce_2d(gal["sq_norm_2d"], GeneralizedNumber(grid, -1.0))


def test_planar_slice_examples(gal, grid):
    w = planar_slice(gal["sq_norm_3d"], 0, 1, GeneralizedPoint(grid, (1.0,), 1.0))
    X = np.random.default_rng(1).uniform(-2, 2, (10, 2))
    np.testing.assert_allclose(w.eval(grid.values[0], X), (X ** 2).sum(axis=1) + 1, rtol=1e-14)
    d = planar_slice(gal["delta_radial_3d"], 0, 1, GeneralizedPoint(grid, (0.0,), 1.0))
    assert standard_rotation_test(d, CompactBox.cube(1.0, 2)).passed
    with pytest.raises(InvariantViolation):
        planar_slice(gal["sq_norm_3d"], 0, 1, GeneralizedPoint(grid, (E.power(E.EPS, -1),), 1.0))
