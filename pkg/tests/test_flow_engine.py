import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colombeau import expr as E
from colombeau.errors import BlowUpError, ConfigurationError, PreconditionError
from colombeau.flow_engine import (FlowNet, check_completeness, flow, generalized_rotation,
                                   linear_flow, plane_rotation, skew_matrix, solve_ivp,
                                   substep_counts, verify_group_law)
from colombeau.net_core import CompactBox, GeneralizedNumber, GeneralizedPoint


def rot(t):
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


@pytest.fixture(scope="module")
def xi12_flow(gal, K2):
    return flow(gal["xi_12_rotation"], (-4.0, 4.0), K2)


def test_completeness_examples(gal, K1, K2):
    assert check_completeness(gal["xi_12_rotation"], K2).passed
    assert check_completeness(gal["d_x_1d"], K1).passed
    rep = check_completeness(gal["inv_sqrt_eps_d_x_1d"], K1)
    assert not rep.passed and not rep.globally_bounded
    # bounded on the global box only up to |log eps|
    assert not check_completeness(gal["log_eps_d_x_1d"], K1).globally_bounded


def test_gate_and_override(gal, K1):
    xi = gal["inv_sqrt_eps_d_x_1d"]
    with pytest.raises(PreconditionError):
        flow(xi, (0.0, 0.1), K1)
    with pytest.warns(RuntimeWarning):
        fl = flow(xi, (0.0, 0.01), K1, override=True)
    assert fl.c_bounded is not None


def test_substeps_follow_norm_ratio(gal):
    subs = substep_counts(gal["log_eps_d_x_1d"])
    g = gal["log_eps_d_x_1d"].grid
    for e in g:
        assert subs[e] == math.ceil(math.log(e) / math.log(g.values[0]) - 1e-12)
    assert set(substep_counts(gal["xi_12_rotation"]).values()) == {1}


def test_translation_trajectory_is_exact(grid, gal):
    x0 = GeneralizedPoint(grid, (0.3, E.EPS), 2.0)
    tr = solve_ivp(gal["d_x1_2d"], x0, 0.0, 1.5, 0.01)
    for e in grid:
        want = np.column_stack([0.3 + tr.times, np.full(len(tr.times), e)])
        np.testing.assert_allclose(tr.at(e), want, atol=1e-13)
    rows = tr.csv_rows()
    assert rows[0] == ("epsilon", "t", "x1", "x2")
    assert len(rows) == 1 + len(grid) * len(tr.times)


def test_rotation_trajectory_matches_cos_sin(grid, gal):
    x0 = GeneralizedPoint(grid, (1.0, 0.0), 1.0)
    tr = solve_ivp(gal["xi_12_rotation"], x0, 0.0, math.pi / 2, 1e-3)
    want = np.column_stack([np.cos(tr.times), np.sin(tr.times)])
    np.testing.assert_allclose(tr.at(grid.values[-1]), want, atol=1e-12)


def test_rk4_is_fourth_order(grid, gal):
    x0 = GeneralizedPoint(grid, (1.0, 0.0), 1.0)
    T = 2.0
    errs = []
    for N in (16, 32, 64):
        tr = solve_ivp(gal["xi_12_rotation"], x0, 0.0, T, T / N)
        errs.append(np.linalg.norm(tr.at(grid.values[0])[-1] - [math.cos(T), math.sin(T)]))
    for a, b in zip(errs, errs[1:]):
        assert 14 <= a / b <= 18


def test_flow_of_rotation(xi12_flow, grid):
    X = np.array([[1.0, 0.0], [0.3, -0.7]])
    for e in (grid.values[0], grid.values[-1]):
        np.testing.assert_allclose(xi12_flow.evaluate(e, math.pi, X), -X, atol=1e-12)
        np.testing.assert_allclose(xi12_flow.evaluate(e, 1.0, X), X @ rot(1.0).T, atol=1e-12)


def test_identity_at_time_zero_is_bitwise(xi12_flow, grid):
    X = np.random.default_rng(3).uniform(-1, 1, (20, 2))
    assert np.array_equal(xi12_flow.evaluate(grid.values[5], 0.0, X), X)


def test_c_bounded_record(xi12_flow):
    assert xi12_flow.c_bounded
    assert max(xi12_flow.c_bounded_record.values()) <= math.sqrt(2) + 1e-9
    assert xi12_flow.blowups == {}


def test_group_law_has_no_eps_degradation(xi12_flow):
    pts = np.random.default_rng(0).uniform(-1, 1, (10, 2))
    res = verify_group_law(xi12_flow, 0.7, -1.3, pts)
    assert res.passed
    assert res.max_residual <= 1e-10


def test_log_eps_rotation_flow(gal, K2, grid):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fl = flow(gal["log_eps_xi_12_rotation"], (-1.0, 1.0), K2, override=True)
    X = np.array([[1.0, 0.0], [0.2, 0.5]])
    for e in (grid.values[0], grid.values[-1]):
        theta = 0.8 * abs(math.log(e))
        np.testing.assert_allclose(fl.evaluate(e, 0.8, X), X @ rot(theta).T, atol=1e-8)
    assert fl.c_bounded


def test_blowup_is_reported(grid, gal, K1):
    xi = gal["inv_eps_d_x_1d"]
    x0 = GeneralizedPoint(grid, (0.0,), 1.0)
    with pytest.raises(BlowUpError) as info, pytest.warns(RuntimeWarning):
        solve_ivp(xi, x0, 0.0, 1.0, 0.01, safety_box=10.0, override=True)
    assert info.value.eps in grid.values
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fl = flow(xi, (0.0, 1.0), K1, safety_box=10.0, override=True)
    assert fl.c_bounded is False
    assert fl.blowups and all(0 < t <= 1.0 for t in fl.blowups.values())


def test_span_must_contain_zero(gal):
    with pytest.raises(ConfigurationError):
        FlowNet(gal["xi_12_rotation"], (0.5, 1.0))


def test_linear_flow_diagonal():
    fl = linear_flow(np.diag([1.0, -1.0]))
    np.testing.assert_allclose(fl.evaluate(None, 1.0, [[1.0, 1.0]])[0], [math.e, 1 / math.e], rtol=1e-14)
    res = verify_group_law(_with_grid(fl), 0.4, 0.9, [[1.0, -2.0]])
    assert res.max_residual < 1e-12


def _with_grid(fl):
    from colombeau.net_core import default_grid
    fl.grid = default_grid()
    return fl


def test_linear_flow_matches_rk4(gal, K2, grid):
    fl = flow(gal["linear_diag_2d"], (-1.0, 1.0), K2)
    X = np.array([[0.5, -0.25]])
    exact = linear_flow(np.diag([1.0, -1.0])).evaluate(None, 0.9, X)
    np.testing.assert_allclose(fl.evaluate(grid.values[0], 0.9, X), exact, rtol=1e-11)


def test_skew_generator_exponential_is_plane_rotation():
    from scipy.linalg import expm
    for n, (i, j) in ((2, (0, 1)), (3, (0, 2)), (3, (1, 2))):
        np.testing.assert_allclose(expm(skew_matrix(n, {(i, j): 0.7})), plane_rotation(n, i, j, 0.7),
                                   atol=1e-14)


def _angles(grid):
    return [GeneralizedNumber(grid, v) for v in
            (1.0, E.EPS, E.power(E.EPS, E.Fraction(1, 2)), -E.func("log", E.EPS),
             E.func("sin", E.power(E.EPS, -1)))]


def test_generalized_rotations_are_orthogonal(grid):
    for a in _angles(grid):
        for n, alphas in ((2, {(0, 1): a}), (3, {(0, 1): a, (1, 2): _angles(grid)[0]})):
            R = generalized_rotation(alphas, n, grid)
            for e, M in R.matrices().items():
                np.testing.assert_allclose(M.T @ M, np.eye(n), atol=1e-10)
                assert abs(np.linalg.det(M) - 1) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(theta=st.floats(-50, 50), seed=st.integers(0, 2 ** 16))
def test_rotation_preserves_norm(theta, seed):
    from colombeau.net_core import default_grid
    g = default_grid()
    R = generalized_rotation({(0, 2): theta, (0, 1): 0.3}, 3, g)
    X = np.random.default_rng(seed).normal(size=(50, 3))
    Y = X @ R.matrix(g.values[0]).T
    np.testing.assert_allclose(np.linalg.norm(Y, axis=1), np.linalg.norm(X, axis=1), rtol=1e-12)


def test_invalid_rotation_plane(grid):
    with pytest.raises(ConfigurationError):
        generalized_rotation({(1, 0): 1.0}, 2, grid)
    with pytest.raises(ConfigurationError):
        generalized_rotation({}, 1, grid)
