"""Model nets: mollifiers, delta nets, the shrinking asymmetric bump, gallery.

All mollifiers are built from ``b(s) = exp(1 - 1/(1-s))`` (``s < 1``),
which has ``b(0) = 1`` and vanishes with all derivatives at ``s = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate, special

from . import expr as E
from .errors import ConfigurationError
from .net_core import (Concentration, EpsilonGrid, ExprFunction, NetFunction,
                       NetVectorField, default_grid)

GALLERY_VERSION = 1

RADIAL = "radial_bump"
ASYMMETRIC = "asymmetric_bump"
GAUSSIAN = "gaussian_truncated"
MASS_ONE = "mass_one"
SUP_ONE = "sup_one"

ASYM_CENTER = 0.5
ASYM_RADIUS = 0.3
# exp(-GAUSS_WIDTH * |x|^2 / r^2) under the bump for the truncated gaussian
GAUSS_WIDTH = 4.5


@dataclass(frozen=True)
class MollifierSpec:
    dimension: int
    shape: str = RADIAL
    support_radius: float = None
    normalization: str = MASS_ONE
    center: float = ASYM_CENTER

    def __post_init__(self):
        if self.shape not in (RADIAL, ASYMMETRIC, GAUSSIAN):
            raise ConfigurationError(f"unknown mollifier shape {self.shape!r}")
        if self.normalization not in (MASS_ONE, SUP_ONE):
            raise ConfigurationError(f"unknown normalization {self.normalization!r}")
        if self.dimension < 1:
            raise ConfigurationError("dimension must be positive")
        if self.support_radius is None:
            object.__setattr__(self, "support_radius", ASYM_RADIUS if self.shape == ASYMMETRIC else 1.0)
        if not self.support_radius > 0:
            raise ConfigurationError("support radius must be positive")
        if self.shape == ASYMMETRIC and not (0 < self.support_radius < abs(self.center)):
            raise ConfigurationError("asymmetric bump needs 0 < radius < |center|")

    @property
    def center_point(self):
        c = self.center if self.shape == ASYMMETRIC else 0.0
        return (c,) + (0.0,) * (self.dimension - 1)

    @property
    def reach(self):
        """Radius of the smallest origin-centred ball containing the support."""
        return abs(self.center_point[0]) + self.support_radius


def _radial_mass(n, r, weight=None):
    """Integral over R^n of b(|x|^2/r^2) (times an optional radial weight)."""
    def integrand(rho):
        val = math.exp(1.0 - 1.0 / (1.0 - rho * rho)) if rho < 1.0 else 0.0
        if weight is not None:
            val *= weight(rho)
        return val * rho ** (n - 1)

    radial, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
    sphere = 2.0 * math.pi ** (n / 2) / special.gamma(n / 2)
    return sphere * radial * r ** n


def mollifier_mass(spec: MollifierSpec) -> float:
    """Integral of the sup-one profile of ``spec``."""
    weight = (lambda rho: math.exp(-GAUSS_WIDTH * rho * rho)) if spec.shape == GAUSSIAN else None
    return _radial_mass(spec.dimension, spec.support_radius, weight)


def mollifier_expr(spec: MollifierSpec, coords=None) -> E.Expr:
    """Closed form of phi evaluated at the coordinate expressions ``coords``."""
    n = spec.dimension
    coords = [E.var(i) for i in range(n)] if coords is None else list(coords)
    r2 = E.Fraction(spec.support_radius) ** 2
    shifted = [c - E.const(p) if p else c for c, p in zip(coords, spec.center_point)]
    s = E.add(*(E.power(c, 2) for c in shifted)) * E.const(1 / r2)
    phi = E.func("bump", s)
    if spec.shape == GAUSSIAN:
        phi = phi * E.func("exp", s * E.const(-E.Fraction(GAUSS_WIDTH)))
    if spec.normalization == MASS_ONE:
        phi = phi * E.const(1.0 / mollifier_mass(spec))
    return phi


def make_mollifier(spec: MollifierSpec, max_order: int = 2) -> ExprFunction:
    """Compactly supported smooth mollifier with exact partials."""
    return ExprFunction(mollifier_expr(spec), spec.dimension, max_order)


def _rescaled(spec):
    return [E.var(i) * E.power(E.EPS, -1) for i in range(spec.dimension)]


def embed_delta(spec: MollifierSpec, grid: EpsilonGrid, max_order: int = 2, name="") -> NetFunction:
    """The mollified delta ``u_eps(x) = eps^-n phi(x/eps)``."""
    if spec.normalization != MASS_ONE:
        raise ConfigurationError("embed_delta needs a mass_one mollifier")
    n = spec.dimension
    u = E.power(E.EPS, -n) * mollifier_expr(spec, _rescaled(spec))
    conc = Concentration(spec.reach, (spec.center_point,))
    return NetFunction(grid, n, u, max_order=max_order, concentration=conc,
                       name=name or f"delta_{spec.shape}_{n}d")


def shrinking_bump(spec: MollifierSpec, grid: EpsilonGrid, max_order: int = 2, name="") -> NetFunction:
    """``u_eps(x) = phi(x/eps)`` for an asymmetric phi (no eps prefactor)."""
    if spec.shape != ASYMMETRIC:
        raise ConfigurationError("shrinking_bump needs an asymmetric_bump spec")
    u = mollifier_expr(spec, _rescaled(spec))
    conc = Concentration(spec.reach, (spec.center_point,))
    return NetFunction(grid, spec.dimension, u, max_order=max_order, concentration=conc,
                       name=name or f"bump_asym_{spec.dimension}d")


# ---------------------------------------------------------------- gallery

def _x(i):
    return E.var(i)


def _sq_norm(n):
    return E.add(*(E.power(_x(i), 2) for i in range(n)))


def _log_eps():
    return -E.func("log", E.EPS)


def rotation_generator(n, i, j, grid, scale=None, name=""):
    """xi_ij = x_i d_j - x_j d_i (0-based i < j), optionally times ``scale``."""
    comps = [E.ZERO] * n
    comps[j] = _x(i)
    comps[i] = -_x(j)
    if scale is not None:
        comps = [scale * c for c in comps]
    return NetVectorField.from_exprs(grid, comps, name=name)


def constant_field(n, axis, grid, scale=None, name=""):
    comps = [E.ZERO] * n
    comps[axis] = E.ONE if scale is None else scale
    return NetVectorField.from_exprs(grid, comps, name=name)


def gallery(grid: EpsilonGrid = None) -> dict:
    """Deterministic named collection of nets and vector fields.

    Names ending in ``_Nd`` live on R^N; fields are NetVectorField items.
    """
    grid = default_grid() if grid is None else grid
    g = {}

    def fn(name, n, e, conc=None):
        g[name] = NetFunction(grid, n, e, concentration=conc, name=name)

    for n in (1, 2, 3):
        g[f"delta_radial_{n}d"] = embed_delta(MollifierSpec(n, RADIAL), grid, name=f"delta_radial_{n}d")
    for n in (2, 3):
        g[f"bump_asym_{n}d"] = shrinking_bump(
            MollifierSpec(n, ASYMMETRIC, normalization=SUP_ONE), grid, name=f"bump_asym_{n}d")
    g["bump_radial_2d"] = NetFunction(
        grid, 2, mollifier_expr(MollifierSpec(2, RADIAL, normalization=SUP_ONE), _rescaled(MollifierSpec(2))),
        concentration=Concentration(1.0), name="bump_radial_2d")

    fn("eps_1d", 1, E.EPS)
    fn("log_eps_1d", 1, _log_eps())
    fn("eps5_sin_1d", 1, E.power(E.EPS, 5) * E.func("sin", _x(0)))
    fn("square_1d", 1, E.power(_x(0), 2))
    fn("sq_norm_2d", 2, _sq_norm(2))
    fn("sq_norm_3d", 3, _sq_norm(3))
    fn("quartic_norm_2d", 2, E.power(_sq_norm(2), 2))
    fn("gauss_2d", 2, E.func("exp", -_sq_norm(2)))
    fn("log_eps_gauss_2d", 2, _log_eps() * E.func("exp", -_sq_norm(2)))
    fn("coord_x1_2d", 2, _x(0))
    fn("coord_x2_2d", 2, _x(1))
    fn("coord_x3_3d", 3, _x(2))
    fn("x2_plus_eps5_sin_x1", 2, _x(1) + E.power(E.EPS, 5) * E.func("sin", _x(0)))
    fn("x2_plus_eps_x1", 2, _x(1) + E.EPS * _x(0))
    fn("sq_norm_plus_eps5_x1_2d", 2, _sq_norm(2) + E.power(E.EPS, 5) * _x(0))
    # depends on x2 only, with an eps-scale profile: translation invariant along x1
    fn("strip_delta_2d", 2,
       E.power(E.EPS, -1) * E.func("bump", E.power(_x(1) * E.power(E.EPS, -1), 2)),
       Concentration(1.0))

    g["xi_12_rotation"] = rotation_generator(2, 0, 1, grid, name="xi_12_rotation")
    for i, j in ((0, 1), (0, 2), (1, 2)):
        name = f"xi_{i + 1}{j + 1}_rotation_3d"
        g[name] = rotation_generator(3, i, j, grid, name=name)
    g["log_eps_xi_12_rotation"] = rotation_generator(2, 0, 1, grid, _log_eps(), name="log_eps_xi_12_rotation")
    g["d_x_1d"] = constant_field(1, 0, grid, name="d_x_1d")
    g["d_x1_2d"] = constant_field(2, 0, grid, name="d_x1_2d")
    g["log_eps_d_x_1d"] = constant_field(1, 0, grid, _log_eps(), name="log_eps_d_x_1d")
    g["inv_sqrt_eps_d_x_1d"] = constant_field(1, 0, grid, E.power(E.EPS, E.Fraction(-1, 2)),
                                              name="inv_sqrt_eps_d_x_1d")
    g["inv_eps_d_x_1d"] = constant_field(1, 0, grid, E.power(E.EPS, -1), name="inv_eps_d_x_1d")
    g["linear_diag_2d"] = NetVectorField.from_exprs(grid, [_x(0), -_x(1)], name="linear_diag_2d")
    return g


def gallery_names() -> list:
    return sorted(gallery().keys())


# (field, function) pairs whose flows are computed by the consistency suites
FLOW_PAIRS = (
    ("xi_12_rotation", "sq_norm_2d"),
    ("xi_12_rotation", "gauss_2d"),
    ("xi_12_rotation", "delta_radial_2d"),
    ("xi_12_rotation", "bump_asym_2d"),
    ("xi_12_rotation", "coord_x1_2d"),
    ("xi_12_rotation", "sq_norm_plus_eps5_x1_2d"),
    ("d_x1_2d", "coord_x2_2d"),
    ("d_x1_2d", "coord_x1_2d"),
    ("d_x1_2d", "x2_plus_eps5_sin_x1"),
    ("d_x1_2d", "strip_delta_2d"),
)
