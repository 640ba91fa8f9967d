"""Core data model: epsilon grids, nets of smooth functions, generalized points.

A :class:`NetFunction` is a net ``eps -> u_eps`` of smooth functions on R^n
sampled on a finite :class:`EpsilonGrid`.  Closed-form nets carry an
expression in ``x1..xn`` and ``eps`` (see :mod:`colombeau.expr`) and get
exact partial derivatives of every order up to ``max_order``; black-box
nets fall back to central differences and are flagged approximate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from . import expr as E
from .errors import (CapabilityError, ConfigurationError, GridLookupError,
                     InvariantViolation)

MAX_BOX_DIMENSION = 4
DEFAULT_RESOLUTION = {1: 41, 2: 41, 3: 17, 4: 9}


# ---------------------------------------------------------------- grid

@dataclass(frozen=True)
class EpsilonGrid:
    """Strictly decreasing scale parameters in (0, 1].

    Asymptotic fits use ``values[tail_start:]``.
    """

    values: tuple
    tail_start: int

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) < 8:
            raise ConfigurationError("an epsilon grid needs at least 8 values")
        if any(not (0.0 < v <= 1.0) for v in vals):
            raise ConfigurationError("epsilon values must lie in (0, 1]")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ConfigurationError("epsilon values must be strictly decreasing")
        if not (0 <= self.tail_start < len(vals) - 3):
            raise ConfigurationError("tail_start must leave at least 4 tail points")

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    @property
    def tail(self):
        return self.values[self.tail_start:]

    def index(self, eps) -> int:
        try:
            return self.values.index(float(eps))
        except ValueError:
            raise GridLookupError(f"eps={eps!r} is not on the grid") from None

    def check(self, eps) -> float:
        self.index(eps)
        return float(eps)


def make_epsilon_grid(k_min: int = 4, k_max: int = 24, base: float = 0.5) -> EpsilonGrid:
    """Grid ``base**k`` for ``k = k_min..k_max``, tail from the midpoint."""
    if not (0.0 < base < 1.0):
        raise ConfigurationError(f"grid base must lie in (0, 1), got {base!r}")
    if int(k_min) != k_min or int(k_max) != k_max:
        raise ConfigurationError("grid exponents must be integers")
    if k_min < 0 or k_max - k_min < 7:
        raise ConfigurationError("need 0 <= k_min and k_max - k_min >= 7")
    values = tuple(base ** k for k in range(int(k_min), int(k_max) + 1))
    return EpsilonGrid(values, len(values) // 2)


DEFAULT_GRID_PARAMS = (4, 24, 0.5)


def default_grid() -> EpsilonGrid:
    return make_epsilon_grid(*DEFAULT_GRID_PARAMS)


# ---------------------------------------------------------------- boxes

@dataclass(frozen=True)
class CompactBox:
    """Axis-aligned closed box with a per-axis sample resolution."""

    intervals: tuple
    resolution: Optional[int] = None

    def __post_init__(self):
        ivs = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        if not ivs:
            raise ConfigurationError("a box needs at least one axis")
        for lo, hi in ivs:
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ConfigurationError("box bounds must be finite")
            if not lo < hi:
                raise ConfigurationError(f"degenerate box interval [{lo}, {hi}]")
        object.__setattr__(self, "intervals", ivs)
        res = self.resolution
        if res is None:
            res = DEFAULT_RESOLUTION.get(len(ivs), 9)
        res = int(res)
        if res < 9 or res % 2 == 0:
            raise ConfigurationError("box resolution must be odd and at least 9")
        object.__setattr__(self, "resolution", res)

    @classmethod
    def cube(cls, half_width, dimension, resolution=None):
        return cls(((-half_width, half_width),) * dimension, resolution)

    @property
    def dimension(self):
        return len(self.intervals)

    @property
    def lower(self):
        return np.array([lo for lo, _ in self.intervals])

    @property
    def upper(self):
        return np.array([hi for _, hi in self.intervals])

    def contains(self, X, interior=False):
        X = np.atleast_2d(X)
        if interior:
            return np.all((X > self.lower) & (X < self.upper), axis=1)
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def radius(self):
        """Largest Euclidean norm of a point of the box."""
        return float(np.linalg.norm(np.maximum(np.abs(self.lower), np.abs(self.upper))))

    def to_json(self):
        return {"intervals": [list(iv) for iv in self.intervals], "resolution": self.resolution}


def _axis(lo, hi, res):
    pts = np.linspace(lo, hi, res)
    pts[0], pts[-1], pts[res // 2] = lo, hi, 0.5 * (lo + hi)
    return pts


@lru_cache(maxsize=256)
def _sample_box_cached(box: CompactBox):
    axes = [_axis(lo, hi, box.resolution) for lo, hi in box.intervals]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    pts.setflags(write=False)
    return pts


def sample_box(K: CompactBox) -> np.ndarray:
    """Full tensor grid of sample points, shape (resolution**n, n)."""
    if K.dimension > MAX_BOX_DIMENSION:
        raise CapabilityError(f"boxes of dimension {K.dimension} > {MAX_BOX_DIMENSION} are not supported")
    return _sample_box_cached(K)


# ---------------------------------------------------------------- concentration

@dataclass(frozen=True)
class Concentration:
    """Where a net varies on the scale eps.

    Members of such nets live on ``eps * [-radius, radius]^n``; a fixed
    sample grid cannot see them, so sup computations add the rescaled
    points ``eps * y`` for ``y`` in :meth:`reference_points`.
    """

    radius: float
    centers: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "centers", tuple(tuple(float(c) for c in p) for p in self.centers))

    def reference_points(self, dimension) -> np.ndarray:
        return _reference_points(self, dimension)

    def merge(self, other: Optional["Concentration"]) -> "Concentration":
        if other is None:
            return self
        centers = tuple(dict.fromkeys(self.centers + other.centers))
        return Concentration(max(self.radius, other.radius), centers)


@lru_cache(maxsize=128)
def _reference_points(conc: Concentration, dimension: int):
    res = DEFAULT_RESOLUTION.get(dimension, 9)
    if dimension == 3:
        res = 13
    box = CompactBox.cube(conc.radius, dimension, res)
    pts = sample_box(box)
    extra = [c for c in conc.centers if len(c) == dimension]
    if extra:
        pts = np.vstack([pts, np.array(extra, dtype=float)])
    pts = np.ascontiguousarray(pts)
    pts.setflags(write=False)
    return pts


def merge_concentration(a, b):
    if a is None:
        return b
    return a.merge(b)


# ---------------------------------------------------------------- handles

def _as_points(x, arity):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != arity:
        raise ConfigurationError(f"expected points of dimension {arity}, got {X.shape[1]}")
    return X, single


def _check_alpha(alpha, arity, max_order):
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != arity or any(a < 0 for a in alpha):
        raise ConfigurationError(f"invalid multi-index {alpha!r} for arity {arity}")
    if sum(alpha) > max_order:
        raise CapabilityError(f"derivative order {sum(alpha)} exceeds max_order {max_order}")
    return alpha


class SmoothFunctionHandle:
    """A single member u_eps: evaluation and partials on R^n."""

    approximate = False

    def __init__(self, arity, max_order):
        self.arity = int(arity)
        self.max_order = int(max_order)

    def eval(self, x):
        return self.partial((0,) * self.arity, x)

    def partial(self, alpha, x):  # pragma: no cover - abstract
        raise NotImplementedError


class ExprFunction(SmoothFunctionHandle):
    """Closed-form member: an expression with eps bound to a number."""

    def __init__(self, expression, arity, max_order=2, eps=None):
        super().__init__(arity, max_order)
        self.expr = expression
        self.eps = 1.0 if eps is None else float(eps)

    def partial(self, alpha, x):
        alpha = _check_alpha(alpha, self.arity, self.max_order)
        X, single = _as_points(x, self.arity)
        out = E.evaluate(E.partial_expr(self.expr, alpha), X, self.eps)
        return float(out[0]) if single else out


class FiniteDifferenceFunction(SmoothFunctionHandle):
    """Black-box member with central-difference partials (approximate).

    The step is ``1e-5``, or ``1e-5 * min(1, eps * scale_hint)`` for
    members whose features live on the length scale ``eps * scale_hint``.
    Only orders up to 2 are offered.
    """

    approximate = True

    def __init__(self, fn, arity, eps=1.0, scale_hint=None, max_order=2):
        super().__init__(arity, min(int(max_order), 2))
        self.fn = fn
        scale = 1.0 if scale_hint is None else min(1.0, float(eps) * float(scale_hint))
        self.step = 1e-5 * scale

    def _f(self, X):
        return np.asarray([float(self.fn(p)) for p in X])

    def partial(self, alpha, x):
        alpha = _check_alpha(alpha, self.arity, self.max_order)
        X, single = _as_points(x, self.arity)
        h = self.step
        axes = [i for i, a in enumerate(alpha) for _ in range(a)]
        if not axes:
            out = self._f(X)
        elif len(axes) == 1:
            e = np.eye(self.arity)[axes[0]] * h
            out = (self._f(X + e) - self._f(X - e)) / (2 * h)
        else:
            ei = np.eye(self.arity)[axes[0]] * h
            ej = np.eye(self.arity)[axes[1]] * h
            out = (self._f(X + ei + ej) - self._f(X + ei - ej)
                   - self._f(X - ei + ej) + self._f(X - ei - ej)) / (4 * h * h)
        return float(out[0]) if single else out


# ---------------------------------------------------------------- nets

class NetFunction:
    """Net eps -> u_eps of smooth functions R^n -> R on a grid.

    Either ``expression`` (closed form in x1..xn, eps) or ``member`` (a
    callable ``eps -> SmoothFunctionHandle``) must be given.
    """

    def __init__(self, grid: EpsilonGrid, dimension: int, expression=None, *,
                 member: Optional[Callable] = None, max_order: int = 2,
                 concentration: Optional[Concentration] = None, name: str = ""):
        if (expression is None) == (member is None):
            raise ConfigurationError("give exactly one of expression or member")
        self.grid = grid
        self.dimension = int(dimension)
        self.expr = None if expression is None else E.as_expr(expression)
        self._member = member
        self.max_order = int(max_order)
        self.concentration = concentration
        self.name = name
        if self.expr is not None and self.expr.free and max(self.expr.free) >= self.dimension:
            raise ConfigurationError(f"expression uses variables beyond dimension {self.dimension}")
        self._handles = {}

    def __repr__(self):
        return f"NetFunction({self.name or self.expr!r}, n={self.dimension})"

    @property
    def is_symbolic(self):
        return self.expr is not None

    @property
    def approximate(self):
        return not self.is_symbolic and self.member(self.grid.values[0]).approximate

    def member(self, eps) -> SmoothFunctionHandle:
        eps = self.grid.check(eps)
        h = self._handles.get(eps)
        if h is None:
            if self.expr is not None:
                h = ExprFunction(self.expr, self.dimension, self.max_order, eps)
            else:
                h = self._member(eps)
                if h.arity != self.dimension:
                    raise ConfigurationError("member arity does not match net dimension")
            self._handles[eps] = h
        return h

    def derivative_expr(self, alpha):
        alpha = _check_alpha(alpha, self.dimension, self.max_order)
        return E.partial_expr(self.expr, alpha)

    def partial(self, eps, alpha, X):
        """Vectorized partial derivative at rows of ``X`` (shape (m, n))."""
        eps = self.grid.check(eps)
        if self.expr is not None:
            X, _ = _as_points(X, self.dimension)
            return E.evaluate(self.derivative_expr(alpha), X, eps)
        return np.atleast_1d(self.member(eps).partial(alpha, X))

    def eval(self, eps, X):
        return self.partial(eps, (0,) * self.dimension, X)

    def eval_rows(self, eps_rows, X, alpha=None):
        """Evaluate with one eps value per row (used by flows)."""
        alpha = (0,) * self.dimension if alpha is None else alpha
        X, _ = _as_points(X, self.dimension)
        eps_rows = np.asarray(eps_rows, dtype=float)
        if self.expr is not None:
            return E.evaluate(self.derivative_expr(alpha), X, eps_rows)
        out = np.empty(X.shape[0])
        for e in np.unique(eps_rows):
            sel = eps_rows == e
            out[sel] = self.member(float(e)).partial(alpha, X[sel])
        return out

    def gradient(self, eps, X):
        X, _ = _as_points(X, self.dimension)
        cols = []
        for i in range(self.dimension):
            alpha = tuple(1 if j == i else 0 for j in range(self.dimension))
            cols.append(self.partial(eps, alpha, X))
        return np.stack(cols, axis=1)

    def sample_points(self, eps, K: CompactBox) -> np.ndarray:
        """Sample set for sup computations at scale ``eps``."""
        if K.dimension != self.dimension:
            raise ConfigurationError(f"box dimension {K.dimension} != net dimension {self.dimension}")
        pts = sample_box(K)
        if self.concentration is not None:
            scaled = float(eps) * self.concentration.reference_points(self.dimension)
            scaled = scaled[K.contains(scaled)]
            if len(scaled):
                pts = np.vstack([pts, scaled])
        return pts

    @property
    def depends_on_eps(self):
        return self.expr is None or self.expr.has_eps

    # convenience constructors ----------------------------------------
    @classmethod
    def from_callable(cls, grid, dimension, fn, *, scale_hint=None, name=""):
        """Black-box net from ``fn(eps, x) -> float``; partials by differences."""
        def member(eps):
            return FiniteDifferenceFunction(lambda x: fn(eps, x), dimension, eps, scale_hint)
        return cls(grid, dimension, member=member, max_order=2, name=name)

    def with_expr(self, expression, *, max_order=None, concentration=None, name=None, dimension=None):
        return NetFunction(self.grid, self.dimension if dimension is None else dimension, expression,
                           max_order=self.max_order if max_order is None else max_order,
                           concentration=self.concentration if concentration is None else concentration,
                           name=self.name if name is None else name)


def require_symbolic(*nets):
    for u in nets:
        if not u.is_symbolic:
            raise CapabilityError(f"{u!r} is a black-box net; this operation needs a closed form")


class NetVectorField:
    """Net of smooth vector fields: n component NetFunctions on one grid."""

    def __init__(self, components: Sequence[NetFunction], name: str = ""):
        components = tuple(components)
        if not components:
            raise ConfigurationError("a vector field needs at least one component")
        grid = components[0].grid
        n = len(components)
        for c in components:
            if c.grid != grid:
                raise ConfigurationError("vector field components must share one grid")
            if c.dimension != n:
                raise ConfigurationError("component dimension must equal the number of components")
        self.components = components
        self.grid = grid
        self.dimension = n
        self.name = name

    def __repr__(self):
        return f"NetVectorField({self.name or [c.expr for c in self.components]!r})"

    @classmethod
    def from_exprs(cls, grid, expressions, max_order=2, name=""):
        n = len(expressions)
        return cls([NetFunction(grid, n, e, max_order=max_order) for e in expressions], name=name)

    @property
    def max_order(self):
        return min(c.max_order for c in self.components)

    @property
    def depends_on_eps(self):
        return any(c.depends_on_eps for c in self.components)

    def eval(self, eps, X):
        return np.stack([c.eval(eps, X) for c in self.components], axis=1)

    def eval_rows(self, eps_rows, X):
        return np.stack([c.eval_rows(eps_rows, X) for c in self.components], axis=1)


# ---------------------------------------------------------------- generalized numbers / points

def _value_expr(value, name):
    if isinstance(value, E.Expr):
        if value.free:
            raise ConfigurationError("a generalized number may depend on eps only")
        return value
    if callable(value):
        return E.EpsFn(name or getattr(value, "__name__", "fn"), value)
    return E.const(value)


@dataclass(frozen=True)
class GeneralizedNumber:
    """Closed-form net of reals ``eps -> value``."""

    grid: EpsilonGrid
    value: object
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "value", _value_expr(self.value, self.name))
        if not self.name:
            object.__setattr__(self, "name", self.value.key)

    def at(self, eps) -> float:
        eps = self.grid.check(eps)
        return float(E.evaluate(self.value, np.zeros((1, 0)), eps)[0])

    def values(self) -> np.ndarray:
        return np.array([self.at(e) for e in self.grid])

    @property
    def expr(self):
        return self.value


@dataclass(frozen=True)
class GeneralizedPoint:
    """Closed-form net of points with a declared uniform bound."""

    grid: EpsilonGrid
    coords: tuple
    bound: float
    name: str = ""

    def __post_init__(self):
        exprs = tuple(_value_expr(c, f"{self.name}_{i}") for i, c in enumerate(self.coords))
        object.__setattr__(self, "coords", exprs)
        object.__setattr__(self, "bound", float(self.bound))

    @property
    def dimension(self):
        return len(self.coords)

    def position(self, eps) -> np.ndarray:
        eps = self.grid.check(eps)
        z = np.zeros((1, 0))
        return np.array([float(E.evaluate(c, z, eps)[0]) for c in self.coords])

    def check(self):
        """Sweep the grid; raise InvariantViolation if the bound fails."""
        for eps in self.grid:
            point_at(self, eps)


def point_at(p: GeneralizedPoint, eps) -> np.ndarray:
    x = p.position(eps)
    if not np.all(np.isfinite(x)) or np.linalg.norm(x) > p.bound:
        raise InvariantViolation(
            f"generalized point {p.name or ''} has |x|={np.linalg.norm(x):.6g} > bound {p.bound} at eps={eps!r}")
    return x


def eval_net(u: NetFunction, eps, x) -> float:
    """Value of the member u_eps at the point x."""
    out = u.eval(eps, np.atleast_2d(np.asarray(x, dtype=float)))
    return float(out[0])


def partial(u: NetFunction, eps, alpha, x) -> float:
    """Exact partial derivative of u_eps at x (capability error past max_order)."""
    out = u.partial(eps, alpha, np.atleast_2d(np.asarray(x, dtype=float)))
    return float(out[0])
