"""Reduction of rotation-invariant nets to functions of the radius.

For ``u`` on R^n the profile ``v_eps(r) = u_eps(r, 0, ..., 0)`` is read
off along the x1 axis, and ``u_eps(x) - v_eps(|x|)`` is checked for
negligibility.  Every SO(n) orbit meets the positive x1 axis, so this
slice determines ``v`` on rotation-invariant classes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import expr as E
from ._parallel import map_ordered
from .asymptotics import (DEFAULT_THRESHOLDS, AsymptoticClass, GrowthProfile, Thresholds,
                          classify, make_profile)
from .errors import ConfigurationError
from .net_core import CompactBox, Concentration, NetFunction

INVARIANT_MAP = "euclidean_norm"


def radial_profile(u: NetFunction) -> NetFunction:
    """``v_eps(r) = u_eps(r, 0, ..., 0)`` as a net on R.

    For a radial ``u`` this is even in ``r``, so the handle is total on R.
    """
    n = u.dimension
    if n < 2:
        raise ConfigurationError("radial profile needs dimension >= 2")
    conc = None
    if u.concentration is not None:
        conc = Concentration(u.concentration.radius, tuple((c[0],) for c in u.concentration.centers))
    name = f"{u.name or 'u'} on x1 axis"
    if u.is_symbolic:
        ve = E.subs(u.expr, {i: E.ZERO for i in range(1, n)})
        return NetFunction(u.grid, 1, ve, max_order=u.max_order, concentration=conc, name=name)

    def fn(eps, x):
        p = np.zeros((1, n))
        p[0, 0] = x[0]
        return float(u.eval(eps, p)[0])

    out = NetFunction.from_callable(u.grid, 1, fn, name=name)
    out.concentration = conc
    return out


@dataclass
class ReductionResult:
    v: NetFunction
    residual: GrowthProfile
    residual_class: AsymptoticClass
    box: CompactBox
    invariant_map: str = INVARIANT_MAP

    @property
    def certified(self):
        return self.residual_class.negligible

    def to_json(self):
        return {
            "certified": self.certified,
            "invariant_map": self.invariant_map,
            "v": self.v.expr.key if self.v.is_symbolic else self.v.name,
            "residual_class": self.residual_class.to_json(),
            "residual": self.residual.to_json(),
            "box": self.box.to_json(),
        }

    def radius_interval(self):
        """The domain (-R, R) of v, R the enclosing radius of the box."""
        R = self.box.radius()
        return -R, R

    def v_csv_rows(self, samples=101):
        """Samples ``epsilon,r,value`` of v on [0, R] for every grid eps."""
        R = self.box.radius()
        r = np.linspace(0.0, R, samples)
        rows = [("epsilon", "r", "value")]
        for eps in self.v.grid:
            vals = self.v.eval(eps, r[:, None])
            rows.extend((repr(float(eps)), repr(float(a)), repr(float(b))) for a, b in zip(r, vals))
        return rows

    def write_v_csv(self, path, samples=101):
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.v_csv_rows(samples))


def verify_reduction(u: NetFunction, v: NetFunction, K: CompactBox,
                     thresholds: Thresholds = DEFAULT_THRESHOLDS) -> ReductionResult:
    """Sup over K of ``|u_eps(x) - v_eps(|x|)|`` per eps, classified."""
    if u.grid != v.grid:
        raise ConfigurationError("u and v live on different grids")
    if v.dimension != 1:
        raise ConfigurationError("v must be a net on R")
    if K.dimension != u.dimension:
        raise ConfigurationError("box dimension does not match u")
    n = u.dimension
    symbolic = u.is_symbolic and v.is_symbolic
    if symbolic:
        norm = E.power(E.add(*(E.power(E.var(i), 2) for i in range(n))), E.Fraction(1, 2))
        diff = E.add(u.expr, -E.subs(v.expr, {0: norm}))

    def one(eps):
        X = u.sample_points(eps, K)
        if symbolic:
            vals = E.evaluate(diff, X, eps)
        else:
            vals = u.eval(eps, X) - v.eval(eps, np.linalg.norm(X, axis=1)[:, None])
        vals = np.abs(vals)
        if not np.all(np.isfinite(vals)):
            return math.inf
        return float(vals.max()) if vals.size else 0.0

    sups = map_ordered(one, u.grid.values)
    prof = make_profile(u.grid.values, sups, u.grid.tail_start, box=K,
                        label=f"|{u.name or 'u'} - v(|x|)|", value_name="residual")
    return ReductionResult(v, prof, classify(prof, thresholds), K)
