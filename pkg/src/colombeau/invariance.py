"""Invariance of nets under translations, rotations and flows.

Every verdict reduces to classifying residual or sup profiles with
:func:`colombeau.asymptotics.classify`; there are no test-specific
thresholds.

Residuals of the form ``u_eps(y) - u_eps(x)``, with ``y`` a rotated,
shifted or flowed copy of ``x``, carry floating point error of roughly
``ulp * |grad u| * |x|``, which for concentrated nets is amplified by
large powers of ``1/eps``.  Such residuals are therefore reported as the
excess over a rounding budget

    tau * (|u(x)| + |u(y)| + (|grad u(x)| + |grad u(y)|) * max(|x|, |y|))

with ``tau = 1e-12`` for exact maps and ``tau = 1e-9`` for RK4 flows.
Symbolic checks (Lie derivatives, slices, polar reductions) need no budget
because like terms cancel exactly.

Indices are 0-based throughout: ``axis=0`` is x1 and plane ``(0, 1)`` is
the (x1, x2) plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import expr as E
from ._parallel import map_ordered
from .asymptotics import (DEFAULT_THRESHOLDS, AsymptoticClass, GrowthProfile,
                          NegligibilityResult, Thresholds, classify, fit_slope,
                          growth_profile, is_negligible, make_profile, severity)
from .errors import (ConfigurationError, ConstructionInsufficientError, PreconditionError)
from .flow_engine import generalized_rotation, plane_rotation
from .net_core import (CompactBox, Concentration, GeneralizedNumber, GeneralizedPoint,
                       NetFunction, NetVectorField, point_at)

INFINITESIMAL = "infinitesimal"
FLOW_SAMPLED = "flow_sampled"
STANDARD_ROTATIONS = "standard_rotations"
GENERALIZED_ROTATIONS = "generalized_rotations"
TRANSLATION_I = "translation_i"
TRANSLATION_II = "translation_ii"
TRANSLATION_III = "translation_iii"

TAU_EXACT = 1e-12
TAU_FLOW = 1e-9

DEFAULT_ANGLES = (
    math.pi / 2, math.pi, 3 * math.pi / 2, math.pi / 4, math.pi / 3, math.pi / 6,
    2 * math.pi / 3, 5 * math.pi / 4, 1.0, math.sqrt(2), math.sqrt(3), math.e,
    math.pi * math.sqrt(2) / 3, math.pi / math.sqrt(5), 0.1, 2.5,
)


@dataclass
class InvarianceVerdict:
    method: str
    passed: bool
    evidence: GrowthProfile
    evidence_class: AsymptoticClass
    region: Optional[CompactBox]
    thresholds: Thresholds = DEFAULT_THRESHOLDS
    details: dict = field(default_factory=dict)
    profiles: list = field(default_factory=list)

    def __bool__(self):
        return self.passed

    def residual_csv_rows(self):
        return [("epsilon", "residual")] + [(repr(float(e)), repr(float(v)))
                                            for e, v in self.evidence.entries]

    def to_json(self):
        return {
            "method": self.method,
            "passed": self.passed,
            "region": self.region.to_json() if self.region is not None else None,
            "thresholds": self.thresholds.to_json(),
            "worst_class": self.evidence_class.to_json(),
            "worst_profile": self.evidence.to_json(),
            "details": self.details,
        }


def _verdict(method, results, region, thresholds, details=None):
    """Assemble a verdict from (profile, class) pairs: pass iff all Negligible."""
    worst_prof, worst_cls = max(results, key=lambda pc: severity(pc[1], pc[0]))
    passed = all(c.negligible for _, c in results)
    return InvarianceVerdict(method, passed, worst_prof, worst_cls, region, thresholds,
                             dict(details or {}), list(results))


def _from_negligibility(method, res: NegligibilityResult, region, thresholds, details=None):
    return InvarianceVerdict(method, res.negligible, res.worst_profile, res.worst_class, region,
                             thresholds, dict(details or {}), list(res.profiles))


# ---------------------------------------------------------------- residual budget

def budgeted_residual(u: NetFunction, eps, X, Y, tau):
    """Per-row excess of ``|u(Y) - u(X)|`` over the rounding budget."""
    ux = u.eval(eps, X)
    uy = u.eval(eps, Y)
    delta = np.abs(uy - ux)
    out = np.where(np.isfinite(delta), delta, np.inf)
    # value term first; gradients only where something is left over
    out = np.maximum(0.0, out - tau * (np.abs(ux) + np.abs(uy)))
    left = out > 0
    if np.any(left):
        xb, yb = X[left], Y[left]
        gx = np.linalg.norm(u.gradient(eps, xb), axis=1)
        gy = np.linalg.norm(u.gradient(eps, yb), axis=1)
        scale = np.maximum(np.linalg.norm(xb, axis=1), np.linalg.norm(yb, axis=1))
        out[left] = np.maximum(0.0, out[left] - tau * (gx + gy) * scale)
    return out


def _residual_profile(u, per_eps, label, region):
    """Profile of per-eps max residual; ``per_eps(eps) -> array``."""
    def one(eps):
        r = per_eps(eps)
        return float(np.max(r)) if r.size else 0.0

    vals = map_ordered(one, u.grid.values)
    return make_profile(u.grid.values, vals, u.grid.tail_start, box=region, label=label,
                        value_name="residual")


# ---------------------------------------------------------------- Lie derivative

def _check_grid(xi: NetVectorField, u: NetFunction):
    if xi.grid != u.grid:
        raise ConfigurationError("field and function live on different grids")
    if xi.dimension != u.dimension:
        raise ConfigurationError("field and function dimensions differ")


def lie_derivative(xi: NetVectorField, u: NetFunction) -> NetFunction:
    """The net ``eps -> sum_i xi_eps,i * d_i u_eps``."""
    _check_grid(xi, u)
    if u.max_order < 1:
        raise ConfigurationError("lie derivative needs u with max_order >= 1")
    n = u.dimension
    name = f"L[{xi.name or 'xi'}]{u.name or 'u'}"
    conc = u.concentration
    if u.is_symbolic and all(c.is_symbolic for c in xi.components):
        e = E.add(*(c.expr * E.diff(u.expr, i) for i, c in enumerate(xi.components)))
        return NetFunction(u.grid, n, e, max_order=u.max_order - 1, concentration=conc, name=name)

    def fn(eps, x):
        X = np.atleast_2d(x)
        return float(np.sum(xi.eval(eps, X)[0] * u.gradient(eps, X)[0]))

    out = NetFunction.from_callable(u.grid, n, fn, name=name)
    out.concentration = conc
    return out


def infinitesimal_test(xi: NetVectorField, u: NetFunction, K: CompactBox,
                       thresholds: Thresholds = DEFAULT_THRESHOLDS) -> InvarianceVerdict:
    """Negligibility of the Lie derivative (with first partials) on K."""
    lu = lie_derivative(xi, u)
    order = min(1, lu.max_order)
    res = is_negligible(lu, K, order, thresholds)
    return _from_negligibility(INFINITESIMAL, res, K, thresholds,
                               {"field": xi.name, "function": u.name, "derivative_order": order})


# ---------------------------------------------------------------- flows

def default_flow_samples(grid, n):
    """Flow times and base points used by the flow-sampled test.

    Times are standard values plus eps-dependent nets; points mix fixed
    positions with nets concentrating at 0 at the scale eps.
    """
    etas = [GeneralizedNumber(grid, v, name=nm) for v, nm in
            ((0.0, "0"), (math.pi / 2, "pi/2"), (math.pi, "pi"), (1.0, "1"), (-0.7, "-0.7"))]
    etas += [GeneralizedNumber(grid, E.EPS, name="eps"),
             GeneralizedNumber(grid, E.power(E.EPS, E.Fraction(1, 2)), name="sqrt(eps)"),
             GeneralizedNumber(grid, E.func("sin", E.power(E.EPS, -1)), name="sin(1/eps)")]

    def pt(*coords, name):
        coords = tuple(coords) + (0,) * (n - len(coords))
        return GeneralizedPoint(grid, coords, bound=2.0, name=name)

    half = E.EPS * E.const(E.Fraction(1, 2))
    points = [pt(1, name="(1,0)"), pt(E.Fraction(3, 10), E.Fraction(-3, 5), name="(0.3,-0.6)"),
              pt(-E.Fraction(2, 5), E.Fraction(4, 5), name="(-0.4,0.8)"), pt(name="0")]
    if n >= 2:
        points += [pt(half, name="(eps/2,0)"), pt(half, E.EPS * E.const(E.Fraction(1, 4)),
                                                  name="(eps/2,eps/4)"),
                   pt(0, half, name="(0,eps/2)"), pt(E.EPS, E.EPS, name="(eps,eps)")]
    else:
        points += [pt(half, name="(eps/2)")]
    return etas, points


def flow_invariance_test(fl, u: NetFunction, etas=None, points=None, *,
                         thresholds: Thresholds = DEFAULT_THRESHOLDS,
                         tau: float = TAU_FLOW) -> InvarianceVerdict:
    """Residuals ``u_eps(Phi_eps(eta_eps, x_eps)) - u_eps(x_eps)``, one profile per eta."""
    if fl.dimension != u.dimension:
        raise ConfigurationError("flow and function dimensions differ")
    d_etas, d_points = default_flow_samples(u.grid, u.dimension)
    etas = d_etas if etas is None else list(etas)
    points = d_points if points is None else list(points)
    lo, hi = fl.span
    grid = u.grid
    X = {e: np.stack([point_at(p, e) for p in points]) for e in grid}
    results = []
    for eta in etas:
        t = {e: eta.at(e) for e in grid}
        if any(not lo <= v <= hi for v in t.values()):
            raise PreconditionError(f"flow time {eta.name} leaves span {fl.span}")
        eps_rows = np.repeat(np.array(grid.values), len(points))
        t_rows = np.repeat(np.array([t[e] for e in grid]), len(points))
        Xr = np.concatenate([X[e] for e in grid])
        Y = fl.evaluate_rows(eps_rows, t_rows, Xr)
        Ye = {e: Y[i * len(points):(i + 1) * len(points)] for i, e in enumerate(grid)}
        prof = _residual_profile(
            u, lambda e: budgeted_residual(u, e, X[e], Ye[e], tau),
            f"flow residual eta={eta.name}", None)
        results.append((prof, classify(prof, thresholds)))
    return _verdict(FLOW_SAMPLED, results, None, thresholds,
                    {"function": u.name, "etas": [a.name for a in etas],
                     "points": [p.name for p in points], "tau": tau})


# ---------------------------------------------------------------- translations

def default_shifts(grid):
    """Generalized shifts: constants, eps, sqrt(eps), sin(1/eps)."""
    vals = ((1.0, "1"), (-0.5, "-0.5"), (0.3, "0.3"), (E.EPS, "eps"),
            (E.power(E.EPS, E.Fraction(1, 2)), "sqrt(eps)"),
            (E.func("sin", E.power(E.EPS, -1)), "sin(1/eps)"))
    return [GeneralizedNumber(grid, v, name=nm) for v, nm in vals]


def _check_axis(u, axis):
    if not 0 <= axis < u.dimension:
        raise ConfigurationError(f"axis {axis} out of range for dimension {u.dimension}")


def shifted_residual_verdict(u: NetFunction, axis: int, K: CompactBox, etas=None, *,
                             thresholds: Thresholds = DEFAULT_THRESHOLDS,
                             tau: float = TAU_EXACT) -> InvarianceVerdict:
    """Condition (i): ``u_eps(x + eta_eps e_axis) - u_eps(x)`` negligible."""
    _check_axis(u, axis)
    etas = default_shifts(u.grid) if etas is None else list(etas)
    results = []
    for eta in etas:
        def per_eps(eps, eta=eta):
            X = u.sample_points(eps, K)
            Y = X.copy()
            Y[:, axis] += eta.at(eps)
            return budgeted_residual(u, eps, X, Y, tau)

        prof = _residual_profile(u, per_eps, f"shift x{axis + 1} by {eta.name}", K)
        results.append((prof, classify(prof, thresholds)))
    return _verdict(TRANSLATION_I, results, K, thresholds,
                    {"axis": axis, "shifts": [a.name for a in etas], "tau": tau})


def _axis_alpha(n, axis):
    return tuple(1 if i == axis else 0 for i in range(n))


def axis_partial(u: NetFunction, axis: int) -> NetFunction:
    """The net ``d_axis u`` (closed form when available)."""
    _check_axis(u, axis)
    if u.max_order < 1:
        raise ConfigurationError("axis partial needs max_order >= 1")
    alpha = _axis_alpha(u.dimension, axis)
    if u.is_symbolic:
        return u.with_expr(u.derivative_expr(alpha), max_order=u.max_order - 1,
                           name=f"d{axis + 1}[{u.name}]")
    out = NetFunction.from_callable(
        u.grid, u.dimension, lambda eps, x: float(u.partial(eps, alpha, np.atleast_2d(x))[0]),
        name=f"d{axis + 1}[{u.name}]")
    out.concentration = u.concentration
    return out


def axis_partial_verdict(u: NetFunction, axis: int, K: CompactBox,
                         thresholds: Thresholds = DEFAULT_THRESHOLDS) -> InvarianceVerdict:
    """Condition (ii): ``d_axis u`` negligible on K (with its first partials)."""
    du = axis_partial(u, axis)
    order = min(1, du.max_order)
    res = is_negligible(du, K, order, thresholds)
    return _from_negligibility(TRANSLATION_II, res, K, thresholds,
                               {"axis": axis, "derivative_order": order})


@dataclass
class Representative:
    representative: NetFunction
    certificate: NegligibilityResult
    difference_slope: float
    axis: int

    @property
    def certified(self):
        return self.certificate.negligible

    def to_json(self):
        return {"axis": self.axis, "certified": self.certified,
                "difference_slope": self.difference_slope if math.isfinite(self.difference_slope) else None,
                "representative": self.representative.expr.key if self.representative.is_symbolic else None,
                "certificate": self.certificate.to_json()}


def _slice(u: NetFunction, axis: int) -> NetFunction:
    name = f"{u.name or 'u'}|x{axis + 1}=0"
    if u.is_symbolic:
        return u.with_expr(E.subs(u.expr, {axis: E.ZERO}), name=name)

    def fn(eps, x):
        x = np.array(x, dtype=float, copy=True)
        x[axis] = 0.0
        return float(u.eval(eps, x[None, :])[0])

    return NetFunction.from_callable(u.grid, u.dimension, fn, name=name)


def _construct_representative(u, axis, K, thresholds):
    rep = _slice(u, axis)
    if u.is_symbolic:
        diff = u.with_expr(u.expr - rep.expr, name=f"{u.name} - slice")
    else:
        diff = NetFunction.from_callable(
            u.grid, u.dimension,
            lambda eps, x: float(u.eval(eps, np.atleast_2d(x))[0] - rep.eval(eps, np.atleast_2d(x))[0]),
            name=f"{u.name} - slice")
        diff.concentration = u.concentration
    order = min(1, diff.max_order)
    cert = is_negligible(diff, K, order, thresholds)
    eps, sups = growth_profile(diff, K).tail
    # diagnostic only: fit the positive entries so exact small differences keep their rate
    pos = sups > 0
    slope = fit_slope(eps[pos], sups[pos], 0.0)[0] if np.count_nonzero(pos) >= 2 else math.inf
    return Representative(rep, cert, slope, axis)


def build_invariant_representative(u: NetFunction, axis: int, K: CompactBox,
                                   thresholds: Thresholds = DEFAULT_THRESHOLDS) -> Representative:
    """Slice representative ``u'_eps(x) = u_eps(x with x_axis = 0)``.

    ``d_axis u'_eps`` vanishes identically.  The certificate is the
    negligibility of ``u - u'`` on K; if it fails, the slice is not a
    representative of the class of ``u`` and
    :class:`ConstructionInsufficientError` is raised.
    """
    _check_axis(u, axis)
    pre = axis_partial_verdict(u, axis, K, thresholds)
    if not pre.passed:
        raise PreconditionError(
            f"d_x{axis + 1} u is not negligible on the box ({pre.evidence_class.label}); "
            "no invariant representative exists")
    out = _construct_representative(u, axis, K, thresholds)
    if not out.certified:
        raise ConstructionInsufficientError(
            f"slice at x{axis + 1}=0 differs from u by {out.certificate.worst_class.label}")
    return out


def translation_tests(u: NetFunction, axis: int, K: CompactBox, etas=None,
                      thresholds: Thresholds = DEFAULT_THRESHOLDS):
    """The three translation verdicts (i), (ii), (iii), each computed independently."""
    v1 = shifted_residual_verdict(u, axis, K, etas, thresholds=thresholds)
    v2 = axis_partial_verdict(u, axis, K, thresholds)
    rep = _construct_representative(u, axis, K, thresholds)
    v3 = _from_negligibility(TRANSLATION_III, rep.certificate, K, thresholds,
                             {"axis": axis, "difference_slope": rep.difference_slope
                              if math.isfinite(rep.difference_slope) else None})
    v3.details["representative"] = rep
    return v1, v2, v3


# ---------------------------------------------------------------- rotations

def all_planes(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def _rotation_residual(u, K, matrices_at, label, thresholds, tau):
    """Residual profile for a net of matrix families ``matrices_at(eps) -> [A, ...]``."""
    def per_eps(eps):
        X = u.sample_points(eps, K)
        mats = matrices_at(eps)
        Xs = np.concatenate([X] * len(mats))
        Ys = np.concatenate([X @ A.T for A in mats])
        return budgeted_residual(u, eps, Xs, Ys, tau)

    prof = _residual_profile(u, per_eps, label, K)
    return prof, classify(prof, thresholds)


def standard_rotation_test(u: NetFunction, K: CompactBox, angles=DEFAULT_ANGLES, planes=None, *,
                           thresholds: Thresholds = DEFAULT_THRESHOLDS,
                           tau: float = TAU_EXACT) -> InvarianceVerdict:
    """Residuals under classical plane rotations, one profile per plane."""
    n = u.dimension
    if n < 2:
        raise ConfigurationError("rotations need dimension >= 2")
    planes = all_planes(n) if planes is None else [tuple(p) for p in planes]
    for i, j in planes:
        if not 0 <= i < j < n:
            raise ConfigurationError(f"invalid rotation plane ({i}, {j})")
    angles = [float(a) for a in angles]
    results = []
    for i, j in planes:
        mats = [plane_rotation(n, i, j, a) for a in angles]
        results.append(_rotation_residual(u, K, lambda eps, m=mats: m,
                                          f"rotations in plane x{i + 1}x{j + 1}", thresholds, tau))
    return _verdict(STANDARD_ROTATIONS, results, K, thresholds,
                    {"angles": angles, "planes": [list(p) for p in planes], "tau": tau})


def default_angle_families(grid, n):
    """Generalized angle assignments: per plane constants and eps-dependent
    nets, plus mixed assignments touching several planes in 3D."""
    def g(v, name):
        return GeneralizedNumber(grid, v, name=name)

    log_eps = -E.func("log", E.EPS)
    nets = [(E.const(E.Fraction(math.pi / 2)), "pi/2"), (E.ONE, "1"), (E.EPS, "eps"),
            (E.power(E.EPS, E.Fraction(1, 2)), "sqrt(eps)"), (log_eps, "|log eps|"),
            (E.func("sin", E.power(E.EPS, -1)), "sin(1/eps)")]
    out = []
    for plane in all_planes(n):
        for v, name in nets:
            out.append({plane: g(v, name)})
    if n >= 3:
        out.append({(0, 1): g(log_eps, "|log eps|"), (1, 2): g(E.func("sin", E.power(E.EPS, -1)), "sin(1/eps)")})
        out.append({(0, 1): g(E.power(E.EPS, E.Fraction(1, 2)), "sqrt(eps)"), (0, 2): g(E.ONE, "1"),
                    (1, 2): g(E.EPS, "eps")})
    return out


def generalized_rotation_test(u: NetFunction, K: CompactBox, alphas=None, *,
                              thresholds: Thresholds = DEFAULT_THRESHOLDS,
                              tau: float = TAU_EXACT) -> InvarianceVerdict:
    """Residuals ``u_eps(A_eps x) - u_eps(x)`` for nets of rotations ``A_eps``."""
    n = u.dimension
    if n < 2:
        raise ConfigurationError("rotations need dimension >= 2")
    alphas = default_angle_families(u.grid, n) if alphas is None else list(alphas)
    results, labels = [], []
    for assignment in alphas:
        R = generalized_rotation(assignment, n, u.grid)
        labels.append(R.label)
        results.append(_rotation_residual(u, K, lambda eps, R=R: [R.matrix(eps)],
                                          f"generalized rotation {R.label}", thresholds, tau))
    return _verdict(GENERALIZED_ROTATIONS, results, K, thresholds,
                    {"assignments": labels, "tau": tau})


# ---------------------------------------------------------------- reductions

@dataclass
class PolarReduction:
    v: NetFunction
    dv: NetFunction
    verdict: NegligibilityResult
    r: GeneralizedNumber

    @property
    def constant(self):
        return self.verdict.negligible

    def to_json(self):
        return {"r": self.r.name, "constant": self.constant, "verdict": self.verdict.to_json()}


def polar_reduce_2d(u: NetFunction, r: GeneralizedNumber,
                    thresholds: Thresholds = DEFAULT_THRESHOLDS) -> PolarReduction:
    """``v_eps(theta) = u_eps(r_eps cos theta, r_eps sin theta)`` and its constancy."""
    if u.dimension != 2:
        raise ConfigurationError("polar reduction needs a net on R^2")
    vals = r.values()
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise PreconditionError("radius net must have finite nonnegative members")
    prof = make_profile(r.grid.values, np.abs(vals), r.grid.tail_start, label=f"|r| = {r.name}")
    if not np.all(vals == 0):
        cls = classify(prof, thresholds)
        if cls.verdict == "Divergent":
            raise PreconditionError(f"radius net {r.name} is not moderate")
    theta = E.var(0)
    box = CompactBox(((0.0, 2 * math.pi),))
    name = f"{u.name or 'u'}(r cos t, r sin t)"
    if u.is_symbolic:
        ve = E.subs(u.expr, {0: r.expr * E.func("cos", theta), 1: r.expr * E.func("sin", theta)})
        v = NetFunction(u.grid, 1, ve, max_order=u.max_order, name=name)
        dv = NetFunction(u.grid, 1, E.diff(ve, 0), max_order=u.max_order - 1, name=f"d/dt {name}")
    else:
        def fv(eps, x):
            rr = r.at(eps)
            return float(u.eval(eps, np.array([[rr * math.cos(x[0]), rr * math.sin(x[0])]]))[0])

        v = NetFunction.from_callable(u.grid, 1, fv, name=name)

        def fdv(eps, x):
            rr = r.at(eps)
            p = np.array([[rr * math.cos(x[0]), rr * math.sin(x[0])]])
            g = u.gradient(eps, p)[0]
            return float(-rr * math.sin(x[0]) * g[0] + rr * math.cos(x[0]) * g[1])

        dv = NetFunction.from_callable(u.grid, 1, fdv, name=f"d/dt {name}")
    return PolarReduction(v, dv, is_negligible(dv, box, 0, thresholds), r)


def planar_slice(u: NetFunction, i: int, j: int, fixed: GeneralizedPoint) -> NetFunction:
    """``w_eps(a, b)``: u with a at slot i, b at slot j, the rest frozen to ``fixed``."""
    n = u.dimension
    if n < 3:
        raise ConfigurationError("planar slices need dimension >= 3")
    if not (0 <= i < n and 0 <= j < n and i != j):
        raise ConfigurationError(f"invalid slice slots ({i}, {j})")
    if fixed.dimension != n - 2:
        raise ConfigurationError(f"fixed point needs {n - 2} coordinates")
    fixed.check()
    rest = [k for k in range(n) if k not in (i, j)]
    conc = None
    if u.concentration is not None:
        conc = Concentration(u.concentration.radius,
                             tuple((c[i], c[j]) for c in u.concentration.centers))
    name = f"{u.name or 'u'}|plane x{i + 1}x{j + 1}"
    if u.is_symbolic:
        mapping = {i: E.var(0), j: E.var(1)}
        mapping.update({k: c for k, c in zip(rest, fixed.coords)})
        return NetFunction(u.grid, 2, E.subs(u.expr, mapping), max_order=u.max_order,
                           concentration=conc, name=name)

    def fn(eps, x):
        full = np.empty(n)
        full[i], full[j] = x[0], x[1]
        full[rest] = fixed.position(eps)
        return float(u.eval(eps, full[None, :])[0])

    out = NetFunction.from_callable(u.grid, 2, fn, name=name)
    out.concentration = conc
    return out
