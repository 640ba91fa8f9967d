"""Per-eps flows of net vector fields.

Integration is fixed-step classical RK4.  All (eps, point) rows of a query
are advanced in lockstep, each row with its own step size and step count,
so that ``Phi_eps(t, x)`` depends only on ``(eps, t, x)`` and never on
what else was in the batch.  In particular ``Phi_eps(0, x) = x`` bitwise.

Fields whose sup grows with ``eps`` (log-type fields) are integrated with
``ceil(M_eps / M_ref)`` substeps per mesh step, where ``M_eps`` is the sup
of ``|xi_eps|`` over the global box and ``M_ref`` its value at the largest
grid eps.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .asymptotics import (DEFAULT_THRESHOLDS, AsymptoticClass, GrowthProfile,
                          LogTypeResult, Thresholds, classify, log_type_check,
                          make_profile, norm_profile)
from .errors import BlowUpError, ConfigurationError, PreconditionError
from .net_core import (CompactBox, EpsilonGrid, GeneralizedNumber, GeneralizedPoint,
                       NetVectorField, point_at, sample_box)

DEFAULT_H0 = 1e-3
DEFAULT_SAFETY = 1e3
DEFAULT_GLOBAL_HALF_WIDTH = 10.0
GROUP_LAW_TOL = 1e-6
MAX_SUBSTEPS = 1024


# ---------------------------------------------------------------- completeness

@dataclass
class CompletenessReport:
    globally_bounded: bool
    bound_estimate: float
    global_class: AsymptoticClass
    derivatives_log_type: bool
    worst_ratio: float
    log_type: LogTypeResult
    global_box: CompactBox
    box: CompactBox
    metric: str = "euclidean"
    caveat: str = ("global boundedness is judged on global_box, a finite proxy "
                   "for the whole space")

    @property
    def passed(self):
        return self.globally_bounded and self.derivatives_log_type

    def to_json(self):
        return {
            "passed": self.passed,
            "globally_bounded": self.globally_bounded,
            "bound_estimate": self.bound_estimate if math.isfinite(self.bound_estimate) else None,
            "global_class": self.global_class.to_json(),
            "derivatives_log_type": self.derivatives_log_type,
            "worst_ratio": self.worst_ratio if math.isfinite(self.worst_ratio) else None,
            "log_type": self.log_type.to_json(),
            "global_box": self.global_box.to_json(),
            "box": self.box.to_json(),
            "metric": self.metric,
            "caveat": self.caveat,
        }


def _global_box(n, global_box):
    return CompactBox.cube(DEFAULT_GLOBAL_HALF_WIDTH, n) if global_box is None else global_box


def check_completeness(xi: NetVectorField, K: CompactBox, global_box: Optional[CompactBox] = None,
                       thresholds: Thresholds = DEFAULT_THRESHOLDS) -> CompletenessReport:
    """Global boundedness on ``global_box`` and log-type first partials on ``K``."""
    gbox = _global_box(xi.dimension, global_box)
    prof = norm_profile(xi, gbox)
    cls = classify(prof, thresholds)
    finite = [v for v in prof.values if math.isfinite(v)]
    bound = max(finite) if len(finite) == len(prof.values) else math.inf
    lt = log_type_check(xi, K, thresholds)
    return CompletenessReport(cls.bounded, bound, cls, lt.log_type, lt.worst_growth, lt, gbox, K)


def substep_counts(xi: NetVectorField, global_box: Optional[CompactBox] = None) -> dict:
    """Substeps per mesh step for each grid eps (1 for eps-independent fields)."""
    if not xi.depends_on_eps:
        return {e: 1 for e in xi.grid}
    prof = norm_profile(xi, _global_box(xi.dimension, global_box))
    ref = prof.values[0]
    out = {}
    for e, m in prof.entries:
        if not math.isfinite(m):
            out[e] = MAX_SUBSTEPS
        elif ref <= 0 or m <= ref:
            out[e] = 1
        else:
            out[e] = int(min(MAX_SUBSTEPS, math.ceil(m / ref - 1e-12)))
    return out


# ---------------------------------------------------------------- RK4

def _safety_box(n, safety_box):
    if safety_box is None:
        return CompactBox.cube(DEFAULT_SAFETY, n)
    if isinstance(safety_box, CompactBox):
        return safety_box
    return CompactBox.cube(float(safety_box), n)


def _rk4_lockstep(xi, eps_rows, X, h_rows, n_rows, safety: CompactBox, t_offset=None,
                  mark_blowups=False):
    """Advance row r by n_rows[r] RK4 steps of size h_rows[r].

    On leaving the safety box a BlowUpError is raised, or with
    ``mark_blowups`` the row is frozen at NaN and its escape time returned.
    """
    x = np.array(X, dtype=float, copy=True)
    n_rows = np.asarray(n_rows, dtype=np.int64)
    escape = np.full(x.shape[0], np.nan)
    if x.shape[0] == 0 or n_rows.max(initial=0) == 0:
        return (x, escape) if mark_blowups else x
    order = np.argsort(-n_rows, kind="stable")
    xs = x[order]
    es = np.asarray(eps_rows, dtype=float)[order]
    hs = np.asarray(h_rows, dtype=float)[order][:, None]
    ns = n_rows[order].copy()
    lo, hi = safety.lower, safety.upper
    t0 = np.zeros(len(order)) if t_offset is None else np.asarray(t_offset, dtype=float)[order]
    alive = np.ones(len(order), dtype=bool)
    esc = np.full(len(order), np.nan)
    for k in range(int(ns[0])):
        m = int(np.count_nonzero(ns > k))  # rows still running form a prefix
        if alive[:m].all():
            sel = slice(0, m)
        else:
            sel = np.nonzero(alive[:m])[0]
            if len(sel) == 0:
                break
        xa, ea, ha = xs[sel], es[sel], hs[sel]
        k1 = xi.eval_rows(ea, xa)
        k2 = xi.eval_rows(ea, xa + 0.5 * ha * k1)
        k3 = xi.eval_rows(ea, xa + 0.5 * ha * k2)
        k4 = xi.eval_rows(ea, xa + ha * k3)
        xa = xa + ha * (k1 + 2.0 * (k2 + k3) + k4) / 6.0
        bad = ~np.all((xa >= lo) & (xa <= hi), axis=1)
        if np.any(bad):
            rows = np.arange(len(order))[sel][bad]
            t_esc = t0[rows] + (k + 1) * hs[rows, 0]
            if not mark_blowups:
                raise BlowUpError(float(es[rows[0]]), float(t_esc[0]))
            xa[bad] = np.nan
            alive[rows] = False
            esc[rows] = t_esc
        xs[sel] = xa
    x[order] = xs
    escape[order] = esc
    return (x, escape) if mark_blowups else x


@dataclass
class TrajectoryNet:
    grid: EpsilonGrid
    times: np.ndarray
    states: dict
    x0: GeneralizedPoint
    span: tuple
    substeps: dict
    h0: float

    def at(self, eps):
        return self.states[self.grid.check(eps)]

    def csv_rows(self):
        n = self.states[self.grid.values[0]].shape[1]
        rows = [("epsilon", "t") + tuple(f"x{i + 1}" for i in range(n))]
        for e in self.grid:
            for t, x in zip(self.times, self.states[e]):
                rows.append((repr(float(e)), repr(float(t))) + tuple(repr(float(v)) for v in x))
        return rows


def _mesh(t0, t1, h0):
    span = t1 - t0
    m = max(1, math.ceil(abs(span) / h0 - 1e-9))
    times = t0 + span * np.arange(m + 1) / m
    times[0], times[-1] = t0, t1
    return times


def _completeness_gate(xi, K, global_box, override):
    report = check_completeness(xi, K, global_box)
    if not report.passed:
        msg = (f"{xi!r} failed the completeness check (globally_bounded={report.globally_bounded}, "
               f"log_type={report.derivatives_log_type})")
        if not override:
            raise PreconditionError(msg)
        warnings.warn(msg + "; continuing because override was requested", RuntimeWarning)
    return report


def solve_ivp(xi: NetVectorField, x0: GeneralizedPoint, t0: float, t1: float, h0: float = DEFAULT_H0, *,
              K: Optional[CompactBox] = None, global_box: Optional[CompactBox] = None,
              safety_box=None, override: bool = False) -> TrajectoryNet:
    """Solve x' = xi_eps(x), x(t0) = x0_eps for every grid eps by RK4.

    The output mesh is uniform and shared by all eps; log-type fields take
    extra substeps inside each mesh interval.
    """
    if x0.dimension != xi.dimension:
        raise ConfigurationError("initial point and field dimensions differ")
    if K is None:
        K = CompactBox.cube(x0.bound + 1.0, xi.dimension)
    _completeness_gate(xi, K, global_box, override)
    safety = _safety_box(xi.dimension, safety_box)
    subs = substep_counts(xi, global_box)
    times = _mesh(float(t0), float(t1), float(h0))
    dt = (float(t1) - float(t0)) / (len(times) - 1)
    eps = np.array(xi.grid.values)
    x = np.stack([point_at(x0, e) for e in eps])
    sub = np.array([subs[e] for e in eps])
    h = dt / sub
    states = np.empty((len(times), len(eps), xi.dimension))
    states[0] = x
    for k in range(1, len(times)):
        x = _rk4_lockstep(xi, eps, x, h, sub, safety, t_offset=np.full(len(eps), times[k - 1]))
        states[k] = x
    return TrajectoryNet(xi.grid, times, {e: states[:, i, :].copy() for i, e in enumerate(xi.grid)},
                         x0, (float(t0), float(t1)), subs, float(h0))


# ---------------------------------------------------------------- flows

class FlowNet:
    """Per-eps flow map ``(eps, t, x) -> Phi_eps(t, x)`` computed on demand."""

    analytic = False

    def __init__(self, xi: NetVectorField, span, h0=DEFAULT_H0, safety_box=None,
                 substeps=None, seed_box: Optional[CompactBox] = None):
        self.field = xi
        self.grid = xi.grid
        self.dimension = xi.dimension
        self.span = (float(span[0]), float(span[1]))
        if not self.span[0] <= 0.0 <= self.span[1]:
            raise ConfigurationError("flow span must contain 0")
        self.h0 = float(h0)
        self.safety = _safety_box(xi.dimension, safety_box)
        self.substeps = substep_counts(xi) if substeps is None else dict(substeps)
        self.seed_box = seed_box
        self.c_bounded_record = {}
        self.blowups = {}
        self.c_bounded = None

    def _check_t(self, t_rows):
        t_rows = np.asarray(t_rows, dtype=float)
        if np.any(t_rows < self.span[0] - 1e-12) or np.any(t_rows > self.span[1] + 1e-12):
            raise ConfigurationError(f"flow times outside span {self.span}")
        return t_rows

    def evaluate_rows(self, eps_rows, t_rows, X, mark_blowups=False):
        """Phi at per-row (eps, t, x); see ``_rk4_lockstep`` for ``mark_blowups``."""
        eps_rows = np.asarray(eps_rows, dtype=float)
        t_rows = self._check_t(np.broadcast_to(t_rows, eps_rows.shape))
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not self.field.depends_on_eps:
            # identical rows across eps give identical results; integrate each once
            key = np.column_stack([t_rows, X])
            uniq, inv = np.unique(key, axis=0, return_inverse=True)
            inv = np.ravel(inv)
            e0 = np.full(len(uniq), self.grid.values[0])
            out = self._integrate(e0, uniq[:, 0], uniq[:, 1:], np.ones(len(uniq), dtype=np.int64),
                                  mark_blowups)
            if mark_blowups:
                return out[0][inv], out[1][inv]
            return out[inv]
        sub = np.array([self.substeps[float(e)] for e in eps_rows], dtype=np.int64)
        return self._integrate(eps_rows, t_rows, X, sub, mark_blowups)

    def _integrate(self, eps_rows, t_rows, X, sub, mark_blowups=False):
        n = np.where(t_rows == 0.0, 0, np.ceil(np.abs(t_rows) * sub / self.h0 - 1e-9)).astype(np.int64)
        n = np.where((t_rows != 0.0) & (n == 0), 1, n)
        h = np.divide(t_rows, n, out=np.zeros_like(t_rows), where=n > 0)
        return _rk4_lockstep(self.field, eps_rows, X, h, n, self.safety, mark_blowups=mark_blowups)

    def evaluate(self, eps, t, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        eps = self.grid.check(eps)
        return self.evaluate_rows(np.full(X.shape[0], eps), np.full(X.shape[0], float(t)), X)

    def sweep(self, seed_box: CompactBox, n_times=5):
        """Record max |Phi_eps(t, x)| over seed points and sample times.

        A member that leaves the safety box is recorded as ``inf`` together
        with its blow-up time, and the net is marked not c-bounded.
        """
        pts = sample_box(CompactBox(seed_box.intervals, 9))
        times = np.unique(np.concatenate([np.linspace(self.span[0], self.span[1], n_times), [0.0]]))
        eps = np.array(self.grid.values)
        E_, T_, P_ = np.meshgrid(eps, times, np.arange(len(pts)), indexing="ij")
        rows_e = E_.ravel()
        Y, esc = self.evaluate_rows(rows_e, T_.ravel(), pts[P_.ravel()], mark_blowups=True)
        norms = np.linalg.norm(Y, axis=1)
        record, blowups = {}, {}
        for e in self.grid:
            sel = rows_e == e
            if np.all(np.isnan(esc[sel])):
                record[e] = float(norms[sel].max())
            else:
                record[e] = math.inf
                blowups[e] = float(np.nanmin(np.abs(esc[sel])))
        self.c_bounded_record = record
        self.blowups = blowups
        self.c_bounded = all(math.isfinite(v) for v in record.values())
        return record

    def to_json(self):
        return {
            "field": self.field.name,
            "span": list(self.span),
            "h0": self.h0,
            "analytic": self.analytic,
            "substeps": {repr(k): v for k, v in self.substeps.items()},
            "c_bounded": self.c_bounded,
            "c_bounded_record": {repr(k): (v if math.isfinite(v) else None)
                                 for k, v in self.c_bounded_record.items()},
            "blowups": {repr(k): v for k, v in self.blowups.items()},
        }


def flow(xi: NetVectorField, t_span, seed_box: CompactBox, h0: float = DEFAULT_H0, *,
         K: Optional[CompactBox] = None, global_box: Optional[CompactBox] = None,
         safety_box=None, override: bool = False) -> FlowNet:
    """Generalized flow of ``xi``: per-eps RK4 flow map plus a c-boundedness sweep."""
    if seed_box.dimension != xi.dimension:
        raise ConfigurationError("seed box and field dimensions differ")
    K = seed_box if K is None else K
    _completeness_gate(xi, K, global_box, override)
    fn = FlowNet(xi, t_span, h0, safety_box, substep_counts(xi, global_box), seed_box)
    fn.sweep(seed_box)
    return fn


class AnalyticFlowNet:
    """Flow ``Phi(t, x) = exp(tA) x`` of the linear field ``x -> A x``."""

    analytic = True

    def __init__(self, A, grid: Optional[EpsilonGrid] = None, span=(-math.inf, math.inf)):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.all(np.isfinite(A)):
            raise ConfigurationError("A must be a finite square matrix")
        self.A = A
        self.dimension = A.shape[0]
        self.grid = grid
        self.span = (float(span[0]), float(span[1]))
        self.c_bounded_record = {}
        self.c_bounded = None

    def matrix(self, t):
        return expm(float(t) * self.A)

    def evaluate_rows(self, eps_rows, t_rows, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        t_rows = np.broadcast_to(np.asarray(t_rows, dtype=float), (X.shape[0],))
        out = X.copy()
        for t in np.unique(t_rows):
            if t == 0.0:
                continue
            sel = t_rows == t
            out[sel] = X[sel] @ self.matrix(t).T
        return out

    def evaluate(self, eps, t, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.evaluate_rows(np.full(X.shape[0], eps), np.full(X.shape[0], float(t)), X)

    def to_json(self):
        return {"analytic": True, "A": self.A.tolist(), "span": [str(s) for s in self.span]}


def linear_flow(A, grid: Optional[EpsilonGrid] = None) -> AnalyticFlowNet:
    """Analytic eps-independent flow of a linear field (scaling-and-squaring expm)."""
    return AnalyticFlowNet(A, grid)


# ---------------------------------------------------------------- group law

@dataclass
class GroupLawResult:
    profile: GrowthProfile
    passed: bool
    tol: float
    t: float
    s: float

    @property
    def max_residual(self):
        return max(self.profile.values)

    def to_json(self):
        return {"passed": self.passed, "tol": self.tol, "t": self.t, "s": self.s,
                "max_residual": self.max_residual, "profile": self.profile.to_json()}


def verify_group_law(fl, t: float, s: float, points, tol: float = GROUP_LAW_TOL) -> GroupLawResult:
    """Per-eps max of |Phi(t+s, x) - Phi(t, Phi(s, x))| over ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    grid = fl.grid
    eps = np.repeat(np.array(grid.values), len(pts))
    X = np.tile(pts, (len(grid), 1))
    lhs = fl.evaluate_rows(eps, np.full(len(X), t + s), X)
    mid = fl.evaluate_rows(eps, np.full(len(X), s), X)
    rhs = fl.evaluate_rows(eps, np.full(len(X), t), mid)
    res = np.max(np.abs(lhs - rhs), axis=1).reshape(len(grid), len(pts)).max(axis=1)
    prof = make_profile(grid.values, res, grid.tail_start, label=f"group law t={t}, s={s}",
                        value_name="residual")
    return GroupLawResult(prof, bool(np.all(res <= tol)), tol, float(t), float(s))


# ---------------------------------------------------------------- rotations

def skew_matrix(n, angles: dict) -> np.ndarray:
    """Matrix of ``sum alpha_ij xi_ij`` with xi_ij = x_i d_j - x_j d_i (0-based)."""
    S = np.zeros((n, n))
    for (i, j), a in angles.items():
        S[j, i] += a
        S[i, j] -= a
    return S


def plane_rotation(n, i, j, theta) -> np.ndarray:
    """Classical rotation by ``theta`` in the (x_i, x_j) plane."""
    R = np.eye(n)
    c, s = math.cos(theta), math.sin(theta)
    R[i, i] = R[j, j] = c
    R[j, i] = s
    R[i, j] = -s
    return R


class RotationNet:
    """Net of rotation matrices ``A_eps = exp(sum alpha_ij(eps) xi_ij)``."""

    def __init__(self, grid: EpsilonGrid, n: int, alphas: dict):
        self.grid = grid
        self.dimension = n
        self.alphas = alphas
        self._cache = {}

    def matrix(self, eps):
        eps = self.grid.check(eps)
        M = self._cache.get(eps)
        if M is None:
            M = expm(skew_matrix(self.dimension, {k: a.at(eps) for k, a in self.alphas.items()}))
            self._cache[eps] = M
        return M

    def matrices(self):
        return {e: self.matrix(e) for e in self.grid}

    @property
    def label(self):
        return ", ".join(f"a{i + 1}{j + 1}={a.name}" for (i, j), a in sorted(self.alphas.items()))


def generalized_rotation(alphas: dict, n: int, grid: Optional[EpsilonGrid] = None) -> RotationNet:
    """Per-eps matrix exponential of the skew generator with generalized angles."""
    if n < 2:
        raise ConfigurationError("rotations need dimension >= 2")
    conv = {}
    for (i, j), a in alphas.items():
        if not (0 <= i < j < n):
            raise ConfigurationError(f"invalid rotation plane ({i}, {j}) for n={n}")
        if not isinstance(a, GeneralizedNumber):
            if grid is None:
                raise ConfigurationError("a grid is needed for plain angle values")
            a = GeneralizedNumber(grid, a)
        conv[(i, j)] = a
    if grid is None:
        grid = next(iter(conv.values())).grid if conv else None
    if grid is None:
        raise ConfigurationError("cannot infer a grid from an empty angle assignment")
    return RotationNet(grid, n, conv)
