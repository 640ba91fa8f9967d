"""Asymptotic classification of nets by their eps-growth on compact boxes.

The sup of ``|d^alpha u_eps|`` over a box is sampled on every grid value
and ``log(sup)`` is regressed on ``log(eps)`` over the grid tail.  The
decision rule, in order:

(a) every tail sup <= abs_floor                     -> Negligible
(b) slope >= m_max - slope_tol                      -> Negligible
    fit residual > degenerate_residual              -> Divergent (low confidence)
(c) sup/|log eps| constant within ratio_tol and
    |slope| <= slope_tol                            -> LogType
(d) |slope| <= slope_tol                            -> Bounded
(e) smallest N >= 0 with slope >= -N - slope_tol    -> Moderate(N), N <= n_max
(f) otherwise                                       -> Divergent

Negligibility can only be judged from finitely many eps; the thresholds
travel with every verdict so it can be re-checked offline.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from ._parallel import map_ordered
from .errors import ConfigurationError, InsufficientDataError
from .net_core import CompactBox, NetFunction, NetVectorField, sample_box

NEGLIGIBLE = "Negligible"
MODERATE = "Moderate"
LOGTYPE = "LogType"
BOUNDED = "Bounded"
DIVERGENT = "Divergent"


@dataclass(frozen=True)
class Thresholds:
    m_max: int = 3
    slope_tol: float = 0.15
    abs_floor: float = 1e-13
    ratio_tol: float = 0.25
    n_max: int = 30
    degenerate_residual: float = 0.5

    def __post_init__(self):
        if self.m_max < 2:
            raise ConfigurationError("m_max must be at least 2")

    def to_json(self):
        return asdict(self)


DEFAULT_THRESHOLDS = Thresholds()


@dataclass(frozen=True)
class GrowthProfile:
    """One (eps, value) entry per grid value.

    ``value_name`` is ``"sup"`` for sup-norm profiles and ``"residual"``
    for residual tables produced by the invariance tests.
    """

    epsilons: tuple
    values: tuple
    tail_start: int
    box: Optional[CompactBox] = None
    order: Optional[tuple] = None
    label: str = ""
    value_name: str = "sup"

    def __post_init__(self):
        if len(self.epsilons) != len(self.values):
            raise ConfigurationError("profile needs one value per eps")
        if any(v < 0 for v in self.values if not math.isnan(v)):
            raise ConfigurationError("profile values must be non-negative")

    @property
    def entries(self):
        return list(zip(self.epsilons, self.values))

    @property
    def tail(self):
        return np.array(self.epsilons[self.tail_start:]), np.array(self.values[self.tail_start:])

    def csv_rows(self):
        return [("epsilon", self.value_name)] + [(repr(float(e)), repr(float(v))) for e, v in self.entries]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.csv_rows())

    def to_json(self):
        return {
            "label": self.label,
            "order": list(self.order) if self.order is not None else None,
            "box": self.box.to_json() if self.box is not None else None,
            "value_name": self.value_name,
            "tail_start": self.tail_start,
            "entries": [[float(e), _finite_or_none(v)] for e, v in self.entries],
        }


def _finite_or_none(v):
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass(frozen=True)
class AsymptoticClass:
    verdict: str
    N: Optional[int]
    slope: float
    residual: float
    thresholds: Thresholds = DEFAULT_THRESHOLDS
    ratio_spread: Optional[float] = None
    low_confidence: bool = False
    rule: str = ""

    @property
    def label(self):
        return f"Moderate({self.N})" if self.verdict == MODERATE else self.verdict

    @property
    def negligible(self):
        return self.verdict == NEGLIGIBLE

    @property
    def bounded(self):
        """Bounded or better: Negligible, Bounded, or decaying Moderate(0)."""
        return self.verdict in (NEGLIGIBLE, BOUNDED) or (self.verdict == MODERATE and self.N == 0)

    def to_json(self):
        return {
            "verdict": self.verdict,
            "label": self.label,
            "N": self.N,
            "slope": _finite_or_none(self.slope),
            "residual": _finite_or_none(self.residual),
            "ratio_spread": None if self.ratio_spread is None else _finite_or_none(self.ratio_spread),
            "low_confidence": self.low_confidence,
            "rule": self.rule,
            "thresholds": self.thresholds.to_json(),
        }


def make_profile(epsilons, values, tail_start, **kw) -> GrowthProfile:
    return GrowthProfile(tuple(float(e) for e in epsilons), tuple(float(v) for v in values),
                         tail_start, **kw)


def _sup_abs(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    if not np.all(np.isfinite(values)):
        return math.inf
    return float(np.max(np.abs(values)))


def growth_profile(u: NetFunction, K: CompactBox, alpha=None) -> GrowthProfile:
    """Per grid eps, the sampled sup over K of ``|d^alpha u_eps|``."""
    alpha = (0,) * u.dimension if alpha is None else tuple(alpha)

    def one(eps):
        return _sup_abs(u.partial(eps, alpha, u.sample_points(eps, K)))

    sups = map_ordered(one, u.grid.values)
    return make_profile(u.grid.values, sups, u.grid.tail_start, box=K, order=alpha,
                        label=f"{u.name or 'u'} d^{alpha}")


def norm_profile(v: NetVectorField, K: CompactBox) -> GrowthProfile:
    """Per grid eps, the sampled sup over K of the Euclidean norm of v_eps."""
    pts = sample_box(K)

    def one(eps):
        vals = v.eval(eps, pts)
        if not np.all(np.isfinite(vals)):
            return math.inf
        return float(np.max(np.linalg.norm(vals, axis=1)))

    sups = map_ordered(one, v.grid.values)
    return make_profile(v.grid.values, sups, v.grid.tail_start, box=K, label=f"|{v.name or 'xi'}|")


def fit_slope(eps, sups, floor):
    """OLS of log(max(sup, floor)) on log(eps); returns (slope, rms residual)."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.maximum(np.asarray(sups, dtype=float), floor))
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(res ** 2)))


def log_ratios(eps, sups):
    return np.asarray(sups, dtype=float) / np.abs(np.log(np.asarray(eps, dtype=float)))


def classify(profile: GrowthProfile, thresholds: Thresholds = DEFAULT_THRESHOLDS, *,
             m_max=None, slope_tol=None, abs_floor=None) -> AsymptoticClass:
    """Apply the decision rule to the tail of ``profile``."""
    over = {k: v for k, v in dict(m_max=m_max, slope_tol=slope_tol, abs_floor=abs_floor).items()
            if v is not None}
    th = Thresholds(**{**thresholds.to_json(), **over}) if over else thresholds
    eps, sups = profile.tail
    if len(eps) < 4:
        raise InsufficientDataError(f"need at least 4 tail points, got {len(eps)}")
    if not np.all(np.isfinite(sups)):
        return AsymptoticClass(DIVERGENT, None, -math.inf, math.inf, th, rule="non-finite sup")
    if np.all(sups <= th.abs_floor):
        return AsymptoticClass(NEGLIGIBLE, None, math.inf, 0.0, th, rule="a")
    # sub-floor entries carry no resolvable size; fit on the rest
    keep = sups > th.abs_floor
    if np.count_nonzero(keep) < 4:
        return AsymptoticClass(NEGLIGIBLE, None, math.inf, 0.0, th, rule="a")
    slope, resid = fit_slope(eps[keep], sups[keep], th.abs_floor)
    if slope >= th.m_max - th.slope_tol:
        return AsymptoticClass(NEGLIGIBLE, None, slope, resid, th, rule="b")
    if resid > th.degenerate_residual:
        return AsymptoticClass(DIVERGENT, None, slope, resid, th, low_confidence=True,
                               rule="degenerate fit")
    ratios = log_ratios(eps[keep], sups[keep])
    spread = float(np.max(ratios) / np.min(ratios))
    if spread <= 1 + th.ratio_tol and abs(slope) <= th.slope_tol:
        return AsymptoticClass(LOGTYPE, None, slope, resid, th, ratio_spread=spread, rule="c")
    if abs(slope) <= th.slope_tol:
        return AsymptoticClass(BOUNDED, None, slope, resid, th, ratio_spread=spread, rule="d")
    n = max(0, math.ceil(-slope - th.slope_tol))
    if n <= th.n_max:
        return AsymptoticClass(MODERATE, n, slope, resid, th, ratio_spread=spread, rule="e")
    return AsymptoticClass(DIVERGENT, None, slope, resid, th, ratio_spread=spread, rule="f")


def multi_indices(dimension, max_order):
    """All multi-indices of total order <= max_order, in graded order."""
    out = []
    for k in range(max_order + 1):
        for combo in itertools.combinations_with_replacement(range(dimension), k):
            alpha = [0] * dimension
            for i in combo:
                alpha[i] += 1
            out.append(tuple(alpha))
    return out


def severity(cls: AsymptoticClass, profile: GrowthProfile):
    """Sort key: larger means further from negligible."""
    _, sups = profile.tail
    top = float(np.max(sups)) if len(sups) else 0.0
    return (0 if cls.negligible else 1, -cls.slope if math.isfinite(cls.slope) else math.inf, top)


@dataclass
class NegligibilityResult:
    negligible: bool
    worst_profile: GrowthProfile
    worst_class: AsymptoticClass
    profiles: list = field(default_factory=list)

    def __bool__(self):
        return self.negligible

    def to_json(self):
        return {
            "negligible": self.negligible,
            "worst_class": self.worst_class.to_json(),
            "worst_profile": self.worst_profile.to_json(),
        }


def is_negligible(u: NetFunction, K: CompactBox, max_derivative_order=0,
                  thresholds: Thresholds = DEFAULT_THRESHOLDS) -> NegligibilityResult:
    """True iff every derivative up to the given order classifies Negligible."""
    if max_derivative_order > u.max_order:
        raise ConfigurationError(
            f"max_derivative_order {max_derivative_order} exceeds max_order {u.max_order}")
    results = []
    for alpha in multi_indices(u.dimension, max_derivative_order):
        prof = growth_profile(u, K, alpha)
        results.append((prof, classify(prof, thresholds)))
    worst_prof, worst_cls = max(results, key=lambda pc: severity(pc[1], pc[0]))
    ok = all(c.negligible for _, c in results)
    return NegligibilityResult(ok, worst_prof, worst_cls, results)


def ratio_growth(profile: GrowthProfile):
    """(growth, fitted constant): max tail ratio sup/|log eps| over the first one."""
    eps, sups = profile.tail
    ratios = log_ratios(eps, sups)
    if not np.all(np.isfinite(ratios)):
        return math.inf, math.inf
    first = ratios[0]
    top = float(np.max(ratios))
    if top == 0:
        return 0.0, 0.0
    if first == 0:
        return math.inf, top
    return top / first, top


@dataclass
class LogTypeResult:
    log_type: bool
    worst_growth: float
    fitted_constant: float
    worst_label: str
    profiles: list = field(default_factory=list)

    def __bool__(self):
        return self.log_type

    def to_json(self):
        return {"log_type": self.log_type, "worst_growth": _finite_or_none(self.worst_growth),
                "fitted_constant": _finite_or_none(self.fitted_constant),
                "worst_label": self.worst_label}


def log_type_check(v: NetVectorField, K: CompactBox,
                   thresholds: Thresholds = DEFAULT_THRESHOLDS) -> LogTypeResult:
    """Components and their first partials bounded by C|log eps| on K.

    A profile passes when the tail ratios ``sup/|log eps|`` never exceed
    ``(1 + ratio_tol)`` times the ratio at the start of the tail.
    """
    if v.max_order < 1:
        raise ConfigurationError("log-type check needs first partials (max_order >= 1)")
    worst = (-math.inf, 0.0, "")
    profiles = []
    for c_idx, comp in enumerate(v.components):
        for alpha in multi_indices(v.dimension, 1):
            prof = growth_profile(comp, K, alpha)
            growth, const = ratio_growth(prof)
            label = f"component {c_idx + 1} d^{alpha}"
            profiles.append((label, prof, growth))
            if growth > worst[0]:
                worst = (growth, const, label)
    ok = worst[0] <= 1 + thresholds.ratio_tol
    return LogTypeResult(ok, worst[0], worst[1], worst[2], profiles)
