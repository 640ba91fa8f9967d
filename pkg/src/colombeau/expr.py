"""Closed-form expressions in x1..xn and eps with exact partial derivatives.

Expressions are kept in a canonical form: sums are flat with like terms
collected, products are flat with like bases collected, and coefficients
are exact rationals.  Two expressions that are algebraically identical
after these rewrites compare equal and cancel exactly, which is what lets
e.g. the Lie derivative of a radial function along a rotation generator
come out as the literal constant 0 instead of rounding noise scaled by
a large power of 1/eps.

Evaluation is compiled to straight-line numpy code with one temporary per
distinct subexpression.  Canonical ordering fixes the order of floating
point operations, so equal subexpressions always evaluate bitwise equal.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial

from .errors import ExpressionError

__all__ = [
    "Expr", "Const", "Var", "Eps", "EpsFn", "Func", "Add", "Mul",
    "const", "var", "EPS", "ZERO", "ONE", "add", "mul", "power", "func",
    "diff", "partial_expr", "subs", "compile_expr", "evaluate", "bump",
    "FUNCTIONS",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "bump")


def _frac(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    value = float(value)
    if not math.isfinite(value):
        raise ExpressionError(f"non-finite constant {value!r}")
    return Fraction(value)


class Expr:
    """Immutable expression node.  Equality and hashing are structural."""

    __slots__ = ("key", "_hash", "free", "has_eps")

    def _init(self, key, free, has_eps):
        self.key = key
        self._hash = hash(key)
        self.free = free
        self.has_eps = has_eps

    def __eq__(self, other):
        return isinstance(other, Expr) and self.key == other.key

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return self.key

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, mul(const(-1), as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), mul(const(-1), self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return mul(self, power(as_expr(other), -1))

    def __rtruediv__(self, other):
        return mul(as_expr(other), power(self, -1))

    def __neg__(self):
        return mul(const(-1), self)

    def __pow__(self, exponent):
        return power(self, exponent)

    @property
    def is_zero(self):
        return isinstance(self, Const) and self.value == 0


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = _frac(value)
        self._init(f"{self.value}", frozenset(), False)


class Var(Expr):
    """Coordinate x_{index+1} (0-based index)."""

    __slots__ = ("index",)

    def __init__(self, index):
        self.index = int(index)
        self._init(f"x{self.index + 1}", frozenset((self.index,)), False)


class Eps(Expr):
    __slots__ = ()

    def __init__(self):
        self._init("eps", frozenset(), True)


class EpsFn(Expr):
    """Opaque function of eps only (a user-supplied generalized number)."""

    __slots__ = ("name", "fn")

    def __init__(self, name, fn):
        self.name = str(name)
        self.fn = fn
        self._init(f"{{{self.name}}}", frozenset(), True)

    def __eq__(self, other):
        return isinstance(other, EpsFn) and self.name == other.name and self.fn is other.fn

    __hash__ = Expr.__hash__


class Func(Expr):
    """Unary vocabulary function; ``bump`` carries a derivative order."""

    __slots__ = ("name", "arg", "order")

    def __init__(self, name, arg, order=0):
        self.name = name
        self.arg = arg
        self.order = int(order)
        label = name if name != "bump" or order == 0 else f"bump'{order}"
        self._init(f"{label}({arg.key})", arg.free, arg.has_eps)


class Add(Expr):
    __slots__ = ("terms",)

    def __init__(self, terms):
        self.terms = tuple(terms)
        free = frozenset().union(*(t.free for t in self.terms))
        self._init("(" + " + ".join(t.key for t in self.terms) + ")", free,
                   any(t.has_eps for t in self.terms))


class Mul(Expr):
    """coef * prod(base**exp); exponents are Fractions."""

    __slots__ = ("coef", "factors")

    def __init__(self, coef, factors):
        self.coef = _frac(coef)
        self.factors = tuple(factors)
        parts = [str(self.coef)] + [
            b.key if e == 1 else f"{b.key}^{e}" for b, e in self.factors
        ]
        free = frozenset().union(*(b.free for b, _ in self.factors))
        self._init("[" + "*".join(parts) + "]", free,
                   any(b.has_eps for b, _ in self.factors))


ZERO = Const(0)
ONE = Const(1)
EPS = Eps()


def const(value) -> Const:
    return Const(value)


def var(index) -> Var:
    return Var(index)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(value)


def _split(term):
    """Return (coefficient, monomial) with the monomial coefficient-free."""
    if isinstance(term, Mul):
        if len(term.factors) == 1 and term.factors[0][1] == 1:
            return term.coef, term.factors[0][0]
        return term.coef, Mul(1, term.factors)
    return Fraction(1), term


def _scale(coef, mono):
    if coef == 1:
        return mono
    if isinstance(mono, Mul):
        return Mul(coef, mono.factors)
    return Mul(coef, ((mono, Fraction(1)),))


def add(*args) -> Expr:
    constant = Fraction(0)
    collected = {}
    stack = list(reversed(args))
    while stack:
        a = as_expr(stack.pop())
        if isinstance(a, Const):
            constant += a.value
        elif isinstance(a, Add):
            stack.extend(reversed(a.terms))
        else:
            coef, mono = _split(a)
            if mono in collected:
                collected[mono][1] += coef
            else:
                collected[mono] = [mono, coef]
    terms = [_scale(c, m) for m, c in collected.values() if c != 0]
    terms.sort(key=lambda t: t.key)
    if constant != 0:
        terms.append(Const(constant))
    if not terms:
        return ZERO
    if len(terms) == 1:
        return terms[0]
    return Add(terms)


def mul(*args) -> Expr:
    coef = Fraction(1)
    bases = {}
    for a in args:
        a = as_expr(a)
        if isinstance(a, Const):
            coef *= a.value
            continue
        items = a.factors if isinstance(a, Mul) else ((a, Fraction(1)),)
        if isinstance(a, Mul):
            coef *= a.coef
        for b, e in items:
            if b in bases:
                bases[b][1] += e
            else:
                bases[b] = [b, Fraction(e)]
    if coef == 0:
        return ZERO
    factors = sorted(((b, e) for b, e in bases.values() if e != 0), key=lambda f: f[0].key)
    if not factors:
        return Const(coef)
    if len(factors) == 1 and factors[0][1] == 1:
        base = factors[0][0]
        if coef == 1:
            return base
        if isinstance(base, Add):
            # c * (a + b) -> c*a + c*b keeps sums of scaled sums canonical
            return add(*(_scale_term(coef, t) for t in base.terms))
    return Mul(coef, factors)


def _scale_term(coef, term):
    if isinstance(term, Const):
        return Const(coef * term.value)
    c, mono = _split(term)
    return _scale(coef * c, mono)


def power(base, exponent) -> Expr:
    base = as_expr(base)
    e = _frac(exponent)
    if e == 0:
        return ONE
    if e == 1:
        return base
    if isinstance(base, Const):
        v = base.value
        if e.denominator == 1:
            if v == 0 and e < 0:
                raise ExpressionError("division by zero in constant expression")
            return Const(v ** int(e))
        if v < 0:
            raise ExpressionError("fractional power of a negative constant")
        return Const(Fraction(float(v) ** float(e)))
    if isinstance(base, Mul) and e.denominator == 1:
        k = int(e)
        return mul(Const(base.coef ** k), *[Mul(1, ((b, be * k),)) for b, be in base.factors])
    # (b^p)^q with fractional q is left nested: (x^2)^(1/2) is |x|, not x
    return Mul(1, ((base, e),))


def func(name, arg, order=0) -> Expr:
    arg = as_expr(arg)
    if name not in FUNCTIONS:
        raise ExpressionError(f"unknown function symbol {name!r}")
    if isinstance(arg, Const):
        x = float(arg.value)
        if name == "bump":
            return Const(Fraction(float(bump(order, np.float64(x)))))
        if name == "log" and x <= 0:
            raise ExpressionError("log of a non-positive constant")
        return Const(Fraction(getattr(math, name)(x)))
    return Func(name, arg, order)


# ---------------------------------------------------------------- calculus

@lru_cache(maxsize=None)
def diff(e: Expr, i: int) -> Expr:
    """Exact partial derivative with respect to x_{i+1}."""
    if i not in e.free:
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Add):
        return add(*(diff(t, i) for t in e.terms))
    if isinstance(e, Mul):
        terms = []
        for k, (b, p) in enumerate(e.factors):
            db = diff(b, i)
            if db.is_zero:
                continue
            rest = [Mul(1, ((bb, pp),)) for j, (bb, pp) in enumerate(e.factors) if j != k]
            terms.append(mul(Const(e.coef * p), power(b, p - 1), db, *rest))
        return add(*terms)
    if isinstance(e, Func):
        da = diff(e.arg, i)
        a = e.arg
        if e.name == "sin":
            outer = func("cos", a)
        elif e.name == "cos":
            outer = mul(Const(-1), func("sin", a))
        elif e.name == "exp":
            outer = e
        elif e.name == "log":
            outer = power(a, -1)
        else:
            outer = func("bump", a, e.order + 1)
        return mul(outer, da)
    raise TypeError(f"cannot differentiate {e!r}")


def partial_expr(e: Expr, alpha) -> Expr:
    """Apply the multi-index ``alpha`` (tuple of non-negative ints)."""
    out = e
    for i, k in enumerate(alpha):
        for _ in range(int(k)):
            out = diff(out, i)
    return out


def subs(e: Expr, mapping) -> Expr:
    """Substitute variables: ``mapping`` maps 0-based index -> Expr.

    Variables absent from the mapping are left untouched.
    """
    mapping = {int(k): as_expr(v) for k, v in mapping.items()}
    cache = {}

    def walk(node):
        if not (node.free & mapping.keys()):
            return node
        hit = cache.get(node)
        if hit is not None:
            return hit
        if isinstance(node, Var):
            out = mapping[node.index]
        elif isinstance(node, Add):
            out = add(*(walk(t) for t in node.terms))
        elif isinstance(node, Mul):
            out = mul(Const(node.coef), *(power(walk(b), p) for b, p in node.factors))
        elif isinstance(node, Func):
            out = func(node.name, walk(node.arg), node.order)
        else:
            out = node
        cache[node] = out
        return out

    return walk(e)


# ---------------------------------------------------------------- bump

@lru_cache(maxsize=None)
def _bump_poly(k: int) -> Polynomial:
    # d/ds [P(w) e^{1-w}] with w = 1/(1-s), dw/ds = w^2
    p = Polynomial([1.0])
    w2 = Polynomial([0.0, 0.0, 1.0])
    for _ in range(k):
        p = w2 * (p.deriv() - p)
    return p


def bump(k, s):
    """k-th derivative of b(s) = exp(1 - 1/(1-s)) for s < 1, 0 for s >= 1.

    b(0) = 1 and b vanishes to infinite order at s = 1, so b(|x|^2/r^2)
    is the standard compactly supported bump with sup 1.
    """
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape)
    inside = s < 1.0
    if np.any(inside):
        w = 1.0 / (1.0 - s[inside])
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            val = _bump_poly(int(k))(w) * np.exp(1.0 - w)
        val[w > 740.0] = 0.0
        out[inside] = val
    return out if out.ndim else float(out)


# ---------------------------------------------------------------- evaluation

def _eval_epsfn(fn, eps):
    if np.ndim(eps) == 0:
        return float(fn(float(eps)))
    eps = np.asarray(eps, dtype=float)
    uniq, inv = np.unique(eps, return_inverse=True)
    vals = np.array([float(fn(float(v))) for v in uniq])
    return vals[inv]


def _fmt(value: Fraction) -> str:
    return repr(float(value))


@lru_cache(maxsize=4096)
def compile_expr(e: Expr):
    """Compile to ``f(X, eps) -> ndarray`` with X of shape (m, n).

    ``eps`` may be a scalar or an array of shape (m,) (one value per row).
    """
    lines = []
    names = {}
    env = {"np": np, "_bump": bump, "_epsfn": _eval_epsfn}

    def emit(node):
        if node in names:
            return names[node]
        if isinstance(node, Const):
            code = _fmt(node.value)
        elif isinstance(node, Var):
            code = f"X[:, {node.index}]"
        elif isinstance(node, Eps):
            code = "eps"
        elif isinstance(node, EpsFn):
            ref = f"_f{len(env)}"
            env[ref] = node.fn
            code = f"_epsfn({ref}, eps)"
        elif isinstance(node, Func):
            a = emit(node.arg)
            if node.name == "bump":
                code = f"_bump({node.order}, {a})"
            else:
                code = f"np.{node.name}({a})"
        elif isinstance(node, Add):
            code = " + ".join(emit(t) for t in node.terms)
        elif isinstance(node, Mul):
            parts = []
            for b, p in node.factors:
                t = emit(b)
                if p == 1:
                    parts.append(t)
                elif p.denominator == 1:
                    parts.append(f"{t} ** {int(p)}")
                elif p == Fraction(1, 2):
                    parts.append(f"np.sqrt({t})")
                elif p == Fraction(-1, 2):
                    parts.append(f"(1.0 / np.sqrt({t}))")
                else:
                    parts.append(f"np.power({t}, {float(p)!r})")
            if node.coef != 1:
                parts.insert(0, _fmt(node.coef))
            code = " * ".join(f"({p})" for p in parts)
        else:
            raise TypeError(f"cannot compile {node!r}")
        name = f"t{len(names)}"
        lines.append(f"    {name} = {code}")
        names[node] = name
        return name

    result = emit(e)
    src = "def _compiled(X, eps):\n"
    src += "\n".join(lines) + "\n" if lines else ""
    src += f"    return {result}\n"
    exec(compile(src, "<colombeau-expr>", "exec"), env)
    raw = env["_compiled"]

    def evaluate_rows(X, eps):
        X = np.asarray(X, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = raw(X, eps)
        return np.broadcast_to(np.asarray(out, dtype=float), (X.shape[0],)).copy()

    return evaluate_rows


def evaluate(e: Expr, X, eps):
    return compile_expr(e)(X, eps)
