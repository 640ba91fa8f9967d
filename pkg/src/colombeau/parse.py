"""Parser for the scenario expression grammar.

Grammar: infix ``+ - * /``, ``^`` for integer powers, parentheses,
numeric literals, the variables ``x1 .. xn``, the reserved symbol ``eps``,
the constant ``pi`` and the functions ``sin cos exp log bump``.
``bump(s)`` is ``exp(1 - 1/(1-s))`` for ``s < 1`` and 0 otherwise.

Python's own parser does the tokenizing and precedence work; the tree is
then walked against the closed vocabulary above.
"""

import ast
import math
import re
from fractions import Fraction

from . import expr as E
from .errors import ExpressionError

_VAR = re.compile(r"^x([1-9][0-9]*)$")


def _translate(text):
    """Replace ``^`` by ``**`` and return (source, column map)."""
    if "**" in text:
        raise ExpressionError("use ^ for powers", text.index("**") + 1, text)
    lead = len(text) - len(text.lstrip())
    out = []
    cols = []
    for i, ch in enumerate(text[lead:], start=lead):
        if ch == "^":
            out.append("**")
            cols.extend((i + 1, i + 1))
        else:
            out.append(ch)
            cols.append(i + 1)
    return "".join(out), cols


def parse_expression(text, dimension=None):
    """Parse ``text`` into an :class:`~colombeau.expr.Expr`.

    Parameters
    ----------
    text : str
        Expression source.
    dimension : int, optional
        When given, variables beyond ``x{dimension}`` are rejected.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("empty expression")
    src, cols = _translate(text)

    def col(node):
        off = getattr(node, "col_offset", 0)
        return cols[off] if off < len(cols) else len(text)

    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        off = (exc.offset or 1) - 1
        pos = cols[off] if 0 <= off < len(cols) else len(text)
        raise ExpressionError(f"syntax error: {exc.msg}", pos, text) from None

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ExpressionError("unsupported literal", col(node), text)
            # decimal literals become exact decimal rationals
            seg = ast.get_source_segment(src, node)
            return E.const(Fraction(seg) if seg and isinstance(node.value, float) else node.value)
        if isinstance(node, ast.Name):
            if node.id == "eps":
                return E.EPS
            if node.id == "pi":
                return E.const(math.pi)
            m = _VAR.match(node.id)
            if m:
                idx = int(m.group(1)) - 1
                if dimension is not None and idx >= dimension:
                    raise ExpressionError(
                        f"variable {node.id} exceeds dimension {dimension}", col(node), text)
                return E.var(idx)
            raise ExpressionError(f"unknown symbol {node.id!r}", col(node), text)
        if isinstance(node, ast.UnaryOp):
            operand = walk(node.operand)
            if isinstance(node.op, ast.USub):
                return -operand
            if isinstance(node.op, ast.UAdd):
                return operand
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Pow):
                base = walk(node.left)
                exponent = walk(node.right)
                if not isinstance(exponent, E.Const) or exponent.value.denominator != 1:
                    raise ExpressionError("exponent must be an integer", col(node.right), text)
                return E.power(base, exponent.value)
            left, right = walk(node.left), walk(node.right)
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
            if isinstance(node.op, ast.Div):
                if right.is_zero:
                    raise ExpressionError("division by zero", col(node.right), text)
                return left / right
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name):
                raise ExpressionError("unsupported call", col(node), text)
            name = node.func.id
            if name not in E.FUNCTIONS:
                raise ExpressionError(f"unknown function symbol {name!r}", col(node), text)
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"{name} takes exactly one argument", col(node), text)
            return E.func(name, walk(node.args[0]))
        raise ExpressionError(f"unsupported syntax {type(node).__name__}", col(node), text)

    return walk(tree)
