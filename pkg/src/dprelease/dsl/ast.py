"""AST node types and the canonical pretty-printer.

Comparisons produce 0/1 indicators; the boolean connectives are total
numeric functions over them (and = min, or = max, not = 1 - x), so every
node is defined on all reals and evaluation never branches on data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

ARITH_OPS = ("+", "-", "*")
CMP_OPS = ("<", "<=", "=", ">", ">=")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of ARITH_OPS
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Cmp:
    op: str  # one of CMP_OPS
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class Min:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Max:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Let:
    name: str
    bound: "Expr"
    body: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Cmp, And, Or, Not, Min, Max, Let]

# Binding strength, loosest to tightest; used to decide parentheses when
# printing. Matches the grammar: let < or < and < not < cmp < add < mul < neg.
_PREC_LET = 0
_PREC_OR = 1
_PREC_AND = 2
_PREC_NOT = 3
_PREC_CMP = 4
_PREC_ADD = 5
_PREC_MUL = 6
_PREC_NEG = 7
_PREC_ATOM = 8


def _prec(expr: Expr) -> int:
    if isinstance(expr, (Num, Var, Min, Max)):
        return _PREC_ATOM
    if isinstance(expr, Neg):
        return _PREC_NEG
    if isinstance(expr, BinOp):
        return _PREC_MUL if expr.op == "*" else _PREC_ADD
    if isinstance(expr, Cmp):
        return _PREC_CMP
    if isinstance(expr, Not):
        return _PREC_NOT
    if isinstance(expr, And):
        return _PREC_AND
    if isinstance(expr, Or):
        return _PREC_OR
    return _PREC_LET


def _wrap(expr: Expr, minimum: int) -> str:
    text = to_source(expr)
    if _prec(expr) < minimum:
        return f"({text})"
    return text


def _num_text(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def to_source(expr: Expr) -> str:
    """Canonical program text; parse(to_source(e)) reproduces e exactly.

    Binary chains print left-associatively, so a right-nested child at the
    same precedence keeps its parentheses.
    """
    if isinstance(expr, Num):
        return _num_text(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Neg):
        return f"-{_wrap(expr.operand, _PREC_NEG)}"
    if isinstance(expr, BinOp):
        p = _prec(expr)
        return f"{_wrap(expr.left, p)} {expr.op} {_wrap(expr.right, p + 1)}"
    if isinstance(expr, Cmp):
        return f"{_wrap(expr.left, _PREC_CMP + 1)} {expr.op} {_wrap(expr.right, _PREC_CMP + 1)}"
    if isinstance(expr, Not):
        return f"not {_wrap(expr.operand, _PREC_NOT)}"
    if isinstance(expr, And):
        return f"{_wrap(expr.left, _PREC_AND)} and {_wrap(expr.right, _PREC_AND + 1)}"
    if isinstance(expr, Or):
        return f"{_wrap(expr.left, _PREC_OR)} or {_wrap(expr.right, _PREC_OR + 1)}"
    if isinstance(expr, Min):
        return f"min({to_source(expr.left)}, {to_source(expr.right)})"
    if isinstance(expr, Max):
        return f"max({to_source(expr.left)}, {to_source(expr.right)})"
    if isinstance(expr, Let):
        # the bound parses at or-level, so a nested let there needs parens;
        # the body is a full expression and never does
        return f"let {expr.name} = {_wrap(expr.bound, _PREC_OR)} in {to_source(expr.body)}"
    raise TypeError(f"not an expression node: {expr!r}")


def node_count(expr: Expr) -> int:
    """Number of AST nodes; one evaluation step per node per row."""
    if isinstance(expr, (Num, Var)):
        return 1
    if isinstance(expr, (Neg, Not)):
        return 1 + node_count(expr.operand)
    if isinstance(expr, (BinOp, Cmp, And, Or, Min, Max)):
        return 1 + node_count(expr.left) + node_count(expr.right)
    if isinstance(expr, Let):
        return 1 + node_count(expr.bound) + node_count(expr.body)
    raise TypeError(f"not an expression node: {expr!r}")
