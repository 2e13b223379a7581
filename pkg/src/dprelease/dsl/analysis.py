"""Interval range inference for transformation programs.

A plain abstract interpretation over the interval lattice: every node maps
input intervals to a sound output interval, so any value a program can
produce on in-range rows lies inside the inferred range. The inferred
range is offered to the user, who may override it; the evaluator clamps to
whatever range is declared, so soundness here affects utility, not privacy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from ..errors import ParameterError
from .ast import And, BinOp, Cmp, Expr, Let, Max, Min, Neg, Not, Num, Or, Var


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ParameterError("interval bounds must be finite")
        if self.lo > self.hi:
            raise ParameterError(f"interval requires lo <= hi, got [{self.lo}, {self.hi}]")

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= value <= self.hi + tol

    @property
    def width(self) -> float:
        return self.hi - self.lo


_INDICATOR = Interval(0.0, 1.0)


def _mul(a: Interval, b: Interval) -> Interval:
    corners = (a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi)
    return Interval(min(corners), max(corners))


def infer_range(expr: Expr, env: Mapping[str, Interval]) -> Interval:
    """Sound output interval of ``expr`` given variable ranges.

    Flow-sensitive through let-bindings: the bound expression's interval is
    added to the environment before the body is analyzed. Total on every
    well-formed AST whose free variables are all bound in ``env``.
    """
    if isinstance(expr, Num):
        return Interval(expr.value, expr.value)
    if isinstance(expr, Var):
        if expr.name not in env:
            raise ParameterError(f"no range bound for variable {expr.name!r}")
        return env[expr.name]
    if isinstance(expr, Neg):
        inner = infer_range(expr.operand, env)
        return Interval(-inner.hi, -inner.lo)
    if isinstance(expr, BinOp):
        left = infer_range(expr.left, env)
        right = infer_range(expr.right, env)
        if expr.op == "+":
            return Interval(left.lo + right.lo, left.hi + right.hi)
        if expr.op == "-":
            return Interval(left.lo - right.hi, left.hi - right.lo)
        return _mul(left, right)
    if isinstance(expr, Cmp):
        infer_range(expr.left, env)
        infer_range(expr.right, env)
        return _INDICATOR
    if isinstance(expr, Not):
        inner = infer_range(expr.operand, env)
        return Interval(1.0 - inner.hi, 1.0 - inner.lo)
    if isinstance(expr, And):
        left = infer_range(expr.left, env)
        right = infer_range(expr.right, env)
        return Interval(min(left.lo, right.lo), min(left.hi, right.hi))
    if isinstance(expr, Or):
        left = infer_range(expr.left, env)
        right = infer_range(expr.right, env)
        return Interval(max(left.lo, right.lo), max(left.hi, right.hi))
    if isinstance(expr, Min):
        left = infer_range(expr.left, env)
        right = infer_range(expr.right, env)
        return Interval(min(left.lo, right.lo), min(left.hi, right.hi))
    if isinstance(expr, Max):
        left = infer_range(expr.left, env)
        right = infer_range(expr.right, env)
        return Interval(max(left.lo, right.lo), max(left.hi, right.hi))
    if isinstance(expr, Let):
        bound = infer_range(expr.bound, env)
        inner_env = dict(env)
        inner_env[expr.name] = bound
        return infer_range(expr.body, inner_env)
    raise TypeError(f"not an expression node: {expr!r}")


def override_warnings(inferred: Interval, declared: Interval) -> list[str]:
    """Utility/clipping warnings when a user overrides the inferred range.

    A wider declared range means more noise than necessary; a narrower one
    clips values. Both are allowed (clamping keeps the guarantee intact).
    """
    warnings: list[str] = []
    if declared.lo < inferred.lo or declared.hi > inferred.hi:
        warnings.append(
            f"declared range [{declared.lo}, {declared.hi}] is wider than the "
            f"inferred [{inferred.lo}, {inferred.hi}]; noise scales with range "
            "width, so accuracy suffers"
        )
    if declared.lo > inferred.lo or declared.hi < inferred.hi:
        warnings.append(
            f"declared range [{declared.lo}, {declared.hi}] is narrower than the "
            f"inferred [{inferred.lo}, {inferred.hi}]; out-of-range values will "
            "be clipped into it"
        )
    return warnings
