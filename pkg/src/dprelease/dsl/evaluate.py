"""Evaluation of transformation programs over dataset rows.

Production evaluation is vectorized over whole columns; a scalar
interpreter with a step counter exists alongside it so tests can assert
that the per-row evaluation cost is a fixed function of the AST alone
(every node evaluates exactly once per row, no short-circuiting), which is
what rules out value-dependent timing.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..errors import ParameterError
from .analysis import Interval
from .ast import And, BinOp, Cmp, Expr, Let, Max, Min, Neg, Not, Num, Or, Var

_CMP_VECTOR = {
    "<": lambda l, r: np.less(l, r),
    "<=": lambda l, r: np.less_equal(l, r),
    "=": lambda l, r: np.equal(l, r),
    ">": lambda l, r: np.greater(l, r),
    ">=": lambda l, r: np.greater_equal(l, r),
}


def eval_vector(expr: Expr, env: Mapping[str, np.ndarray | float]):
    """Evaluate over column arrays; scalars broadcast."""
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        if expr.name not in env:
            raise ParameterError(f"unbound variable {expr.name!r}")
        return env[expr.name]
    if isinstance(expr, Neg):
        return -eval_vector(expr.operand, env)
    if isinstance(expr, BinOp):
        left = eval_vector(expr.left, env)
        right = eval_vector(expr.right, env)
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        return left * right
    if isinstance(expr, Cmp):
        left = eval_vector(expr.left, env)
        right = eval_vector(expr.right, env)
        return _CMP_VECTOR[expr.op](left, right).astype(np.float64)
    if isinstance(expr, Not):
        return 1.0 - eval_vector(expr.operand, env)
    if isinstance(expr, And):
        return np.minimum(eval_vector(expr.left, env), eval_vector(expr.right, env))
    if isinstance(expr, Or):
        return np.maximum(eval_vector(expr.left, env), eval_vector(expr.right, env))
    if isinstance(expr, Min):
        return np.minimum(eval_vector(expr.left, env), eval_vector(expr.right, env))
    if isinstance(expr, Max):
        return np.maximum(eval_vector(expr.left, env), eval_vector(expr.right, env))
    if isinstance(expr, Let):
        inner = dict(env)
        inner[expr.name] = eval_vector(expr.bound, env)
        return eval_vector(expr.body, inner)
    raise TypeError(f"not an expression node: {expr!r}")


class StepCounter:
    """Counts node evaluations; one per AST node per row, data-independent."""

    def __init__(self) -> None:
        self.steps = 0


def eval_row(expr: Expr, row: Mapping[str, float],
             counter: StepCounter | None = None) -> float:
    """Scalar reference interpreter. No node is ever skipped: both branches
    of every connective evaluate, so the step count depends only on the AST.
    """
    if counter is not None:
        counter.steps += 1
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        return float(row[expr.name])
    if isinstance(expr, Neg):
        return -eval_row(expr.operand, row, counter)
    if isinstance(expr, BinOp):
        left = eval_row(expr.left, row, counter)
        right = eval_row(expr.right, row, counter)
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        return left * right
    if isinstance(expr, Cmp):
        left = eval_row(expr.left, row, counter)
        right = eval_row(expr.right, row, counter)
        return float(_CMP_VECTOR[expr.op](left, right))
    if isinstance(expr, Not):
        return 1.0 - eval_row(expr.operand, row, counter)
    if isinstance(expr, And):
        left = eval_row(expr.left, row, counter)
        right = eval_row(expr.right, row, counter)
        return min(left, right)
    if isinstance(expr, Or):
        left = eval_row(expr.left, row, counter)
        right = eval_row(expr.right, row, counter)
        return max(left, right)
    if isinstance(expr, Min):
        left = eval_row(expr.left, row, counter)
        right = eval_row(expr.right, row, counter)
        return min(left, right)
    if isinstance(expr, Max):
        left = eval_row(expr.left, row, counter)
        right = eval_row(expr.right, row, counter)
        return max(left, right)
    if isinstance(expr, Let):
        inner = dict(row)
        inner[expr.name] = eval_row(expr.bound, row, counter)
        return eval_row(expr.body, inner, counter)
    raise TypeError(f"not an expression node: {expr!r}")


def evaluate_rows(
    expr: Expr,
    columns: Mapping[str, np.ndarray],
    declared_range: Interval,
) -> np.ndarray:
    """Per-row evaluation clamped into the declared output range.

    The declared range (inferred or user-overridden) is what downstream
    mechanisms calibrate noise to, and clamping enforces it totally, so a
    bad override degrades utility but never the privacy guarantee.
    """
    if not columns:
        raise ParameterError("evaluate_rows needs at least one input column")
    lengths = {len(np.atleast_1d(c)) for c in columns.values()}
    if len(lengths) > 1:
        raise ParameterError(f"input columns disagree on length: {sorted(lengths)}")
    n = lengths.pop()
    result = eval_vector(expr, columns)
    result = np.broadcast_to(np.asarray(result, dtype=np.float64), (n,))
    return np.clip(result, declared_range.lo, declared_range.hi)
