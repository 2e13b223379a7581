"""Restricted per-row transformation language.

Pre-processing a dataset with an arbitrary function can destroy a DP
guarantee, but applying the same pure function independently to every row
preserves it, provided the noise added afterwards is calibrated to the
transformed variable's range. This package provides the pieces that make
such transformations safe to accept from untrusted users:

- :func:`parse`: a small expression grammar with no loops, no calls apart
  from min/max, and no assignment except local ``let`` bindings, so a
  program can neither keep state nor branch on data values;
- :func:`infer_range`: sound interval inference for the output range;
- :func:`evaluate_rows`: per-row evaluation with the declared output range
  enforced by clamping.
"""

from .ast import (
    And,
    BinOp,
    Cmp,
    Expr,
    Let,
    Max,
    Min,
    Neg,
    Not,
    Num,
    Or,
    Var,
    node_count,
    to_source,
)
from .analysis import Interval, infer_range, override_warnings
from .evaluate import eval_row, eval_vector, evaluate_rows
from .parser import parse

__all__ = [
    "And", "BinOp", "Cmp", "Expr", "Let", "Max", "Min", "Neg", "Not", "Num",
    "Or", "Var", "node_count", "to_source", "Interval", "infer_range",
    "override_warnings", "eval_row", "eval_vector", "evaluate_rows", "parse",
]
