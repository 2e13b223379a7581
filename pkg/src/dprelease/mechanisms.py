"""Differentially private primitives for univariate statistics.

Every mechanism takes an explicit :class:`~dprelease.randomness.RandomSource`
and is pure given that source. Neighboring datasets are equal-size datasets
differing in one record (change-one), which fixes the sensitivities used
here: (b-a)/n for a clamped mean, 2 for any histogram level (one changed
record moves between at most two cells).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import accuracy as acc
from .errors import EmptyDataError, IngestionError, ParameterError
from .randomness import RandomSource, laplace

NUMERIC = "numeric"
CATEGORICAL = "categorical"
BOOLEAN = "boolean"

KINDS = (NUMERIC, CATEGORICAL, BOOLEAN)

# Reserved catch-all bin for categorical values outside the declared list.
OTHER_CATEGORY = "other"

_MISSING_TOKENS = {"", "na", "n/a", "nan", "none", "null", "."}
_TRUE_TOKENS = {"1", "true", "t", "yes"}
_FALSE_TOKENS = {"0", "false", "f", "no"}


@dataclass(frozen=True)
class VariableSpec:
    """Declared metadata for one column: kind, clamping range, public n.

    The range (or category list) is declared by the depositor, never read
    from the data; mechanisms calibrate noise to it.
    """

    name: str
    kind: str
    lower: float | None = None
    upper: float | None = None
    categories: tuple[str, ...] | None = None
    n: int = 1
    description: str = ""

    def __post_init__(self) -> None:
        if not self.name:
            raise ParameterError("variable name must be non-empty")
        if self.kind not in KINDS:
            raise ParameterError(f"unknown variable kind {self.kind!r}")
        if self.n < 1:
            raise ParameterError(f"variable {self.name}: n must be >= 1")
        if self.kind == BOOLEAN:
            object.__setattr__(self, "lower", 0.0)
            object.__setattr__(self, "upper", 1.0)
        if self.kind in (NUMERIC, BOOLEAN):
            if self.lower is None or self.upper is None:
                raise ParameterError(f"variable {self.name}: range [a, b] required")
            if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
                raise ParameterError(f"variable {self.name}: range must be finite")
            if not self.lower < self.upper:
                raise ParameterError(
                    f"variable {self.name}: need lower < upper, got "
                    f"[{self.lower}, {self.upper}]"
                )
        else:
            if not self.categories:
                raise ParameterError(f"variable {self.name}: category list required")
            if len(set(self.categories)) != len(self.categories):
                raise ParameterError(f"variable {self.name}: duplicate categories")
            if OTHER_CATEGORY in self.categories:
                raise ParameterError(
                    f"variable {self.name}: {OTHER_CATEGORY!r} is reserved for "
                    "out-of-list values"
                )

    @property
    def width(self) -> float:
        if self.kind == CATEGORICAL:
            raise ParameterError(f"variable {self.name} has no numeric range")
        return float(self.upper) - float(self.lower)

    @property
    def is_numeric(self) -> bool:
        return self.kind in (NUMERIC, BOOLEAN)


@dataclass(frozen=True)
class ReleaseValue:
    """A single DP release with the privacy and accuracy it was bought at.

    ``accuracy`` is the a priori radius: with probability at least
    ``confidence_level`` the released value(s) are within ``accuracy`` of
    the true value(s), in the units of the statistic.
    """

    kind: str
    value: float | tuple
    epsilon_spent: float
    delta_spent: float
    accuracy: float
    confidence_level: float
    payload: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.epsilon_spent < 0:
            raise ParameterError("epsilon_spent must be >= 0")
        if not 0.0 <= self.delta_spent < 1.0:
            raise ParameterError("delta_spent must be in [0, 1)")
        if not self.accuracy > 0:
            raise ParameterError("accuracy must be positive")
        if not 0.0 < self.confidence_level < 1.0:
            raise ParameterError("confidence_level must be in (0, 1)")


@dataclass(frozen=True)
class ClampResult:
    """Clamped column plus counters the ingest layer surfaces as warnings."""

    values: np.ndarray | list
    clamped_count: int
    missing_count: int


def _coerce_numeric(raw: Sequence, spec: VariableSpec) -> tuple[np.ndarray, int]:
    """Parse raw values to floats, dropping missing entries.

    Returns (values, missing_count). Raises IngestionError naming the first
    offending row for tokens that are neither numeric nor missing.
    """
    out: list[float] = []
    missing = 0
    boolean = spec.kind == BOOLEAN
    for i, v in enumerate(raw):
        if v is None:
            missing += 1
            continue
        if isinstance(v, str):
            token = v.strip().lower()
            if token in _MISSING_TOKENS:
                missing += 1
                continue
            if boolean and token in _TRUE_TOKENS:
                out.append(1.0)
                continue
            if boolean and token in _FALSE_TOKENS:
                out.append(0.0)
                continue
            try:
                parsed = float(token)
            except ValueError:
                raise IngestionError(
                    f"column {spec.name}: non-numeric value {v!r} at row {i}"
                ) from None
            out.append(parsed)
            continue
        if isinstance(v, bool):
            out.append(1.0 if v else 0.0)
            continue
        parsed = float(v)
        if math.isnan(parsed):
            missing += 1
            continue
        out.append(parsed)
    return np.asarray(out, dtype=np.float64), missing


def clamp_column(raw: Sequence, spec: VariableSpec) -> ClampResult:
    """Truncate a raw column into its declared range or category list.

    Missing values are dropped (the declared n stays public and untouched).
    Numeric values clamp into [a, b]; categorical values outside the list
    map to the reserved ``other`` bin.
    """
    if spec.kind == CATEGORICAL:
        allowed = set(spec.categories or ())
        values: list[str] = []
        clamped = 0
        missing = 0
        for v in raw:
            if v is None:
                missing += 1
                continue
            token = str(v).strip()
            if token.lower() in _MISSING_TOKENS:
                missing += 1
                continue
            if token in allowed:
                values.append(token)
            else:
                values.append(OTHER_CATEGORY)
                clamped += 1
        return ClampResult(values, clamped, missing)

    numeric, missing = _coerce_numeric(raw, spec)
    clamped = int(np.count_nonzero((numeric < spec.lower) | (numeric > spec.upper)))
    return ClampResult(np.clip(numeric, spec.lower, spec.upper), clamped, missing)


def laplace_noise(scale: float, rng: RandomSource) -> float:
    """One Laplace(0, scale) draw from the given randomness source."""
    return laplace(scale, rng)


def _check_eps(eps: float) -> None:
    if not (eps > 0.0) or not math.isfinite(eps):
        raise ParameterError(f"epsilon must be positive and finite, got {eps}")


def dp_mean(
    column: np.ndarray,
    spec: VariableSpec,
    eps: float,
    rng: RandomSource,
    alpha: float = 0.05,
) -> ReleaseValue:
    """Laplace mechanism for the mean of a clamped numeric column.

    Sensitivity of the mean under change-one neighbors is (b-a)/n, so the
    noise scale is (b-a)/(n*eps). The noisy value is clamped back into
    [a, b], which is pure post-processing.
    """
    _check_eps(eps)
    if not spec.is_numeric:
        raise ParameterError(f"mean requires a numeric variable, got {spec.kind}")
    column = np.asarray(column, dtype=np.float64)
    n = len(column)
    if n == 0:
        raise EmptyDataError(f"column {spec.name} is empty; no release computed")
    scale = spec.width / (n * eps)
    noisy = float(np.mean(column)) + laplace(scale, rng)
    value = min(max(noisy, float(spec.lower)), float(spec.upper))
    return ReleaseValue(
        kind="mean",
        value=value,
        epsilon_spent=eps,
        delta_spent=0.0,
        accuracy=acc.mean_accuracy(eps, alpha, n, spec.width),
        confidence_level=1.0 - alpha,
        payload={"n": n, "lower": float(spec.lower), "upper": float(spec.upper)},
    )


def resolve_bins(spec: VariableSpec, bins) -> tuple[np.ndarray | None, list[str]]:
    """Normalize a bin definition to (edges, labels).

    Numeric: ``bins`` is an int (equal-width cells) or explicit edges that
    must partition [a, b] exactly. Categorical: ``bins`` must be None or the
    declared category list; the reserved ``other`` bin is appended.
    """
    key = (spec, bins if bins is None or isinstance(bins, int) else tuple(bins))
    try:
        cached = _BIN_CACHE.get(key)
    except TypeError:  # unhashable bins object; resolve without caching
        cached = None
        key = None
    if cached is not None:
        return cached
    resolved = _resolve_bins(spec, bins)
    if key is not None:
        if len(_BIN_CACHE) > 256:
            _BIN_CACHE.clear()
        _BIN_CACHE[key] = resolved
    return resolved


_BIN_CACHE: dict = {}


def _resolve_bins(spec: VariableSpec, bins) -> tuple[np.ndarray | None, list[str]]:
    if spec.kind == CATEGORICAL:
        cats = list(spec.categories or ())
        if bins is not None and list(bins) != cats:
            raise ParameterError(
                f"variable {spec.name}: categorical bins must match the declared "
                "category list"
            )
        return None, cats + [OTHER_CATEGORY]

    if bins is None:
        bins = 10
    if isinstance(bins, (int, np.integer)):
        if bins < 1:
            raise ParameterError("bin count must be >= 1")
        edges = np.linspace(spec.lower, spec.upper, int(bins) + 1)
    else:
        edges = np.asarray(list(bins), dtype=np.float64)
        if len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise ParameterError("bin edges must be strictly increasing")
        tol = 1e-9 * max(1.0, abs(spec.lower), abs(spec.upper))
        if abs(edges[0] - spec.lower) > tol or abs(edges[-1] - spec.upper) > tol:
            raise ParameterError(
                f"bins [{edges[0]}, {edges[-1]}] do not cover the declared range "
                f"[{spec.lower}, {spec.upper}]"
            )
    labels = [f"[{edges[i]:.6g}, {edges[i + 1]:.6g})" for i in range(len(edges) - 2)]
    labels.append(f"[{edges[-2]:.6g}, {edges[-1]:.6g}]")
    return edges, labels


def _true_counts(column, spec: VariableSpec, edges, labels) -> np.ndarray:
    if spec.kind == CATEGORICAL:
        index = {c: i for i, c in enumerate(labels)}
        counts = np.zeros(len(labels), dtype=np.float64)
        for v in column:
            counts[index[v]] += 1.0
        return counts
    column = np.asarray(column, dtype=np.float64)
    # half-open bins, last bin closed; column is pre-clamped into the range
    idx = np.searchsorted(edges, column, side="right") - 1
    idx = np.clip(idx, 0, len(edges) - 2)
    return np.bincount(idx, minlength=len(edges) - 1).astype(np.float64)


def dp_histogram(
    column,
    spec: VariableSpec,
    eps: float,
    bins,
    rng: RandomSource,
    alpha: float = 0.05,
) -> ReleaseValue:
    """Laplace histogram over bins that partition the declared range.

    Change-one neighbors move one record between at most two bins, so the
    count vector has L1 sensitivity 2 and each bin gets independent
    Laplace(2/eps) noise. Negative noisy counts clamp to 0 (post-processing).
    The accuracy radius is simultaneous across bins (union bound).
    """
    _check_eps(eps)
    edges, labels = resolve_bins(spec, bins)
    counts = _true_counts(column, spec, edges, labels)
    noisy = counts + laplace(2.0 / eps, rng, size=len(counts))
    noisy = np.maximum(noisy, 0.0)
    payload: dict = {"labels": labels, "n": int(len(column))}
    if edges is not None:
        payload["edges"] = [float(e) for e in edges]
    return ReleaseValue(
        kind="histogram",
        value=tuple(float(c) for c in noisy),
        epsilon_spent=eps,
        delta_spent=0.0,
        accuracy=acc.histogram_accuracy(eps, alpha, len(counts)),
        confidence_level=1.0 - alpha,
        payload=payload,
    )


def _dyadic_levels(leaf_counts: np.ndarray) -> list[np.ndarray]:
    """Interval counts per level, level 1 (two halves) down to the leaves."""
    levels = [leaf_counts]
    while len(levels[-1]) > 2:
        levels.append(levels[-1].reshape(-1, 2).sum(axis=1))
    levels.reverse()
    return levels


def dp_cdf(
    column,
    spec: VariableSpec,
    eps: float,
    grid_size: int,
    rng: RandomSource,
    alpha: float = 0.05,
) -> ReleaseValue:
    """Approximate CDF on a dyadic grid via the noisy interval tree.

    Builds L = log2(grid_size) levels of interval counts over [a, b]; each
    level is a histogram (sensitivity 2) paid eps/L, so every node gets
    Laplace(2L/eps) noise. A CDF prefix at any grid point decomposes into
    at most L nodes. The full-range prefix is the public n, so the final
    grid point releases exactly 1. Post-processing makes the grid
    non-decreasing and clamps it into [0, 1].
    """
    _check_eps(eps)
    if not spec.is_numeric:
        raise ParameterError(f"cdf requires a numeric variable, got {spec.kind}")
    g = int(grid_size)
    if g < 2 or (g & (g - 1)) != 0:
        raise ParameterError(f"grid size must be a power of two >= 2, got {grid_size}")
    column = np.asarray(column, dtype=np.float64)
    n = len(column)
    if n == 0:
        raise EmptyDataError(f"column {spec.name} is empty; no release computed")

    levels_count = int(math.log2(g))
    leaf_counts, _ = np.histogram(column, bins=g, range=(spec.lower, spec.upper))
    levels = _dyadic_levels(leaf_counts.astype(np.float64))
    scale = 2.0 * levels_count / eps
    noisy_levels = [lvl + laplace(scale, rng, size=len(lvl)) for lvl in levels]

    prefixes = np.empty(g, dtype=np.float64)
    for j in range(1, g):
        total = 0.0
        base = 0
        for level in noisy_levels:
            width = g // len(level)
            if j - base >= width:
                total += level[base // width]
                base += width
        prefixes[j - 1] = total
    prefixes[g - 1] = float(n)  # full-range count is public

    grid = spec.lower + spec.width * np.arange(1, g + 1) / g
    values = np.clip(np.maximum.accumulate(prefixes / n), 0.0, 1.0)
    return ReleaseValue(
        kind="cdf",
        value=tuple(float(v) for v in values),
        epsilon_spent=eps,
        delta_spent=0.0,
        accuracy=acc.cdf_accuracy(eps, alpha, n, g),
        confidence_level=1.0 - alpha,
        payload={"grid": [float(x) for x in grid], "n": n},
    )


def dp_quantile(
    column,
    spec: VariableSpec,
    eps: float,
    q: float,
    rng: RandomSource,
    grid_cells: int = 1024,
    alpha: float = 0.05,
) -> ReleaseValue:
    """Exponential mechanism for a quantile over a fixed grid of cells.

    Candidate outputs are the midpoints of ``grid_cells`` equal-width cells
    of [a, b]. A cell's utility is minus its rank distance to the target:
    zero when #{x < left} <= q*n <= #{x <= right} (the cell straddles the
    quantile), otherwise the gap to the nearer side. Changing one record
    moves each count by at most 1, so the sensitivity is 1 and cells are
    drawn with probability proportional to exp(eps * u / 2).
    """
    _check_eps(eps)
    if not spec.is_numeric:
        raise ParameterError(f"quantile requires a numeric variable, got {spec.kind}")
    if not 0.0 < q < 1.0:
        raise ParameterError(f"quantile q must be in (0, 1), got {q}")
    m = int(grid_cells)
    if m < 2:
        raise ParameterError("quantile grid must have at least 2 cells")
    column = np.asarray(column, dtype=np.float64)
    n = len(column)
    if n == 0:
        raise EmptyDataError(f"column {spec.name} is empty; no release computed")

    edges = spec.lower + spec.width * np.arange(m + 1) / m
    midpoints = 0.5 * (edges[:-1] + edges[1:])
    ordered = np.sort(column)
    below_left = np.searchsorted(ordered, edges[:-1], side="left")
    below_right = np.searchsorted(ordered, edges[1:], side="right")
    target = q * n
    utility = -np.maximum(
        np.maximum(below_left - target, target - below_right), 0.0
    )

    logits = 0.5 * eps * utility
    logits -= logits.max()
    weights = np.exp(logits)
    cumulative = np.cumsum(weights)
    draw = rng.uniform() * cumulative[-1]
    idx = int(np.searchsorted(cumulative, draw, side="left"))
    idx = min(idx, m - 1)

    return ReleaseValue(
        kind="quantile",
        value=float(midpoints[idx]),
        epsilon_spent=eps,
        delta_spent=0.0,
        accuracy=acc.quantile_accuracy(eps, alpha, n, spec.width, m),
        confidence_level=1.0 - alpha,
        payload={"q": q, "grid_cells": m, "n": n},
    )
