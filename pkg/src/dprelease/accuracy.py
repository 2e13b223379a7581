"""Translation between per-statistic privacy loss and a priori accuracy.

Each statistic kind has a closed-form worst-case error radius derived from
the Laplace tail P(|X| > scale * ln(1/p)) = p (plus a union bound where a
release has several noisy components). The radii are conservative: the true
value lies within the radius with probability at least 1 - alpha. Every
formula here is algebraically invertible, and both directions are exposed.

Radii are in the units of the released statistic: value units for means and
quantiles, counts for histograms, and probability for the normalized CDF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import BudgetInfeasibleError, ParameterError, UnsupportedStatisticError

MEAN = "mean"
HISTOGRAM = "histogram"
CDF = "cdf"
QUANTILE = "quantile"

STATISTIC_KINDS = (MEAN, HISTOGRAM, CDF, QUANTILE)

DEFAULT_EPSILON_CEILING = 1e6


@dataclass(frozen=True)
class AccuracySpec:
    """Aux data the accuracy formulas need besides (eps, alpha).

    n and width describe the variable; the remaining fields are the
    kind-specific shape parameters (bin count, CDF grid size, quantile
    grid cells).
    """

    kind: str
    n: int
    width: float = 1.0
    n_bins: int = 10
    grid_size: int = 64
    grid_cells: int = 1024

    def __post_init__(self) -> None:
        if self.kind not in STATISTIC_KINDS:
            raise UnsupportedStatisticError(f"unknown statistic kind {self.kind!r}")
        if self.n < 1:
            raise ParameterError("n must be >= 1")
        if self.kind != HISTOGRAM and not self.width > 0:
            raise ParameterError("range width must be positive")


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must be in (0, 1), got {alpha}")


def _check_eps(eps: float) -> None:
    if not eps > 0.0 or not math.isfinite(eps):
        raise ParameterError(f"epsilon must be positive and finite, got {eps}")


def mean_accuracy(eps: float, alpha: float, n: int, width: float) -> float:
    """Laplace tail radius for a clamped mean: (b-a) ln(1/alpha) / (n eps)."""
    _check_eps(eps)
    _check_alpha(alpha)
    return width * math.log(1.0 / alpha) / (n * eps)


def mean_epsilon(t: float, alpha: float, n: int, width: float) -> float:
    _check_alpha(alpha)
    return width * math.log(1.0 / alpha) / (n * t)


def histogram_accuracy(eps: float, alpha: float, n_bins: int) -> float:
    """Simultaneous per-bin count radius: (2/eps) ln(k/alpha), union bound."""
    _check_eps(eps)
    _check_alpha(alpha)
    return (2.0 / eps) * math.log(n_bins / alpha)


def histogram_epsilon(t: float, alpha: float, n_bins: int) -> float:
    _check_alpha(alpha)
    return (2.0 / t) * math.log(n_bins / alpha)


def _cdf_levels(grid_size: int) -> int:
    g = int(grid_size)
    if g < 2 or (g & (g - 1)) != 0:
        raise ParameterError(f"grid size must be a power of two >= 2, got {grid_size}")
    return int(math.log2(g))


def cdf_accuracy(eps: float, alpha: float, n: int, grid_size: int) -> float:
    """Per-point CDF radius in probability units.

    A grid prefix sums at most L nodes, each Laplace(2L/eps); a per-node
    tail at alpha/L and a union bound give L (2L/eps) ln(L/alpha) in
    counts, divided by n for the normalized release.
    """
    _check_eps(eps)
    _check_alpha(alpha)
    levels = _cdf_levels(grid_size)
    return levels * (2.0 * levels / eps) * math.log(levels / alpha) / n


def cdf_epsilon(t: float, alpha: float, n: int, grid_size: int) -> float:
    _check_alpha(alpha)
    levels = _cdf_levels(grid_size)
    return levels * (2.0 * levels) * math.log(levels / alpha) / (t * n)


def quantile_accuracy(
    eps: float, alpha: float, n: int, width: float, grid_cells: int
) -> float:
    """Value-unit radius for the exponential-mechanism quantile.

    The mechanism's rank error is at most 2(ln m + ln(1/alpha))/eps with
    probability 1 - alpha; ranks convert to value units at width/n (exact
    for evenly spread data, indicative otherwise), plus one grid cell of
    discretization.
    """
    _check_eps(eps)
    _check_alpha(alpha)
    rank_bound = 2.0 * (math.log(grid_cells) + math.log(1.0 / alpha)) / eps
    return rank_bound * width / n + width / grid_cells


def quantile_epsilon(
    t: float, alpha: float, n: int, width: float, grid_cells: int
) -> float:
    _check_alpha(alpha)
    cell = width / grid_cells
    if t <= cell:
        raise BudgetInfeasibleError(
            f"requested quantile accuracy {t} is below the grid resolution {cell}"
        )
    return 2.0 * (math.log(grid_cells) + math.log(1.0 / alpha)) * width / (n * (t - cell))


def epsilon_to_accuracy(kind: str, eps: float, alpha: float, spec: AccuracySpec) -> float:
    """Accuracy radius bought by eps for the given statistic kind."""
    if kind == MEAN:
        return mean_accuracy(eps, alpha, spec.n, spec.width)
    if kind == HISTOGRAM:
        return histogram_accuracy(eps, alpha, spec.n_bins)
    if kind == CDF:
        return cdf_accuracy(eps, alpha, spec.n, spec.grid_size)
    if kind == QUANTILE:
        return quantile_accuracy(eps, alpha, spec.n, spec.width, spec.grid_cells)
    raise UnsupportedStatisticError(f"unknown statistic kind {kind!r}")


def accuracy_to_epsilon(
    kind: str,
    t: float,
    alpha: float,
    spec: AccuracySpec,
    ceiling: float = DEFAULT_EPSILON_CEILING,
) -> float:
    """Exact algebraic inverse of :func:`epsilon_to_accuracy`.

    Raises BudgetInfeasibleError when the implied epsilon exceeds
    ``ceiling`` (an accuracy no budget could reasonably buy).
    """
    if not t > 0.0 or not math.isfinite(t):
        raise ParameterError(f"accuracy must be positive and finite, got {t}")
    if kind == MEAN:
        eps = mean_epsilon(t, alpha, spec.n, spec.width)
    elif kind == HISTOGRAM:
        eps = histogram_epsilon(t, alpha, spec.n_bins)
    elif kind == CDF:
        eps = cdf_epsilon(t, alpha, spec.n, spec.grid_size)
    elif kind == QUANTILE:
        eps = quantile_epsilon(t, alpha, spec.n, spec.width, spec.grid_cells)
    else:
        raise UnsupportedStatisticError(f"unknown statistic kind {kind!r}")
    if eps > ceiling:
        raise BudgetInfeasibleError(
            f"accuracy {t} for {kind} needs epsilon {eps:.3g}, above the "
            f"ceiling {ceiling:.3g}"
        )
    return eps
