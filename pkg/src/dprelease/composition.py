"""Privacy accounting: basic and optimal composition, budget checks.

Basic composition sums the per-release (epsilon_i, delta_i). The optimal
bound (Murtagh & Vadhan 2016) finds the least global epsilon_g such that

    (1 / prod_i (1 + e^eps_i)) *
    sum_{S subset [k]} max{ e^{sum_{i in S} eps_i}
                            - e^{eps_g} * e^{sum_{i not in S} eps_i}, 0 }
        <= 1 - (1 - delta_g) / prod_i (1 - delta_i)

The left side is non-increasing in eps_g, so the least value is found by
binary search; subset terms are evaluated in log space to avoid overflow.
Exact evaluation enumerates 2^k subsets and is used up to k = 20; beyond
that a grid-discretized evaluation gives a conservative upper bound within
a declared additive slack.

Adaptivity caveat: filtering adaptively chosen queries through the optimal
bound is not valid in general (Rogers et al. 2016), so :class:`BatchLedger`
applies the optimal bound only inside non-adaptive batches and combines
batch costs by basic composition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import BudgetInfeasibleError, ParameterError

EXACT_SUBSET_LIMIT = 20
DEFAULT_APPROX_SLACK = 0.01
SEARCH_TOL = 1e-9
# Relative slop for feasibility comparisons, absorbing binary-search drift.
FEASIBILITY_RTOL = 1e-9

# Half of a pool's delta feeds per-batch composition slack, a quantum per
# statistic, sized so ~a thousand statistics can be admitted over time.
DELTA_POOL_FRACTION = 0.5
STATISTIC_CAPACITY = 1024

_LOG_TWO = math.log(2.0)


@dataclass(frozen=True, order=True)
class PrivacyParams:
    """An (epsilon, delta) pair.

    delta may reach or exceed 1 only as the result of summing costs; such
    totals are reported as-is and treated as infeasible by budget checks.
    """

    epsilon: float
    delta: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.epsilon) or self.epsilon < 0.0:
            raise ParameterError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if not math.isfinite(self.delta) or self.delta < 0.0:
            raise ParameterError(f"delta must be finite and >= 0, got {self.delta}")

    @property
    def meaningful(self) -> bool:
        return self.delta < 1.0


def basic_compose(params: Sequence[PrivacyParams]) -> PrivacyParams:
    """Summation bound: the composition is (sum eps_i, sum delta_i)-DP."""
    if not params:
        raise ParameterError("basic_compose requires a non-empty list")
    return PrivacyParams(
        epsilon=float(sum(p.epsilon for p in params)),
        delta=float(sum(p.delta for p in params)),
    )


def _validate_instance(eps_list, delta_list) -> tuple[list[float], list[float]]:
    eps = [float(e) for e in eps_list]
    deltas = [float(d) for d in delta_list]
    if len(eps) != len(deltas):
        raise ParameterError("eps_list and delta_list must have equal length")
    for e in eps:
        if not math.isfinite(e) or e < 0.0:
            raise ParameterError(f"epsilon must be finite and >= 0, got {e}")
    for d in deltas:
        if not 0.0 <= d < 1.0:
            raise ParameterError(f"delta must be in [0, 1), got {d}")
    return eps, deltas


def delta_floor(delta_list: Sequence[float]) -> float:
    """Least achievable global delta: 1 - prod(1 - delta_i)."""
    return float(-np.expm1(sum(math.log1p(-d) for d in delta_list)))


def delta_quantum_for(budget: PrivacyParams) -> float:
    """Per-statistic composition-slack quantum carved from a pool's delta."""
    return budget.delta * DELTA_POOL_FRACTION / STATISTIC_CAPACITY


def admission_delta(delta_list: Sequence[float], budget: PrivacyParams) -> float:
    """The delta share a batch of these statistics gets when admitted.

    This is the same rule :class:`BatchLedger` applies, exposed so that
    budgeting-time feasibility checks agree with release-time admission.
    """
    return delta_floor(delta_list) + len(delta_list) * delta_quantum_for(budget)


def _log_rhs(delta_list: Sequence[float], delta_g: float) -> float:
    """log of 1 - (1-delta_g)/prod(1-delta_i); -inf at the feasibility floor."""
    log_prod = sum(math.log1p(-d) for d in delta_list)
    # rhs = 1 - exp(log(1-delta_g) - log_prod)
    inner = math.log1p(-delta_g) - log_prod
    if inner >= 0.0:
        return -math.inf
    rhs = -math.expm1(inner)
    return math.log(rhs) if rhs > 0.0 else -math.inf


def _check_feasible_delta(delta_list: Sequence[float], delta_g: float) -> None:
    if not 0.0 <= delta_g < 1.0:
        raise ParameterError(f"delta_g must be in [0, 1), got {delta_g}")
    floor = delta_floor(delta_list)
    if delta_g < floor * (1.0 - 1e-12):
        raise BudgetInfeasibleError(
            f"delta_g={delta_g} is below the feasibility floor "
            f"1 - prod(1 - delta_i) = {floor}"
        )


def _log_lhs(sums: np.ndarray, log_weights: np.ndarray, log_norm: float,
             total: float, eps_g: float) -> float:
    """log of the subset sum for a given eps_g; -inf when every term is 0.

    A subset with sum a contributes e^a - e^{eps_g + total - a}, positive
    iff a > (total + eps_g) / 2.
    """
    threshold = 0.5 * (total + eps_g)
    mask = sums > threshold
    if not np.any(mask):
        return -math.inf
    a = sums[mask]
    terms = a + np.log1p(-np.exp(eps_g + total - 2.0 * a)) + log_weights[mask]
    peak = float(np.max(terms))
    return peak + math.log(float(np.sum(np.exp(terms - peak)))) - log_norm


def _search_least_eps(sums, log_weights, log_norm, total, log_rhs) -> float:
    def satisfied(eps_g: float) -> bool:
        return _log_lhs(sums, log_weights, log_norm, total, eps_g) <= log_rhs

    if satisfied(0.0):
        return 0.0
    lo, hi = 0.0, total  # LHS(total) = 0, always satisfied
    while hi - lo > 0.5 * SEARCH_TOL:
        mid = 0.5 * (lo + hi)
        if satisfied(mid):
            hi = mid
        else:
            lo = mid
    return hi


def optimal_epsilon_exact(
    eps_list: Sequence[float],
    delta_list: Sequence[float],
    delta_g: float,
) -> float:
    """Least eps_g of the optimal composition bound, by 2^k enumeration.

    Limited to k <= 20 (about 10^6 subset terms); use
    :func:`optimal_epsilon_approx` beyond that.
    """
    eps, deltas = _validate_instance(eps_list, delta_list)
    k = len(eps)
    if k == 0:
        return 0.0
    if k > EXACT_SUBSET_LIMIT:
        raise ParameterError(
            f"exact optimal composition enumerates 2^k subsets; k={k} exceeds "
            f"{EXACT_SUBSET_LIMIT} (use optimal_epsilon_approx)"
        )
    _check_feasible_delta(deltas, delta_g)

    sums = np.zeros(1, dtype=np.float64)
    for e in eps:
        sums = np.concatenate([sums, sums + e])
    log_weights = np.zeros_like(sums)
    log_norm = float(sum(np.logaddexp(0.0, e) for e in eps))
    return _search_least_eps(sums, log_weights, log_norm, sum(eps),
                             _log_rhs(deltas, delta_g))


def _grid_weights(grid_counts: list[int]) -> tuple[np.ndarray, np.ndarray]:
    """Subset-sum multiplicities on an integer grid, in log space.

    Returns (sums_in_grid_units, log_counts). When every item lands on the
    same grid value the multiplicities are binomial coefficients; otherwise
    a knapsack-style convolution builds them in O(k * total).
    """
    k = len(grid_counts)
    zeros = grid_counts.count(0)
    nonzero = [c for c in grid_counts if c > 0]
    if nonzero and all(c == nonzero[0] for c in nonzero):
        c = nonzero[0]
        kk = len(nonzero)
        j = np.arange(kk + 1)
        log_counts = (
            math.lgamma(kk + 1)
            - np.array([math.lgamma(i + 1) + math.lgamma(kk - i + 1) for i in j])
        )
        return j * c, log_counts + zeros * _LOG_TWO

    total = sum(grid_counts)
    logn = np.full(total + 1, -np.inf)
    logn[0] = 0.0
    top = 0
    for c in grid_counts:
        if c == 0:
            logn[: top + 1] += _LOG_TWO
            continue
        shifted = np.full(top + c + 1, -np.inf)
        shifted[c:] = logn[: top + 1]
        grown = np.full(top + c + 1, -np.inf)
        grown[: top + 1] = logn[: top + 1]
        logn = np.logaddexp(grown, shifted)
        top += c
    sums = np.arange(total + 1, dtype=np.float64)
    finite = np.isfinite(logn)
    return sums[finite], logn[finite]


def optimal_epsilon_approx(
    eps_list: Sequence[float],
    delta_list: Sequence[float],
    delta_g: float,
    slack: float = DEFAULT_APPROX_SLACK,
) -> float:
    """Upper bound on the exact optimal eps_g within additive ``slack``.

    Each eps_i is rounded up to a grid of step slack/(2k) and the bound is
    evaluated exactly on the rounded instance via dynamic programming over
    grid sums. Rounding up can only increase the least eps_g, so the result
    is a valid guarantee for the original instance, and it never exceeds
    the basic-composition sum.
    """
    if not slack > 0.0:
        raise ParameterError(f"slack must be positive, got {slack}")
    eps, deltas = _validate_instance(eps_list, delta_list)
    k = len(eps)
    if k == 0:
        return 0.0
    _check_feasible_delta(deltas, delta_g)

    basic_eps = sum(eps)
    step = slack / (2.0 * k)
    grid_counts = [int(math.ceil(e / step - 1e-12)) for e in eps]
    rounded = [c * step for c in grid_counts]

    sums_units, log_weights = _grid_weights(grid_counts)
    sums = sums_units * step
    log_norm = float(sum(np.logaddexp(0.0, e) for e in rounded))
    found = _search_least_eps(sums, log_weights, log_norm, sum(rounded),
                              _log_rhs(deltas, delta_g))
    return min(found, basic_eps)


def compose(params: Sequence[PrivacyParams], delta_g: float,
            slack: float = DEFAULT_APPROX_SLACK) -> float:
    """Optimal-composition eps_g at delta_g; exact when 2^k is affordable."""
    eps = [p.epsilon for p in params]
    deltas = [p.delta for p in params]
    if len(eps) <= EXACT_SUBSET_LIMIT:
        return optimal_epsilon_exact(eps, deltas, delta_g)
    return optimal_epsilon_approx(eps, deltas, delta_g, slack)


def check_within_budget(params: Sequence[PrivacyParams],
                        budget: PrivacyParams) -> bool:
    """True iff the optimal-composition cost fits inside ``budget``."""
    if not params:
        return True
    if not budget.meaningful:
        return False
    try:
        eps_g = compose(params, budget.delta)
    except BudgetInfeasibleError:
        return False
    return eps_g <= budget.epsilon + FEASIBILITY_RTOL * max(1.0, budget.epsilon)


def max_scale_factor(
    params: Sequence[PrivacyParams],
    held_mask: Sequence[bool],
    budget: PrivacyParams,
) -> float:
    """Largest c such that scaling every unheld eps_i by c stays in budget.

    Held entries are untouched. Found by exponential bracketing plus binary
    search to 1e-6 relative tolerance. With everything held (or no unheld
    epsilon mass to scale) the factor is 1 by definition.
    """
    params = list(params)
    held_mask = list(held_mask)
    if len(params) != len(held_mask):
        raise ParameterError("params and held_mask must have equal length")

    held = [p for p, h in zip(params, held_mask) if h]
    if held and not check_within_budget(held, budget):
        raise BudgetInfeasibleError(
            "held statistics alone exceed the global budget; release a hold "
            "or increase the budget"
        )
    unheld_eps = sum(p.epsilon for p, h in zip(params, held_mask) if not h)
    if unheld_eps == 0.0:
        return 1.0

    def scaled(c: float) -> list[PrivacyParams]:
        return [
            p if h else replace(p, epsilon=p.epsilon * c)
            for p, h in zip(params, held_mask)
        ]

    def ok(c: float) -> bool:
        return check_within_budget(scaled(c), budget)

    lo = 1.0
    if ok(1.0):
        hi = 2.0
        steps = 0
        while ok(hi):
            lo, hi = hi, hi * 2.0
            steps += 1
            if steps > 200:
                raise ParameterError("scale factor search failed to bracket")
    else:
        hi = 1.0
        lo = 0.5
        steps = 0
        while not ok(lo):
            hi, lo = lo, lo * 0.5
            steps += 1
            if steps > 200:
                raise BudgetInfeasibleError(
                    "no positive scaling of the unheld statistics fits the "
                    "budget (delta shares may already be exhausted)"
                )
    while (hi - lo) > 1e-6 * lo:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class ClosedBatch:
    """A committed batch: its member params and the collapsed cost."""

    items: tuple[PrivacyParams, ...]
    cost: PrivacyParams


@dataclass(frozen=True)
class FilterDecision:
    accepted: bool
    cost: PrivacyParams
    remaining: PrivacyParams
    reason: str = ""


@dataclass(frozen=True)
class BatchLedger:
    """Privacy filter: optimal composition inside batches, basic across.

    Each closed batch is collapsed to its optimal-composition cost at a
    delta share of (floor + count * delta_quantum); the quantum is carved
    from a configured fraction of the global delta so that slack scales
    with how many statistics a batch contains. Batch costs then add up by
    basic composition, which is a valid privacy filter for adaptively
    chosen batches.
    """

    global_params: PrivacyParams
    delta_quantum: float = 0.0
    closed: tuple[ClosedBatch, ...] = field(default_factory=tuple)

    @staticmethod
    def create(global_params: PrivacyParams) -> "BatchLedger":
        if not global_params.meaningful:
            raise ParameterError("global delta must be < 1")
        return BatchLedger(
            global_params=global_params,
            delta_quantum=delta_quantum_for(global_params),
        )

    def spent(self) -> PrivacyParams:
        eps = sum(b.cost.epsilon for b in self.closed)
        delta = sum(b.cost.delta for b in self.closed)
        return PrivacyParams(epsilon=eps, delta=delta)

    def remaining(self) -> PrivacyParams:
        used = self.spent()
        return PrivacyParams(
            epsilon=max(self.global_params.epsilon - used.epsilon, 0.0),
            delta=max(self.global_params.delta - used.delta, 0.0),
        )

    def batch_cost(self, batch: Sequence[PrivacyParams]) -> PrivacyParams:
        if not batch:
            return PrivacyParams(0.0, 0.0)
        deltas = [p.delta for p in batch]
        share = delta_floor(deltas) + len(batch) * self.delta_quantum
        if share >= 1.0:
            return PrivacyParams(epsilon=sum(p.epsilon for p in batch), delta=share)
        eps_b = compose(list(batch), share)
        return PrivacyParams(epsilon=min(eps_b, sum(p.epsilon for p in batch)),
                             delta=share)


def filter_compose(
    ledger: BatchLedger, new_batch: Sequence[PrivacyParams]
) -> tuple[FilterDecision, BatchLedger]:
    """Admit or reject a batch; on accept it closes into a new ledger.

    Rejection leaves the ledger unchanged and reports the remaining budget.
    """
    batch = tuple(new_batch)
    if not batch:
        return (
            FilterDecision(True, PrivacyParams(0.0, 0.0), ledger.remaining()),
            ledger,
        )
    cost = ledger.batch_cost(batch)
    used = ledger.spent()
    total_eps = used.epsilon + cost.epsilon
    total_delta = used.delta + cost.delta
    g = ledger.global_params
    eps_ok = total_eps <= g.epsilon + FEASIBILITY_RTOL * max(1.0, g.epsilon)
    delta_ok = total_delta <= g.delta + FEASIBILITY_RTOL * max(1e-12, g.delta)
    if eps_ok and delta_ok:
        updated = replace(ledger, closed=ledger.closed + (ClosedBatch(batch, cost),))
        return FilterDecision(True, cost, updated.remaining()), updated
    reason = (
        f"batch cost (eps={cost.epsilon:.6g}, delta={cost.delta:.3g}) exceeds "
        f"remaining budget (eps={ledger.remaining().epsilon:.6g}, "
        f"delta={ledger.remaining().delta:.3g})"
    )
    return FilterDecision(False, cost, ledger.remaining(), reason), ledger
