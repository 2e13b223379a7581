"""Global budget lifecycle: vetting, amplification, splitting, repartition,
and durable per-user deduction ledgers.

The depositor sets global (epsilon_g, delta_g), optionally boosts them via
secrecy of the sample, reserves a share for future analysts, and lets the
repartitioner spread the rest over the selected statistics by scaling all
unheld epsilons by the largest factor that still fits under optimal
composition. Deductions at release time go through an append-only ledger
file so a crash can lose utility (budget deducted, nothing released) but
never privacy.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from . import plan as planmod
from .composition import (
    BatchLedger,
    FilterDecision,
    PrivacyParams,
    admission_delta,
    check_within_budget,
    compose,
    filter_compose,
    max_scale_factor,
)
from .errors import BudgetInfeasibleError, ParameterError
from .mechanisms import VariableSpec
from .plan import StatisticRequest

# Vetting thresholds. delta is the probability of arbitrary leakage and must
# be negligible; epsilon above 1 is legal but worth a warning.
DELTA_REJECT_AT = 1e-4
DELTA_WARN_ABOVE = 1e-6
EPSILON_WARN_ABOVE = 1.0

TIER_SHARED = "untrusted-shared"
TIER_PER_USER = "semi-trusted-per-user"

DEPOSITOR_POOL = "depositor"
SHARED_POOL = "shared"

RATE_WINDOW_SECONDS = 3600.0


@dataclass(frozen=True)
class VetResult:
    ok: bool
    warnings: tuple[str, ...] = ()
    errors: tuple[str, ...] = ()

    @property
    def silent(self) -> bool:
        return self.ok and not self.warnings


def vet_global_params(eps_g: float, delta_g: float) -> VetResult:
    """Sanity-check global privacy loss parameters before anything else.

    Rejects non-positive epsilon and any delta at or above 1e-4; flags a
    likely epsilon/delta swap explicitly, since a tiny epsilon next to a
    huge delta is the classic accident.
    """
    errors: list[str] = []
    warnings: list[str] = []
    if not math.isfinite(eps_g) or eps_g <= 0.0:
        errors.append(f"epsilon must be a positive number, got {eps_g}")
    if not math.isfinite(delta_g) or delta_g < 0.0:
        errors.append(f"delta must be a number in [0, 1), got {delta_g}")
    elif delta_g >= DELTA_REJECT_AT:
        msg = (
            f"delta={delta_g} is far too large: delta bounds the probability of "
            "arbitrary information leakage and should be negligible "
            f"(at most {DELTA_REJECT_AT:g}, ideally around 2^-30)"
        )
        if 0.0 < eps_g < DELTA_REJECT_AT:
            msg += "; epsilon and delta appear to be swapped"
        errors.append(msg)
    elif delta_g > DELTA_WARN_ABOVE:
        warnings.append(
            f"delta={delta_g} is larger than recommended; prefer {DELTA_WARN_ABOVE:g} "
            "or smaller (e.g. 2^-30)"
        )
    if eps_g > EPSILON_WARN_ABOVE:
        warnings.append(
            f"epsilon={eps_g} gives weak privacy protection; values in (0, 1] "
            "are recommended"
        )
    return VetResult(ok=not errors, warnings=tuple(warnings), errors=tuple(errors))


@dataclass(frozen=True)
class SampleInfo:
    """Whether the dataset is a confidential uniform sample of m >= n."""

    is_secret_sample: bool = False
    n: int = 1
    m: int = 1

    def __post_init__(self) -> None:
        if self.is_secret_sample:
            if self.n < 1 or self.m < self.n:
                raise ParameterError(
                    f"secret sample requires m >= n >= 1, got n={self.n}, m={self.m}"
                )


def amplify_budget(global_params: PrivacyParams, sample: SampleInfo) -> PrivacyParams:
    """Largest per-sample budget whose subsampled guarantee stays global.

    Running an (eps, delta)-DP computation on a secret uniform n-of-m
    subsample is ((e^eps - 1) n/m, delta n/m)-DP, so the per-sample budget
    can be raised to (ln(1 + eps_g m/n), delta_g m/n). When the ratio is
    close to 1 the inversion would shrink epsilon; the original budget is
    returned unchanged in that case.
    """
    if not sample.is_secret_sample:
        return global_params
    ratio = sample.m / sample.n
    eps_eff = math.log1p(global_params.epsilon * ratio)
    if eps_eff < global_params.epsilon:
        return global_params
    # cap just below 1 so the boosted budget stays a meaningful DP guarantee
    delta_eff = min(global_params.delta * ratio, 1.0 - 1e-12)
    return PrivacyParams(epsilon=eps_eff, delta=delta_eff)


@dataclass(frozen=True)
class GlobalBudget:
    """Effective budget and its depositor/analyst split.

    The analyst reservation is a plain subtraction (basic-composition safe
    and order independent); delta splits pro rata with epsilon.
    """

    effective: PrivacyParams
    eps_depositor: float
    eps_analyst: float
    tier: str = ""

    def __post_init__(self) -> None:
        if self.eps_depositor < 0 or self.eps_analyst < 0:
            raise ParameterError("budget shares must be non-negative")
        total = self.eps_depositor + self.eps_analyst
        if total > self.effective.epsilon * (1.0 + 1e-9) + 1e-12:
            raise ParameterError("shares exceed the effective budget")

    def _delta_share(self, eps_share: float) -> float:
        if self.effective.epsilon <= 0.0:
            return self.effective.delta
        return self.effective.delta * eps_share / self.effective.epsilon

    @property
    def depositor_params(self) -> PrivacyParams:
        return PrivacyParams(self.eps_depositor, self._delta_share(self.eps_depositor))

    @property
    def analyst_params(self) -> PrivacyParams:
        return PrivacyParams(self.eps_analyst, self._delta_share(self.eps_analyst))


def split_budget(effective: PrivacyParams, eps_depositor: float,
                 tier: str = "") -> GlobalBudget:
    """Reserve eps_analyst = eps_effective - eps_depositor for analysts."""
    if eps_depositor < 0.0:
        raise ParameterError("depositor share must be non-negative")
    if eps_depositor > effective.epsilon * (1.0 + 1e-9) + 1e-12:
        raise BudgetInfeasibleError(
            f"depositor share {eps_depositor} exceeds the effective budget "
            f"{effective.epsilon}"
        )
    eps_a = max(effective.epsilon - eps_depositor, 0.0)
    return GlobalBudget(effective=effective, eps_depositor=eps_depositor,
                        eps_analyst=eps_a, tier=tier)


def repartition(
    requests: Sequence[StatisticRequest],
    budget: GlobalBudget,
    schema: Mapping[str, VariableSpec],
) -> list[StatisticRequest]:
    """Scale unheld epsilons to fill the depositor share, refresh accuracies.

    Pure function of its inputs: identical calls give identical output, and
    the result is invariant to request order. Requests without an epsilon
    or accuracy get an equal seed share before scaling.

    The composition check targets the delta share the plan will actually be
    granted when it is admitted as a batch, so an untouched repartition
    output always passes release-time verification (and a fortiori fits
    under composition at the full depositor delta).
    """
    if not requests:
        return []
    share = budget.depositor_params
    target = PrivacyParams(
        share.epsilon,
        admission_delta([r.delta for r in requests], share),
    )

    epsilons: list[float] = []
    for r in requests:
        e = planmod.normalized_epsilon(r, schema)
        if e is None:
            if target.epsilon <= 0.0:
                raise BudgetInfeasibleError(
                    f"request {r.id}: no budget available to seed an epsilon"
                )
            e = target.epsilon / len(requests)
        epsilons.append(e)

    params = [PrivacyParams(e, r.delta) for e, r in zip(epsilons, requests)]
    held_mask = [r.hold for r in requests]

    held = [p for p, h in zip(params, held_mask) if h]
    if held and not check_within_budget(held, target):
        offending = [r.id for r in requests if r.hold]
        raise BudgetInfeasibleError(
            f"held statistics {offending} alone exceed the available budget "
            f"(epsilon={target.epsilon:.6g}); release a hold or loosen accuracy"
        )

    factor = max_scale_factor(params, held_mask, target)
    if abs(factor - 1.0) <= 2e-6:  # idempotency: re-running is a no-op
        factor = 1.0

    updated = []
    for r, e, h in zip(requests, epsilons, held_mask):
        updated.append(planmod.with_epsilon(r, e if h else e * factor, schema))
    return updated


def plan_totals(
    requests: Sequence[StatisticRequest],
    budget: GlobalBudget,
    schema: Mapping[str, VariableSpec],
) -> dict:
    """Composed cost of a plan against the depositor share, for display.

    The composed epsilon is computed at the delta share the plan would get
    at admission, matching what the release ledger will charge.
    """
    share = budget.depositor_params
    params = []
    for r in requests:
        e = planmod.normalized_epsilon(r, schema)
        if e is None:
            raise ParameterError(f"request {r.id} has no epsilon after repartition")
        params.append(PrivacyParams(e, r.delta))
    basic = sum(p.epsilon for p in params)
    share_delta = admission_delta([p.delta for p in params], share)
    composed = compose(params, share_delta) if params else 0.0
    return {
        "epsilon_basic": basic,
        "epsilon_composed": composed,
        "epsilon_budget": share.epsilon,
        "delta_budget": share.delta,
        "within_budget": composed
        <= share.epsilon * (1.0 + 1e-9) + 1e-12 and share_delta <= share.delta,
    }


@dataclass
class UserLedger:
    """Binding of a user to the deduction pool their tier resolves to."""

    user_id: str
    tier: str
    store: "LedgerStore"

    @property
    def pool(self) -> str:
        if self.tier == TIER_SHARED:
            return SHARED_POOL
        if self.tier == TIER_PER_USER:
            return f"user:{self.user_id}"
        raise ParameterError(f"unknown analyst tier {self.tier!r}")

    def remaining(self) -> PrivacyParams:
        return self.store.remaining(self.pool)


class LedgerStore:
    """Durable deduction ledger: one newline-delimited JSON record per event.

    Every accepted deduction is appended and fsynced before the in-memory
    state advances, so recovery after a crash replays the file and can only
    find budget spent on releases that were never produced, never the other
    way around. Rollback events void an earlier deduction when a release
    failed cleanly before any output left the engine.
    """

    def __init__(
        self,
        path: str | Path,
        clock: Callable[[], float] = time.time,
        rate_limit_eps_per_hour: float | None = None,
    ) -> None:
        self.path = Path(path)
        self._clock = clock
        self._rate_cap = rate_limit_eps_per_hour
        self._lock = threading.Lock()
        self._budgets: dict[str, PrivacyParams] = {}
        self._pools: dict[str, BatchLedger] = {}
        self._events: list[dict] = []
        # test hook: called after the file append, before the commit
        self._after_append: Callable[[dict], None] | None = None
        if self.path.exists():
            self._replay()

    def configure_pool(self, pool: str, budget: PrivacyParams) -> None:
        with self._lock:
            existing = self._budgets.get(pool)
            if existing is not None and existing != budget:
                raise ParameterError(f"pool {pool!r} already configured differently")
            if existing is None:
                self._budgets[pool] = budget
                self._pools[pool] = self._rebuild_pool(pool, budget)

    def user_ledger(self, user_id: str, tier: str,
                    analyst_budget: PrivacyParams) -> UserLedger:
        ledger = UserLedger(user_id=user_id, tier=tier, store=self)
        self.configure_pool(ledger.pool, analyst_budget)
        return ledger

    def remaining(self, pool: str) -> PrivacyParams:
        with self._lock:
            if pool not in self._pools:
                raise ParameterError(f"pool {pool!r} is not configured")
            return self._pools[pool].remaining()

    def preview(self, pool: str, batch: Sequence[PrivacyParams]) -> FilterDecision:
        """Dry-run admission check; never commits anything."""
        with self._lock:
            if pool not in self._pools:
                raise ParameterError(f"pool {pool!r} is not configured")
            decision, _ = filter_compose(self._pools[pool], batch)
            return decision

    def deduct(
        self,
        pool: str,
        user_id: str,
        batch_id: str,
        batch: Sequence[PrivacyParams],
    ) -> FilterDecision:
        """Atomic check-then-commit deduction against one pool."""
        with self._lock:
            if pool not in self._pools:
                raise ParameterError(f"pool {pool!r} is not configured")
            rate_reason = self._rate_limit_reason(user_id, batch)
            if rate_reason:
                return FilterDecision(
                    accepted=False,
                    cost=PrivacyParams(sum(p.epsilon for p in batch),
                                       sum(p.delta for p in batch)),
                    remaining=self._pools[pool].remaining(),
                    reason=rate_reason,
                )
            decision, updated = filter_compose(self._pools[pool], batch)
            if not decision.accepted:
                return decision
            event = {
                "event": "deduct",
                "pool": pool,
                "user": user_id,
                "batch_id": batch_id,
                "epsilon": decision.cost.epsilon,
                "delta": decision.cost.delta,
                "timestamp": self._clock(),
                "items": [[p.epsilon, p.delta] for p in batch],
            }
            self._append(event)
            if self._after_append is not None:
                self._after_append(event)
            self._pools[pool] = updated
            self._events.append(event)
            return decision

    def rollback(self, pool: str, batch_id: str) -> None:
        """Void a deduction whose release failed before producing output."""
        with self._lock:
            event = {
                "event": "rollback",
                "pool": pool,
                "batch_id": batch_id,
                "timestamp": self._clock(),
            }
            self._append(event)
            self._events.append(event)
            budget = self._budgets[pool]
            self._pools[pool] = self._rebuild_pool(pool, budget)

    def accepted_events(self) -> list[dict]:
        with self._lock:
            rolled = {
                (e["pool"], e["batch_id"])
                for e in self._events
                if e["event"] == "rollback"
            }
            return [
                e for e in self._events
                if e["event"] == "deduct" and (e["pool"], e["batch_id"]) not in rolled
            ]

    def _rate_limit_reason(self, user_id: str,
                           batch: Sequence[PrivacyParams]) -> str | None:
        if self._rate_cap is None:
            return None
        now = self._clock()
        recent = sum(
            e["epsilon"]
            for e in self._events
            if e["event"] == "deduct"
            and e["user"] == user_id
            and now - e["timestamp"] < RATE_WINDOW_SECONDS
        )
        requested = sum(p.epsilon for p in batch)
        if recent + requested > self._rate_cap * (1.0 + 1e-9):
            return (
                f"rate limit: {recent:.6g} epsilon already spent by {user_id!r} "
                f"in the last hour, cap is {self._rate_cap:.6g} per hour"
            )
        return None

    def _append(self, event: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        line = json.dumps(event, sort_keys=True) + "\n"
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())

    def _replay(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            self._events = [json.loads(line) for line in fh if line.strip()]
        for pool, budget in self._budgets.items():
            self._pools[pool] = self._rebuild_pool(pool, budget)

    def _rebuild_pool(self, pool: str, budget: PrivacyParams) -> BatchLedger:
        """Re-admit surviving deductions from their raw per-statistic params."""
        rolled = {
            e["batch_id"] for e in self._events
            if e["event"] == "rollback" and e["pool"] == pool
        }
        ledger = BatchLedger.create(budget)
        for e in self._events:
            if e["event"] != "deduct" or e["pool"] != pool:
                continue
            if e["batch_id"] in rolled:
                continue
            batch = [PrivacyParams(float(x), float(d)) for x, d in e["items"]]
            decision, ledger = filter_compose(ledger, batch)
            if not decision.accepted:
                raise ParameterError(
                    f"ledger replay failed: committed batch {e['batch_id']!r} no "
                    "longer fits its pool budget (corrupted ledger or budget)"
                )
        return ledger


def deduct(ledger: UserLedger, batch: Sequence[PrivacyParams],
           batch_id: str) -> FilterDecision:
    """Deduct a batch from the pool the user's tier resolves to."""
    return ledger.store.deduct(ledger.pool, ledger.user_id, batch_id, batch)
