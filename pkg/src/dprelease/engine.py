"""The release engine: the only component that touches raw data.

Responsibilities: CSV ingestion against a declared schema, trusted
re-verification of composition for untrusted request batches, transactional
deduct-then-release execution, and handing finished records to the metadata
store. Deduction commits durably before any mechanism runs, so a crash
mid-batch wastes budget instead of leaking an unpaid release; clean
mechanism failures roll the deduction back because nothing was emitted.
"""

from __future__ import annotations

import csv
import json
import threading
import time
import uuid
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import dsl
from .budgeter import (
    DEPOSITOR_POOL,
    GlobalBudget,
    LedgerStore,
    SampleInfo,
    amplify_budget,
    split_budget,
)
from .composition import FilterDecision, PrivacyParams
from .errors import (
    BudgetExceededError,
    IngestionError,
    ParameterError,
)
from .mechanisms import (
    CATEGORICAL,
    VariableSpec,
    clamp_column,
    dp_cdf,
    dp_histogram,
    dp_mean,
    dp_quantile,
)
from .metadata import (
    PUBLIC_AUDIENCE,
    MetadataStore,
    ReleaseRecord,
)
from .plan import StatisticRequest, normalized_epsilon
from .randomness import RandomSource
from .snapping import default_snap_params, snap


@dataclass
class Dataset:
    """Typed, clamped columns in memory plus ingest warning counters."""

    dataset_id: str
    schema: dict[str, VariableSpec]
    columns: dict[str, np.ndarray | list]
    n: int
    clamped_values: int = 0
    missing_values: int = 0

    def numeric_env(self) -> dict[str, np.ndarray]:
        return {
            name: col
            for name, col in self.columns.items()
            if self.schema[name].kind != CATEGORICAL
        }


def ingest_csv(path: str | Path, schema: Sequence[VariableSpec],
               dataset_id: str = "dataset") -> Dataset:
    """Read a header-rowed CSV into clamped, typed columns.

    Every declared variable must appear in the header (undeclared extra
    columns are ignored and never read into memory as typed data). Row
    count becomes the public n on every variable spec.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        missing = [s.name for s in schema if s.name not in header]
        if missing:
            raise IngestionError(
                f"{path}: declared column(s) missing from header: {missing}"
            )
        index = {s.name: header.index(s.name) for s in schema}
        raw: dict[str, list] = {s.name: [] for s in schema}
        for row_num, row in enumerate(reader):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise IngestionError(
                    f"{path}: row {row_num} has {len(row)} fields, header has "
                    f"{len(header)}"
                )
            for name, col_idx in index.items():
                raw[name].append(row[col_idx])
    n = len(next(iter(raw.values()))) if raw else 0
    if n == 0:
        raise IngestionError(f"{path}: no data rows")

    columns: dict[str, np.ndarray | list] = {}
    clamped = 0
    dropped = 0
    sized_schema: dict[str, VariableSpec] = {}
    for spec in schema:
        spec_n = replace(spec, n=n)
        sized_schema[spec.name] = spec_n
        result = clamp_column(raw[spec.name], spec_n)
        columns[spec.name] = result.values
        clamped += result.clamped_count
        dropped += result.missing_count
    return Dataset(
        dataset_id=dataset_id,
        schema=sized_schema,
        columns=columns,
        n=n,
        clamped_values=clamped,
        missing_values=dropped,
    )


def verify_request(
    batch: Sequence[StatisticRequest],
    ledger: LedgerStore,
    pool: str,
    schema: Mapping[str, VariableSpec],
) -> tuple[bool, str, list[PrivacyParams]]:
    """Trusted recomputation of a batch's cost from its raw parameters.

    Client-supplied totals are ignored; epsilon is recomputed from the
    stated accuracy where both are present and any inconsistency rejects
    the batch. Only an ok here permits execution.
    """
    params: list[PrivacyParams] = []
    for request in batch:
        eps = normalized_epsilon(request, schema)
        if eps is None:
            return False, f"request {request.id} has neither epsilon nor accuracy", []
        if request.epsilon is not None and request.accuracy is not None:
            implied = normalized_epsilon(replace(request, epsilon=None), schema)
            if implied is not None and abs(implied - request.epsilon) > 1e-6 * max(
                1.0, request.epsilon
            ):
                return (
                    False,
                    f"request {request.id}: stated accuracy implies epsilon "
                    f"{implied:.6g}, not {request.epsilon:.6g}",
                    [],
                )
        params.append(PrivacyParams(eps, request.delta))
    decision = ledger.preview(pool, params)
    if not decision.accepted:
        return False, decision.reason, params
    return True, "", params


def _column_for(request: StatisticRequest, dataset: Dataset) -> tuple:
    """Resolve the (column, spec) a request runs on, evaluating transforms."""
    if request.variable is not None:
        if request.variable not in dataset.columns:
            raise ParameterError(
                f"request {request.id}: unknown variable {request.variable!r}"
            )
        return dataset.columns[request.variable], dataset.schema[request.variable]

    env_specs = {
        name: dsl.Interval(float(s.lower), float(s.upper))
        for name, s in dataset.schema.items()
        if s.kind != CATEGORICAL
    }
    expr = dsl.parse(request.transform, env_specs.keys())
    lo, hi = request.transform_range  # type: ignore[misc]
    declared = dsl.Interval(lo, hi)
    column = dsl.evaluate_rows(expr, dataset.numeric_env(), declared)
    spec = VariableSpec(
        name=f"transform:{request.id}",
        kind="numeric",
        lower=lo,
        upper=hi,
        n=dataset.n,
    )
    return column, spec


def _run_mechanism(request: StatisticRequest, column, spec: VariableSpec,
                   rng: RandomSource):
    eps = request.epsilon
    if eps is None:
        raise ParameterError(f"request {request.id} has no epsilon assigned")
    if request.kind == "mean":
        release = dp_mean(column, spec, eps, rng, alpha=request.alpha)
        if request.use_snapping:
            n = len(column)
            sensitivity = spec.width / n
            bound = max(abs(float(spec.lower)), abs(float(spec.upper)))
            params = default_snap_params(bound, sensitivity, eps)
            snapped = snap(float(np.mean(column)), params, eps, rng)
            release = replace(
                release,
                value=snapped,
                accuracy=release.accuracy + params.lam / 2.0,
                payload={**release.payload, "snapping": True, "lam": params.lam},
            )
        return release
    if request.kind == "histogram":
        bins = None if spec.kind == CATEGORICAL else request.n_bins
        return dp_histogram(column, spec, eps, bins, rng, alpha=request.alpha)
    if request.kind == "cdf":
        return dp_cdf(column, spec, eps, request.grid_size, rng, alpha=request.alpha)
    if request.kind == "quantile":
        return dp_quantile(column, spec, eps, request.q, rng,
                           grid_cells=request.grid_cells, alpha=request.alpha)
    raise ParameterError(f"request {request.id}: unknown kind {request.kind!r}")


def execute_release(
    dataset: Dataset,
    batch: Sequence[StatisticRequest],
    ledger: LedgerStore,
    pool: str,
    rng: RandomSource,
    metadata: MetadataStore | None = None,
    audience: str = PUBLIC_AUDIENCE,
    batch_id: str | None = None,
    user_id: str = "depositor",
    clock: Callable[[], float] = time.time,
) -> tuple[list[ReleaseRecord], FilterDecision]:
    """Verify, deduct, then compute a batch of releases.

    The deduction is committed durably before the first mechanism runs.
    Mechanism-level errors abort the whole batch and roll the deduction
    back (nothing was emitted, so the rollback is privacy-free); a hard
    crash instead leaves the budget spent.
    """
    if not batch:
        return [], FilterDecision(True, PrivacyParams(0.0, 0.0),
                                  ledger.remaining(pool))
    batch_id = batch_id or uuid.uuid4().hex
    ok, reason, params = verify_request(batch, ledger, pool, dataset.schema)
    if not ok:
        remaining = ledger.remaining(pool)
        raise BudgetExceededError(
            f"batch rejected: {reason}",
            remaining_epsilon=remaining.epsilon,
            remaining_delta=remaining.delta,
        )
    normalized = [
        r if r.epsilon is not None else replace(r, epsilon=p.epsilon)
        for r, p in zip(batch, params)
    ]
    decision = ledger.deduct(pool, user_id, batch_id, params)
    if not decision.accepted:
        raise BudgetExceededError(
            f"batch rejected: {decision.reason}",
            remaining_epsilon=decision.remaining.epsilon,
            remaining_delta=decision.remaining.delta,
        )
    try:
        records = []
        now = clock()
        for request in normalized:
            column, spec = _column_for(request, dataset)
            release = _run_mechanism(request, column, spec, rng)
            records.append(
                ReleaseRecord.from_release(
                    release,
                    request_id=request.id,
                    variable=request.variable or f"transform:{request.transform}",
                    batch_id=batch_id,
                    timestamp=now,
                    audience=audience,
                )
            )
    except Exception:
        ledger.rollback(pool, batch_id)
        raise
    if metadata is not None:
        metadata.append(records)
    return records, decision


class DatasetStore:
    """On-disk registry of ingested datasets, budgets, ledgers, metadata.

    Layout under the data directory, one subdirectory per dataset id:
    schema.json, columns.npz (+ categorical.json), budget.json,
    ledger.ndjson, metadata/.
    """

    def __init__(self, data_dir: str | Path,
                 clock: Callable[[], float] = time.time,
                 rate_limit_eps_per_hour: float | None = None) -> None:
        self.data_dir = Path(data_dir)
        self.clock = clock
        self.rate_limit = rate_limit_eps_per_hour
        self._open: dict[str, tuple[Dataset, LedgerStore, MetadataStore, GlobalBudget]] = {}
        # open() must hand every caller the same LedgerStore per dataset;
        # two stores over one file would each admit against partial state
        self._open_lock = threading.Lock()

    def _dir(self, dataset_id: str) -> Path:
        safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in dataset_id)
        return self.data_dir / safe

    def exists(self, dataset_id: str) -> bool:
        return (self._dir(dataset_id) / "schema.json").exists()

    def register(
        self,
        dataset: Dataset,
        eps_g: float,
        delta_g: float,
        sample: SampleInfo | None = None,
        analyst_epsilon: float = 0.0,
        tier: str = "",
        force: bool = False,
    ) -> GlobalBudget:
        """Persist a dataset with its budget; refuses to overwrite sans force."""
        directory = self._dir(dataset.dataset_id)
        if self.exists(dataset.dataset_id) and not force:
            raise ParameterError(
                f"dataset {dataset.dataset_id!r} already exists; pass force to "
                "replace it"
            )
        directory.mkdir(parents=True, exist_ok=True)
        sample = sample or SampleInfo()
        effective = amplify_budget(PrivacyParams(eps_g, delta_g), sample)
        if analyst_epsilon > effective.epsilon:
            raise ParameterError("analyst reservation exceeds the effective budget")
        budget = split_budget(effective, effective.epsilon - analyst_epsilon,
                              tier=tier)

        schema_doc = {
            "dataset_id": dataset.dataset_id,
            "n": dataset.n,
            "variables": [_spec_to_dict(s) for s in dataset.schema.values()],
        }
        (directory / "schema.json").write_text(
            json.dumps(schema_doc, indent=2), encoding="utf-8"
        )
        numeric = {
            name: col for name, col in dataset.columns.items()
            if isinstance(col, np.ndarray)
        }
        np.savez_compressed(directory / "columns.npz", **numeric)
        categorical = {
            name: col for name, col in dataset.columns.items()
            if not isinstance(col, np.ndarray)
        }
        (directory / "categorical.json").write_text(
            json.dumps(categorical), encoding="utf-8"
        )
        budget_doc = {
            "eps_g": eps_g,
            "delta_g": delta_g,
            "effective_epsilon": effective.epsilon,
            "effective_delta": effective.delta,
            "eps_depositor": budget.eps_depositor,
            "eps_analyst": budget.eps_analyst,
            "tier": tier,
            "sample": {
                "is_secret_sample": sample.is_secret_sample,
                "n": sample.n,
                "m": sample.m,
            },
        }
        (directory / "budget.json").write_text(
            json.dumps(budget_doc, indent=2), encoding="utf-8"
        )
        self._open.pop(dataset.dataset_id, None)
        return budget

    def open(self, dataset_id: str):
        """Load (dataset, ledger, metadata, budget); cached per process."""
        with self._open_lock:
            return self._open_locked(dataset_id)

    def _open_locked(self, dataset_id: str):
        if dataset_id in self._open:
            return self._open[dataset_id]
        directory = self._dir(dataset_id)
        if not self.exists(dataset_id):
            raise ParameterError(f"unknown dataset {dataset_id!r}")
        schema_doc = json.loads((directory / "schema.json").read_text())
        n = int(schema_doc["n"])
        schema = {
            d["name"]: _spec_from_dict(d, n) for d in schema_doc["variables"]
        }
        columns: dict[str, np.ndarray | list] = {}
        with np.load(directory / "columns.npz") as npz:
            for name in npz.files:
                columns[name] = npz[name]
        for name, col in json.loads((directory / "categorical.json").read_text()).items():
            columns[name] = col
        dataset = Dataset(dataset_id=dataset_id, schema=schema, columns=columns, n=n)

        budget_doc = json.loads((directory / "budget.json").read_text())
        effective = PrivacyParams(
            budget_doc["effective_epsilon"], budget_doc["effective_delta"]
        )
        budget = GlobalBudget(
            effective=effective,
            eps_depositor=budget_doc["eps_depositor"],
            eps_analyst=budget_doc["eps_analyst"],
            tier=budget_doc.get("tier", ""),
        )
        ledger = LedgerStore(
            directory / "ledger.ndjson",
            clock=self.clock,
            rate_limit_eps_per_hour=self.rate_limit,
        )
        ledger.configure_pool(DEPOSITOR_POOL, budget.depositor_params)
        metadata = MetadataStore(directory / "metadata", dataset_id, n, schema)
        self._open[dataset_id] = (dataset, ledger, metadata, budget)
        return self._open[dataset_id]


def _spec_to_dict(spec: VariableSpec) -> dict:
    d: dict = {"name": spec.name, "kind": spec.kind, "description": spec.description}
    if spec.kind == CATEGORICAL:
        d["categories"] = list(spec.categories or ())
    else:
        d["lower"] = float(spec.lower)
        d["upper"] = float(spec.upper)
    return d


def _spec_from_dict(d: Mapping, n: int) -> VariableSpec:
    return VariableSpec(
        name=d["name"],
        kind=d["kind"],
        lower=d.get("lower"),
        upper=d.get("upper"),
        categories=tuple(d["categories"]) if "categories" in d else None,
        n=n,
        description=d.get("description", ""),
    )


def load_schema_file(path: str | Path) -> list[VariableSpec]:
    """Schema document: {"variables": [{name, kind, lower/upper|categories}]}."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    variables = doc["variables"] if isinstance(doc, dict) else doc
    return [_spec_from_dict(d, n=max(int(d.get("n", 1)), 1)) for d in variables]
