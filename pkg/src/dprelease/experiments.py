"""Evaluation experiments: combined releases, trend replication, timing.

Each experiment builds synthetic data, runs the real release pipeline, and
reports error metrics. With an output directory set, results land as CSV
tables with matplotlib figures rendered next to them.
"""

from __future__ import annotations

import csv
import tempfile
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from .budgeter import DEPOSITOR_POOL, LedgerStore, repartition, split_budget
from .composition import PrivacyParams
from .engine import Dataset, execute_release
from .mechanisms import VariableSpec, dp_mean
from .plan import StatisticRequest
from .randomness import RandomSource, seeded_source

COMBINED_NMAE_TARGET = 0.10
PEW_SLOPE_TOLERANCE = 0.25
PEW_SUCCESS_TARGET = 0.80
PERFORMANCE_BUDGET_SECONDS = 10.0

# Distribution templates cycled across synthetic census-style variables.
_TEMPLATES = (
    ("age", 18.0, 95.0),
    ("income", 0.0, 300000.0),
    ("hours", 0.0, 80.0),
    ("score", 0.0, 1.0),
    ("household", 0.0, 15.0),
)


def _template_column(kind: str, lower: float, upper: float, n: int,
                     gen: np.random.Generator) -> np.ndarray:
    if kind == "age":
        raw = gen.normal(45.0, 16.0, n)
    elif kind == "income":
        raw = gen.lognormal(10.4, 0.8, n)
    elif kind == "hours":
        raw = gen.normal(38.0, 12.0, n)
    elif kind == "score":
        raw = gen.beta(2.0, 3.0, n) * (upper - lower) + lower
    else:
        raw = gen.poisson(2.5, n).astype(np.float64)
    return np.clip(raw, lower, upper)


def make_census_like(seed: int, n_rows: int, n_vars: int) -> Dataset:
    """Synthetic microdata: numeric variables with declared ranges."""
    gen = np.random.default_rng(seed)
    schema: dict[str, VariableSpec] = {}
    columns: dict[str, np.ndarray] = {}
    for i in range(n_vars):
        kind, lower, upper = _TEMPLATES[i % len(_TEMPLATES)]
        name = f"{kind}_{i:02d}"
        schema[name] = VariableSpec(
            name=name, kind="numeric", lower=lower, upper=upper, n=n_rows
        )
        columns[name] = _template_column(kind, lower, upper, n_rows, gen)
    return Dataset(
        dataset_id=f"synthetic-{seed}", schema=schema, columns=columns, n=n_rows
    )


def build_equal_plan(dataset: Dataset, eps_g: float, delta_g: float,
                     n_bins: int = 10, grid_size: int = 64) -> list[StatisticRequest]:
    """Mean + histogram + CDF per variable, budget spread by repartition."""
    requests: list[StatisticRequest] = []
    for name in dataset.schema:
        requests.append(StatisticRequest(id=f"mean-{name}", kind="mean", variable=name))
        requests.append(
            StatisticRequest(
                id=f"hist-{name}", kind="histogram", variable=name, n_bins=n_bins
            )
        )
        requests.append(
            StatisticRequest(
                id=f"cdf-{name}", kind="cdf", variable=name, grid_size=grid_size
            )
        )
    budget = split_budget(PrivacyParams(eps_g, delta_g), eps_g)
    return repartition(requests, budget, dataset.schema)


def _release_batch(dataset: Dataset, plan: Sequence[StatisticRequest],
                   budget_target: PrivacyParams, rng: RandomSource,
                   workdir: Path):
    ledger = LedgerStore(workdir / "ledger.ndjson")
    ledger.configure_pool(DEPOSITOR_POOL, budget_target)
    records, _ = execute_release(
        dataset, plan, ledger, DEPOSITOR_POOL, rng, batch_id="experiment"
    )
    return records


def _true_value(record, dataset: Dataset):
    column = dataset.columns[record.variable]
    spec = dataset.schema[record.variable]
    if record.statistic == "mean":
        return float(np.mean(column))
    if record.statistic == "histogram":
        counts, _ = np.histogram(column, bins=np.asarray(record.payload["edges"]))
        return counts.astype(np.float64)
    if record.statistic == "cdf":
        grid = np.asarray(record.payload["grid"])
        return np.searchsorted(np.sort(column), grid, side="right") / len(column)
    raise ValueError(f"no oracle for {record.statistic}")


def _normalized_mae(record, dataset: Dataset) -> float:
    """Error scaled to the statistic's value range.

    Means divide by the declared width, histograms report the mean per-bin
    count error as a fraction of n, CDF points are already probabilities.
    """
    truth = _true_value(record, dataset)
    spec = dataset.schema[record.variable]
    if record.statistic == "mean":
        return abs(record.value - truth) / spec.width
    if record.statistic == "histogram":
        err = np.abs(np.asarray(record.value) - truth)
        return float(np.mean(err)) / dataset.n
    err = np.abs(np.asarray(record.value) - truth)
    return float(np.mean(err))


def combined_release_experiment(
    seeds: Sequence[int] = (101, 102, 103, 104, 105),
    n_rows: int = 100_000,
    n_vars: int = 50,
    eps_g: float = 0.3,
    delta_g: float = 2.0**-20,
    out_dir: str | Path | None = None,
) -> dict:
    """Release mean+histogram+CDF for every variable under one global budget.

    Reports the normalized mean absolute error per statistic kind, averaged
    over seeds; the pipeline (repartition, composition check, deduction,
    mechanisms) is the production one.
    """
    started = time.time()
    rows: list[dict] = []
    per_kind_sums: dict[str, list[float]] = {"mean": [], "histogram": [], "cdf": []}
    plan = None
    for seed in seeds:
        dataset = make_census_like(seed, n_rows, n_vars)
        if plan is None:  # same schema every seed, repartition once
            plan = build_equal_plan(dataset, eps_g, delta_g)
        rng = seeded_source(seed)
        with tempfile.TemporaryDirectory() as tmp:
            records = _release_batch(
                dataset, plan, PrivacyParams(eps_g, delta_g), rng, Path(tmp)
            )
        for record in records:
            nmae = _normalized_mae(record, dataset)
            per_kind_sums[record.statistic].append(nmae)
            rows.append(
                {
                    "seed": seed,
                    "statistic": record.statistic,
                    "variable": record.variable,
                    "epsilon": record.epsilon,
                    "nmae": nmae,
                }
            )
    per_kind = {k: float(np.mean(v)) for k, v in per_kind_sums.items()}
    overall = float(np.mean([r["nmae"] for r in rows]))
    elapsed = time.time() - started
    summary = {
        "experiment": "combined_release",
        "n_rows": n_rows,
        "n_vars": n_vars,
        "epsilon_g": eps_g,
        "delta_g": delta_g,
        "seeds": len(seeds),
        "nmae_overall": overall,
        "nmae_mean": per_kind["mean"],
        "nmae_histogram": per_kind["histogram"],
        "nmae_cdf": per_kind["cdf"],
        "elapsed_seconds": elapsed,
        "passed": overall <= COMBINED_NMAE_TARGET,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "combined_release.csv", rows)
        _write_csv(out / "combined_release_summary.csv", [summary])
        _combined_figure(per_kind, out / "combined_release.png")
    return summary


def pew_trend_experiment(
    n_seeds: int = 100,
    n_surveys: int = 34,
    eps: float = 0.01,
    out_dir: str | Path | None = None,
) -> dict:
    """Opinion-trend replication: noisy survey means still show the slope.

    Surveys with ~2000 respondents each track a linearly rising binary rate;
    each survey's mean is released at a conservative eps. The fitted slope
    over DP means should stay within 25% of the slope over the true means.
    """
    years = np.linspace(2004.0, 2017.0, n_surveys)
    p_true = 0.30 + (0.65 - 0.30) * (years - years[0]) / (years[-1] - years[0])
    spec_template = dict(kind="numeric", lower=0.0, upper=1.0)

    rows: list[dict] = []
    successes = 0
    first_seed_detail: list[dict] = []
    for seed in range(n_seeds):
        gen = np.random.default_rng(10_000 + seed)
        rng = seeded_source(20_000 + seed)
        true_means = np.empty(n_surveys)
        dp_means = np.empty(n_surveys)
        for i, p in enumerate(p_true):
            n_i = int(gen.integers(1600, 2400))
            column = (gen.random(n_i) < p).astype(np.float64)
            spec = VariableSpec(name=f"favor_{i}", n=n_i, **spec_template)
            true_means[i] = column.mean()
            dp_means[i] = dp_mean(column, spec, eps, rng).value
        slope_true = float(np.polyfit(years, true_means, 1)[0])
        slope_dp = float(np.polyfit(years, dp_means, 1)[0])
        rel_err = abs(slope_dp - slope_true) / abs(slope_true)
        ok = rel_err <= PEW_SLOPE_TOLERANCE
        successes += ok
        rows.append(
            {
                "seed": seed,
                "slope_true": slope_true,
                "slope_dp": slope_dp,
                "relative_error": rel_err,
                "within_tolerance": ok,
            }
        )
        if seed == 0:
            first_seed_detail = [
                {
                    "year": float(years[i]),
                    "true_mean": float(true_means[i]),
                    "dp_mean": float(dp_means[i]),
                }
                for i in range(n_surveys)
            ]
    success_rate = successes / n_seeds
    summary = {
        "experiment": "pew_trend",
        "n_seeds": n_seeds,
        "n_surveys": n_surveys,
        "epsilon_per_survey": eps,
        "success_rate": success_rate,
        "passed": success_rate >= PEW_SUCCESS_TARGET,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "pew_trend.csv", rows)
        _write_csv(out / "pew_trend_means.csv", first_seed_detail)
        _write_csv(out / "pew_trend_summary.csv", [summary])
        _pew_figure(first_seed_detail, out / "pew_trend.png")
    return summary


def performance_experiment(
    n_rows: int = 1_000_000,
    n_vars: int = 50,
    eps_g: float = 0.3,
    delta_g: float = 2.0**-20,
    seed: int = 7,
    out_dir: str | Path | None = None,
) -> dict:
    """Wall-clock of executing mean+histogram+CDF over every variable.

    Dataset generation and budgeting happen before the clock starts; the
    timed section is the verify -> deduct -> release execution.
    """
    dataset = make_census_like(seed, n_rows, n_vars)
    plan = build_equal_plan(dataset, eps_g, delta_g)
    rng = seeded_source(seed)
    with tempfile.TemporaryDirectory() as tmp:
        ledger = LedgerStore(Path(tmp) / "ledger.ndjson")
        ledger.configure_pool(DEPOSITOR_POOL, PrivacyParams(eps_g, delta_g))
        started = time.time()
        records, _ = execute_release(
            dataset, plan, ledger, DEPOSITOR_POOL, rng, batch_id="performance"
        )
        elapsed = time.time() - started
    summary = {
        "experiment": "performance",
        "n_rows": n_rows,
        "n_vars": n_vars,
        "n_statistics": len(records),
        "elapsed_seconds": elapsed,
        "budget_seconds": PERFORMANCE_BUDGET_SECONDS,
        "passed": elapsed < PERFORMANCE_BUDGET_SECONDS,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "performance.csv", [summary])
    return summary


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def _combined_figure(per_kind: dict, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    kinds = list(per_kind.keys())
    ax.bar(kinds, [per_kind[k] for k in kinds], color="#4878a8")
    ax.axhline(COMBINED_NMAE_TARGET, color="#b04030", linestyle="--",
               label=f"target {COMBINED_NMAE_TARGET:.0%}")
    ax.set_ylabel("normalized mean absolute error")
    ax.set_title("Combined release error by statistic")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _pew_figure(detail: list[dict], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    years = [d["year"] for d in detail]
    true_means = [d["true_mean"] for d in detail]
    dp_means = [d["dp_mean"] for d in detail]
    fit_true = np.poly1d(np.polyfit(years, true_means, 1))
    fit_dp = np.poly1d(np.polyfit(years, dp_means, 1))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.scatter(years, true_means, color="#2c5aa0", label="true survey means", s=18)
    ax.scatter(years, dp_means, color="#c0392b", label="DP survey means", s=18,
               marker="x")
    xs = np.linspace(min(years), max(years), 100)
    ax.plot(xs, fit_true(xs), color="#2c5aa0", linewidth=1)
    ax.plot(xs, fit_dp(xs), color="#c0392b", linewidth=1, linestyle="--")
    ax.set_xlabel("survey year")
    ax.set_ylabel("share in favor")
    ax.set_title("Survey trend: true vs DP released means")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
