"""Command-line driver for the depositor/analyst workflow and experiments.

Commands are thin wrappers: all privacy arithmetic lives in the library
modules. Exit codes: 0 success, 1 user error (bad inputs, infeasible
budgets), 2 internal error.
"""

from __future__ import annotations

import functools
import json
import sys
import time
import traceback
from pathlib import Path

import click

from .budgeter import SampleInfo, plan_totals, repartition, split_budget, vet_global_params
from .budgeter import DEPOSITOR_POOL, amplify_budget
from .composition import PrivacyParams
from .engine import DatasetStore, ingest_csv, load_schema_file
from .errors import DpReleaseError
from .metadata import PUBLIC_AUDIENCE
from .plan import StatisticRequest
from .randomness import secure_source, seeded_source
from .service import ServiceConfig
from . import experiments

# Flag misuse is a user error, not an internal one.
click.UsageError.exit_code = 1


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DpReleaseError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except click.ClickException:
            raise
        except Exception:
            click.echo("internal error:", err=True)
            traceback.print_exc()
            sys.exit(2)

    return wrapper


def _runtime(test_mode: bool, seed: int | None):
    """Randomness and clock for a command; seeded only in test mode."""
    if seed is not None and not test_mode:
        click.echo("warning: --seed is only honored with --test-mode; ignoring",
                   err=True)
    if test_mode:
        return seeded_source(seed if seed is not None else 0), (lambda: 0.0)
    return secure_source(), time.time


def _load_plan(path: str) -> list[StatisticRequest]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = doc["requests"] if isinstance(doc, dict) else doc
    return [StatisticRequest.from_dict(d) for d in entries]


def _vet_or_die(epsilon: float, delta: float) -> None:
    vet = vet_global_params(epsilon, delta)
    for warning in vet.warnings:
        click.echo(f"warning: {warning}", err=True)
    if not vet.ok:
        for err in vet.errors:
            click.echo(f"error: {err}", err=True)
        sys.exit(1)


@click.group()
def main() -> None:
    """Differentially private data releases with managed budgets."""


@main.command()
@click.option("--csv", "csv_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--schema", "schema_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--dataset-id", required=True)
@click.option("--data-dir", required=True, type=click.Path(file_okay=False))
@click.option("--epsilon", type=float, required=True, help="global epsilon")
@click.option("--delta", type=float, required=True, help="global delta")
@click.option("--population", type=int, default=None,
              help="population size m when the dataset is a secret sample")
@click.option("--analyst-epsilon", type=float, default=0.0,
              help="epsilon reserved for future analysts")
@click.option("--force", is_flag=True, help="replace an existing dataset id")
@guarded
def ingest(csv_path, schema_path, dataset_id, data_dir, epsilon, delta,
           population, analyst_epsilon, force) -> None:
    """Ingest a CSV against a schema and register it with a budget."""
    _vet_or_die(epsilon, delta)
    schema = load_schema_file(schema_path)
    dataset = ingest_csv(csv_path, schema, dataset_id=dataset_id)
    sample = (
        SampleInfo(is_secret_sample=True, n=dataset.n, m=population)
        if population
        else SampleInfo()
    )
    store = DatasetStore(data_dir)
    store.register(dataset, epsilon, delta, sample=sample,
                   analyst_epsilon=analyst_epsilon, force=force)
    if dataset.clamped_values:
        click.echo(f"warning: {dataset.clamped_values} values clamped into "
                   "declared ranges", err=True)
    if dataset.missing_values:
        click.echo(f"warning: {dataset.missing_values} missing values dropped",
                   err=True)
    click.echo(f"ingested {dataset_id}: n={dataset.n}, "
               f"{len(dataset.schema)} variables")


@main.command()
@click.option("--requests", "requests_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--schema", "schema_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--epsilon", type=float, required=True)
@click.option("--delta", type=float, required=True)
@click.option("--n", "n_records", type=int, default=None,
              help="public record count (defaults to the schema's n)")
@click.option("--population", type=int, default=None)
@click.option("--analyst-epsilon", type=float, default=0.0)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="write the repartitioned plan as JSON")
@guarded
def budget(requests_path, schema_path, epsilon, delta, n_records, population,
           analyst_epsilon, out_path) -> None:
    """Repartition the budget across a plan and print the result."""
    _vet_or_die(epsilon, delta)
    specs = load_schema_file(schema_path)
    if n_records is not None:
        from dataclasses import replace

        specs = [replace(s, n=n_records) for s in specs]
    schema = {s.name: s for s in specs}
    n = next(iter(schema.values())).n
    requests = _load_plan(requests_path)
    sample = (
        SampleInfo(is_secret_sample=True, n=n, m=population)
        if population
        else SampleInfo()
    )
    effective = amplify_budget(PrivacyParams(epsilon, delta), sample)
    budget_split = split_budget(effective, effective.epsilon - analyst_epsilon)
    updated = repartition(requests, budget_split, schema)
    totals = plan_totals(updated, budget_split, schema)

    click.echo(f"{'id':24} {'kind':10} {'source':20} {'epsilon':>10} {'accuracy':>12} hold")
    for r in updated:
        source = r.variable or (r.transform or "")[:20]
        click.echo(
            f"{r.id:24} {r.kind:10} {source:20} {r.epsilon:>10.6f} "
            f"{r.accuracy:>12.6g} {'*' if r.hold else ''}"
        )
    click.echo(
        f"composed epsilon {totals['epsilon_composed']:.6f} of "
        f"{totals['epsilon_budget']:.6f} available "
        f"(basic sum {totals['epsilon_basic']:.6f})"
    )
    if effective.epsilon > epsilon:
        click.echo(f"secrecy-of-the-sample boost: effective epsilon "
                   f"{effective.epsilon:.6f}")
    if out_path:
        Path(out_path).write_text(
            json.dumps({"requests": [r.to_dict() for r in updated]}, indent=2),
            encoding="utf-8",
        )
        click.echo(f"plan written to {out_path}")


@main.command()
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--dataset-id", required=True)
@click.option("--data-dir", required=True, type=click.Path(file_okay=False))
@click.option("--analyst", "analyst_user", default=None,
              help="run as this analyst against the per-user analyst budget "
                   "(default: run as the depositor)")
@click.option("--batch-id", default=None)
@click.option("--test-mode", is_flag=True,
              help="deterministic noise and timestamps (never for real data)")
@click.option("--seed", type=int, default=None)
@guarded
def release(plan_path, dataset_id, data_dir, analyst_user, batch_id,
            test_mode, seed) -> None:
    """Execute a plan: depositor releases go to the public metadata,
    analyst releases to that user's own file."""
    from .budgeter import TIER_PER_USER
    from .engine import execute_release
    from .metadata import user_audience

    rng, clock = _runtime(test_mode, seed)
    store = DatasetStore(data_dir, clock=clock)
    dataset, ledger, metadata, budget = store.open(dataset_id)
    requests = _load_plan(plan_path)
    if batch_id is None:
        batch_id = f"batch-{seed or 0}" if test_mode else None
    if analyst_user is None:
        pool, audience, user = DEPOSITOR_POOL, PUBLIC_AUDIENCE, "depositor"
    else:
        view = ledger.user_ledger(analyst_user, TIER_PER_USER,
                                  budget.analyst_params)
        pool, audience, user = view.pool, user_audience(analyst_user), analyst_user
    records, decision = execute_release(
        dataset, requests, ledger, pool, rng,
        metadata=metadata, audience=audience, batch_id=batch_id,
        user_id=user, clock=clock,
    )
    for rec in records:
        value = rec.value if isinstance(rec.value, float) else f"{len(rec.value)} values"
        click.echo(f"released {rec.statistic:10} {rec.variable:24} "
                   f"eps={rec.epsilon:.6f} accuracy={rec.accuracy:.6g} {value}")
    remaining = decision.remaining
    click.echo(f"remaining budget for {user}: epsilon={remaining.epsilon:.6f}")


@main.command()
@click.option("--experiment", type=click.Choice(["combined", "pew", "performance"]),
              required=True)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--seeds", type=int, default=None,
              help="number of seeds (combined/pew)")
@click.option("--n-rows", type=int, default=None)
@click.option("--n-vars", type=int, default=None)
@guarded
def evaluate(experiment, out_dir, seeds, n_rows, n_vars) -> None:
    """Run an evaluation experiment; writes CSV tables and figures."""
    kwargs: dict = {"out_dir": out_dir}
    if experiment == "combined":
        if seeds:
            kwargs["seeds"] = tuple(101 + i for i in range(seeds))
        if n_rows:
            kwargs["n_rows"] = n_rows
        if n_vars:
            kwargs["n_vars"] = n_vars
        summary = experiments.combined_release_experiment(**kwargs)
    elif experiment == "pew":
        if seeds:
            kwargs["n_seeds"] = seeds
        summary = experiments.pew_trend_experiment(**kwargs)
    else:
        if n_rows:
            kwargs["n_rows"] = n_rows
        if n_vars:
            kwargs["n_vars"] = n_vars
        summary = experiments.performance_experiment(**kwargs)
    for key, value in summary.items():
        click.echo(f"{key}: {value}")
    click.echo(f"tables and figures written to {out_dir}")
    if not summary.get("passed", True):
        sys.exit(1)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
@guarded
def serve(config_path) -> None:
    """Start the HTTP service."""
    from . import service

    config = ServiceConfig.load(config_path)
    service.run(config)


if __name__ == "__main__":
    main()
