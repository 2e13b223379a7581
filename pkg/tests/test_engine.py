import json

import numpy as np
import pytest

from dprelease.budgeter import DEPOSITOR_POOL, LedgerStore
from dprelease.composition import PrivacyParams, optimal_epsilon_exact
from dprelease.engine import (
    Dataset,
    DatasetStore,
    execute_release,
    ingest_csv,
    load_schema_file,
    verify_request,
)
from dprelease.errors import (
    BudgetExceededError,
    IngestionError,
    ParameterError,
    TransformSyntaxError,
)
from dprelease.mechanisms import VariableSpec
from dprelease.metadata import (
    MetadataStore,
    PUBLIC_AUDIENCE,
    build_public_metadata,
    user_audience,
)
from dprelease.plan import StatisticRequest
from dprelease.randomness import seeded_source


def small_dataset(n=400, seed=2, sentinel=None):
    gen = np.random.default_rng(seed)
    values = np.clip(gen.normal(45, 15, n), 18.0, 95.0)
    if sentinel is not None:
        values[0] = sentinel
    schema = {
        "age": VariableSpec(name="age", kind="numeric", lower=18.0, upper=95.0, n=n),
        "income": VariableSpec(name="income", kind="numeric", lower=0.0,
                               upper=100000.0, n=n),
    }
    columns = {
        "age": values,
        "income": np.clip(gen.lognormal(10.0, 0.7, n), 0.0, 100000.0),
    }
    return Dataset(dataset_id="small", schema=schema, columns=columns, n=n)


def fresh_ledger(tmp_path, eps=1.0, delta=2.0**-20, name="ledger.ndjson"):
    ledger = LedgerStore(tmp_path / name)
    ledger.configure_pool(DEPOSITOR_POOL, PrivacyParams(eps, delta))
    return ledger


class TestIngest:
    def test_toy_demographic_file(self, demo_csv, demo_schema):
        dataset = ingest_csv(demo_csv, demo_schema, dataset_id="county")
        assert dataset.n == 1000
        assert set(dataset.columns) == {
            "age", "sex", "income", "education", "race", "married"
        }
        assert dataset.schema["age"].n == 1000
        # ages outside [18, 95] were generated on purpose
        assert dataset.clamped_values > 0
        age = dataset.columns["age"]
        assert age.min() >= 18.0 and age.max() <= 95.0
        # a few incomes are blank in the fixture
        assert dataset.missing_values > 0
        assert len(dataset.columns["income"]) < 1000

    def test_header_mismatch_names_column(self, tmp_path, demo_schema):
        path = tmp_path / "bad.csv"
        path.write_text("age,sex\n44,male\n", encoding="utf-8")
        with pytest.raises(IngestionError, match="income"):
            ingest_csv(path, demo_schema)

    def test_empty_file(self, tmp_path, demo_schema):
        path = tmp_path / "empty.csv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(IngestionError):
            ingest_csv(path, demo_schema)

    def test_type_mismatch_is_row_addressed(self, tmp_path):
        path = tmp_path / "typo.csv"
        path.write_text("x\n1.5\noops\n", encoding="utf-8")
        schema = [VariableSpec(name="x", kind="numeric", lower=0.0, upper=2.0)]
        with pytest.raises(IngestionError, match="row 1"):
            ingest_csv(path, schema)

    def test_schema_file_loader(self, demo_schema_file):
        specs = load_schema_file(demo_schema_file)
        assert [s.name for s in specs] == [
            "age", "sex", "income", "education", "race", "married"
        ]


class TestVerify:
    def test_round_trip_accepts(self, tmp_path):
        dataset = small_dataset()
        ledger = fresh_ledger(tmp_path)
        batch = [StatisticRequest(id="m", kind="mean", variable="age",
                                  epsilon=0.2)]
        ok, reason, _ = verify_request(batch, ledger, DEPOSITOR_POOL,
                                       dataset.schema)
        assert ok, reason

    def test_tampered_accuracy_rejected(self, tmp_path):
        # client claims a much better accuracy than its epsilon buys
        dataset = small_dataset()
        ledger = fresh_ledger(tmp_path)
        batch = [
            StatisticRequest(id="m", kind="mean", variable="age",
                             epsilon=0.001, accuracy=1e-6)
        ]
        ok, reason, _ = verify_request(batch, ledger, DEPOSITOR_POOL,
                                       dataset.schema)
        assert not ok and "implies epsilon" in reason

    def test_oversized_batch_rejected(self, tmp_path):
        dataset = small_dataset()
        ledger = fresh_ledger(tmp_path, eps=0.1)
        batch = [StatisticRequest(id="m", kind="mean", variable="age",
                                  epsilon=0.5)]
        ok, reason, _ = verify_request(batch, ledger, DEPOSITOR_POOL,
                                       dataset.schema)
        assert not ok

    def test_borderline_batch_accepted(self, tmp_path):
        dataset = small_dataset()
        ledger = fresh_ledger(tmp_path, eps=0.3, delta=0.0)
        batch = [StatisticRequest(id="m", kind="mean", variable="age",
                                  epsilon=0.3 - 1e-9)]
        ok, reason, _ = verify_request(batch, ledger, DEPOSITOR_POOL,
                                       dataset.schema)
        assert ok, reason


class TestExecute:
    def test_empty_batch_is_noop(self, tmp_path):
        dataset = small_dataset()
        ledger = fresh_ledger(tmp_path)
        records, decision = execute_release(
            dataset, [], ledger, DEPOSITOR_POOL, seeded_source(1)
        )
        assert records == []
        assert ledger.remaining(DEPOSITOR_POOL).epsilon == pytest.approx(1.0)

    def test_repeat_batch_gets_fresh_noise(self, tmp_path):
        dataset = small_dataset()
        ledger = fresh_ledger(tmp_path)
        rng = seeded_source(2)
        batch = [StatisticRequest(id="m", kind="mean", variable="age",
                                  epsilon=0.05)]
        first, _ = execute_release(dataset, batch, ledger, DEPOSITOR_POOL, rng,
                                   batch_id="b1")
        second, _ = execute_release(dataset, batch, ledger, DEPOSITOR_POOL, rng,
                                    batch_id="b2")
        assert first[0].value != second[0].value
        assert first[0].record_id != second[0].record_id

    def test_all_statistic_kinds_release(self, tmp_path):
        dataset = small_dataset()
        ledger = fresh_ledger(tmp_path)
        batch = [
            StatisticRequest(id="m", kind="mean", variable="age", epsilon=0.1),
            StatisticRequest(id="h", kind="histogram", variable="age",
                             epsilon=0.1, n_bins=7),
            StatisticRequest(id="c", kind="cdf", variable="age", epsilon=0.1,
                             grid_size=16),
            StatisticRequest(id="q", kind="quantile", variable="income",
                             epsilon=0.1, q=0.5),
        ]
        records, _ = execute_release(dataset, batch, ledger, DEPOSITOR_POOL,
                                     seeded_source(3), batch_id="b")
        assert [r.statistic for r in records] == [
            "mean", "histogram", "cdf", "quantile"
        ]

    def test_transform_request_releases(self, tmp_path):
        dataset = small_dataset()
        ledger = fresh_ledger(tmp_path, eps=2e6)  # near-noiseless check
        batch = [
            StatisticRequest(
                id="senior", kind="mean", transform="age >= 65",
                transform_range=(0.0, 1.0), epsilon=1e6,
            )
        ]
        records, _ = execute_release(dataset, batch, ledger, DEPOSITOR_POOL,
                                     seeded_source(4), batch_id="t")
        target = float(np.mean(dataset.columns["age"] >= 65))
        assert records[0].value == pytest.approx(target, abs=1e-3)

    def test_snapping_flag_releases_on_grid(self, tmp_path):
        dataset = small_dataset()
        ledger = fresh_ledger(tmp_path)
        batch = [
            StatisticRequest(id="m", kind="mean", variable="age", epsilon=0.5,
                             use_snapping=True)
        ]
        records, _ = execute_release(dataset, batch, ledger, DEPOSITOR_POOL,
                                     seeded_source(5), batch_id="s")
        lam = records[0].payload["lam"]
        assert records[0].value == pytest.approx(
            round(records[0].value / lam) * lam
        )

    def test_mechanism_error_rolls_back_deduction(self, tmp_path):
        dataset = small_dataset()
        ledger = fresh_ledger(tmp_path, eps=1.0)
        batch = [
            StatisticRequest(id="ok", kind="mean", variable="age", epsilon=0.1),
            StatisticRequest(id="bad", kind="mean", transform="age +",
                             transform_range=(0.0, 1.0), epsilon=0.1),
        ]
        with pytest.raises(TransformSyntaxError):
            execute_release(dataset, batch, ledger, DEPOSITOR_POOL,
                            seeded_source(6), batch_id="x")
        assert ledger.remaining(DEPOSITOR_POOL).epsilon == pytest.approx(1.0)

    def test_crash_between_deduct_and_release_keeps_deduction(self, tmp_path):
        dataset = small_dataset()
        path = tmp_path / "ledger.ndjson"
        ledger = LedgerStore(path)
        ledger.configure_pool(DEPOSITOR_POOL, PrivacyParams(1.0, 0.0))

        class Crash(BaseException):
            pass

        def boom(event):
            raise Crash()

        ledger._after_append = boom
        batch = [StatisticRequest(id="m", kind="mean", variable="age",
                                  epsilon=0.4)]
        with pytest.raises(Crash):
            execute_release(dataset, batch, ledger, DEPOSITOR_POOL,
                            seeded_source(7), batch_id="crash")
        recovered = LedgerStore(path)
        recovered.configure_pool(DEPOSITOR_POOL, PrivacyParams(1.0, 0.0))
        # budget spent, nothing released: fail-safe toward privacy
        assert recovered.remaining(DEPOSITOR_POOL).epsilon == pytest.approx(0.6)

    def test_budget_exceeded_reports_remaining(self, tmp_path):
        dataset = small_dataset()
        ledger = fresh_ledger(tmp_path, eps=0.1, delta=0.0)
        batch = [StatisticRequest(id="m", kind="mean", variable="age",
                                  epsilon=0.2)]
        with pytest.raises(BudgetExceededError) as info:
            execute_release(dataset, batch, ledger, DEPOSITOR_POOL,
                            seeded_source(8))
        assert info.value.remaining_epsilon == pytest.approx(0.1)


class TestMetadata:
    def test_zero_releases_gives_schema_only_file(self):
        dataset = small_dataset()
        doc = build_public_metadata("small", dataset.n, dataset.schema, [])
        assert doc.releases == ()
        assert {v["name"] for v in doc.variables} == {"age", "income"}

    def test_writer_rejects_non_release_values(self, tmp_path):
        store = MetadataStore(tmp_path / "meta", "small", 10,
                              small_dataset().schema)
        with pytest.raises(TypeError):
            store.append([{"value": 1.23}])
        with pytest.raises(TypeError):
            build_public_metadata("small", 10, small_dataset().schema,
                                  [{"mean": 4.5}])

    def test_user_file_is_superset_of_public(self, tmp_path):
        dataset = small_dataset()
        ledger = fresh_ledger(tmp_path)
        meta = MetadataStore(tmp_path / "meta", dataset.dataset_id, dataset.n,
                             dataset.schema)
        public_batch = [StatisticRequest(id="p", kind="mean", variable="age",
                                         epsilon=0.05)]
        execute_release(dataset, public_batch, ledger, DEPOSITOR_POOL,
                        seeded_source(9), metadata=meta,
                        audience=PUBLIC_AUDIENCE, batch_id="pub")
        user_batch = [StatisticRequest(id="u", kind="mean", variable="income",
                                       epsilon=0.05)]
        execute_release(dataset, user_batch, ledger, DEPOSITOR_POOL,
                        seeded_source(10), metadata=meta,
                        audience=user_audience("alice"), batch_id="usr")
        public_ids = {r.record_id for r in meta.public_file().releases}
        user_ids = {r.record_id for r in meta.user_file("alice").releases}
        assert public_ids < user_ids
        # another user sees only the public records
        assert {r.record_id for r in meta.user_file("bob").releases} == public_ids

    def test_no_raw_values_in_public_file(self, tmp_path):
        sentinel = 61.234567891
        dataset = small_dataset(sentinel=sentinel)
        ledger = fresh_ledger(tmp_path)
        meta = MetadataStore(tmp_path / "meta", dataset.dataset_id, dataset.n,
                             dataset.schema)
        batch = [
            StatisticRequest(id="m", kind="mean", variable="age", epsilon=0.2),
            StatisticRequest(id="h", kind="histogram", variable="age",
                             epsilon=0.2, n_bins=5),
        ]
        execute_release(dataset, batch, ledger, DEPOSITOR_POOL,
                        seeded_source(11), metadata=meta, batch_id="b")
        text = json.dumps(meta.public_file().to_dict())
        assert str(sentinel) not in text


class TestDatasetStore:
    def test_register_and_reopen(self, tmp_path, demo_csv, demo_schema):
        dataset = ingest_csv(demo_csv, demo_schema, dataset_id="county")
        store = DatasetStore(tmp_path / "data")
        budget = store.register(dataset, 0.5, 2.0**-20, analyst_epsilon=0.2)
        assert budget.eps_analyst == pytest.approx(0.2)

        fresh = DatasetStore(tmp_path / "data")
        loaded, ledger, meta, loaded_budget = fresh.open("county")
        assert loaded.n == 1000
        assert loaded_budget.eps_depositor == pytest.approx(0.3)
        assert np.array_equal(loaded.columns["age"], dataset.columns["age"])
        assert loaded.columns["sex"] == dataset.columns["sex"]

    def test_register_refuses_overwrite(self, tmp_path, demo_csv, demo_schema):
        dataset = ingest_csv(demo_csv, demo_schema, dataset_id="county")
        store = DatasetStore(tmp_path / "data")
        store.register(dataset, 0.5, 2.0**-20)
        with pytest.raises(ParameterError, match="force"):
            store.register(dataset, 0.5, 2.0**-20)
        store.register(dataset, 0.5, 2.0**-20, force=True)

    def test_replay_of_persisted_releases_within_budget(self, tmp_path,
                                                        demo_csv, demo_schema):
        dataset = ingest_csv(demo_csv, demo_schema, dataset_id="county")
        store = DatasetStore(tmp_path / "data")
        store.register(dataset, 0.5, 2.0**-20)
        loaded, ledger, meta, budget = store.open("county")
        rng = seeded_source(12)
        for i in range(4):
            batch = [
                StatisticRequest(id=f"m{i}", kind="mean", variable="age",
                                 epsilon=0.05)
            ]
            try:
                execute_release(loaded, batch, ledger, DEPOSITOR_POOL, rng,
                                metadata=meta, batch_id=f"b{i}")
            except BudgetExceededError:
                pass
        total_eps = 0.0
        total_delta = 0.0
        for event in ledger.accepted_events():
            eps_list = [e for e, _ in event["items"]]
            deltas = [d for _, d in event["items"]]
            eps_b = optimal_epsilon_exact(eps_list, deltas, event["delta"])
            total_eps += min(eps_b, sum(eps_list))
            total_delta += event["delta"]
        target = budget.depositor_params
        assert total_eps <= target.epsilon * (1 + 1e-9)
        assert total_delta <= target.delta * (1 + 1e-9)
