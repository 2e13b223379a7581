import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from dprelease.budgeter import TIER_PER_USER, TIER_SHARED
from dprelease.engine import Dataset, DatasetStore
from dprelease.mechanisms import VariableSpec
from dprelease.service import ServiceConfig, TokenEntry, create_app

SENTINEL = 61.23456789012345


def make_dataset(n=500, seed=4):
    gen = np.random.default_rng(seed)
    ages = np.clip(gen.normal(45, 15, n), 18.0, 95.0)
    ages[0] = SENTINEL  # a raw value that must never appear in responses
    schema = {
        "age": VariableSpec(name="age", kind="numeric", lower=18.0, upper=95.0, n=n),
        "income": VariableSpec(name="income", kind="numeric", lower=0.0,
                               upper=100000.0, n=n),
    }
    return Dataset(
        dataset_id="svc",
        schema=schema,
        columns={
            "age": ages,
            "income": np.clip(gen.lognormal(10.0, 0.6, n), 0.0, 100000.0),
        },
        n=n,
    )


@pytest.fixture
def service_env(tmp_path):
    store = DatasetStore(tmp_path / "data")
    store.register(make_dataset(), 0.6, 2.0**-20, analyst_epsilon=0.3)
    config = ServiceConfig(
        data_dir=tmp_path / "data",
        tokens={
            "tok-dep": TokenEntry("owner", "depositor"),
            "tok-alice": TokenEntry("alice", "analyst"),
            "tok-bob": TokenEntry("bob", "analyst"),
        },
        analyst_tier=TIER_PER_USER,
        test_seed=99,
    )
    return config


def repartition_body(requests=None, delta=2.0**-20, epsilon=0.6):
    return {
        "global": {"epsilon": epsilon, "delta": delta},
        "n": 500,
        "analyst_epsilon": 0.3,
        "variables": [
            {"name": "age", "kind": "numeric", "lower": 18.0, "upper": 95.0},
            {"name": "income", "kind": "numeric", "lower": 0.0, "upper": 100000.0},
        ],
        "requests": requests
        if requests is not None
        else [
            {"id": "m-age", "kind": "mean", "variable": "age"},
            {"id": "h-age", "kind": "histogram", "variable": "age", "n_bins": 6},
        ],
    }


class TestRepartitionEndpoint:
    def test_identical_bodies_identical_responses(self, service_env):
        client = TestClient(create_app(service_env))
        body = repartition_body()
        first = client.post("/repartition", json=body)
        second = client.post("/repartition", json=body)
        assert first.status_code == 200
        assert first.content == second.content

    def test_restart_changes_nothing(self, service_env):
        body = repartition_body()
        first = TestClient(create_app(service_env)).post("/repartition", json=body)
        second = TestClient(create_app(service_env)).post("/repartition", json=body)
        assert first.content == second.content

    def test_swapped_parameters_are_422(self, service_env):
        client = TestClient(create_app(service_env))
        body = repartition_body(delta=0.25, epsilon=1e-6)
        response = client.post("/repartition", json=body)
        assert response.status_code == 422
        assert response.json()["detail"]["source"] == "vet_global_params"

    def test_add_then_delete_restores_response(self, service_env):
        client = TestClient(create_app(service_env))
        base = repartition_body()
        original = client.post("/repartition", json=base).content
        extra = repartition_body(
            requests=base["requests"]
            + [{"id": "q", "kind": "quantile", "variable": "income", "q": 0.5}]
        )
        client.post("/repartition", json=extra)
        restored = client.post("/repartition", json=base).content
        assert restored == original

    def test_infeasible_hold_is_422(self, service_env):
        client = TestClient(create_app(service_env))
        body = repartition_body(
            requests=[
                {"id": "big", "kind": "mean", "variable": "age",
                 "epsilon": 5.0, "hold": True}
            ]
        )
        response = client.post("/repartition", json=body)
        assert response.status_code == 422

    def test_secrecy_boost_reported(self, service_env):
        client = TestClient(create_app(service_env))
        body = repartition_body()
        body["sample"] = {"is_secret_sample": True, "n": 500, "m": 600000}
        boosted = client.post("/repartition", json=body).json()
        assert boosted["sample_boost"] > 1.0
        plain = client.post("/repartition", json=repartition_body()).json()
        for b, p in zip(boosted["requests"], plain["requests"]):
            assert b["accuracy"] < p["accuracy"]


class TestReleaseEndpoint:
    def test_depositor_release_updates_public_metadata(self, service_env):
        client = TestClient(create_app(service_env))
        plan = client.post("/repartition", json=repartition_body()).json()["requests"]
        response = client.post(
            "/release",
            json={"dataset_id": "svc", "batch": plan, "batch_id": "b1"},
            headers={"Authorization": "Bearer tok-dep"},
        )
        assert response.status_code == 200
        public = client.get("/metadata/public/svc").json()
        assert {r["batch_id"] for r in public["releases"]} == {"b1"}

    def test_anonymous_release_forbidden(self, service_env):
        client = TestClient(create_app(service_env))
        response = client.post("/release", json={"dataset_id": "svc", "batch": []})
        assert response.status_code == 403

    def test_unknown_dataset_404(self, service_env):
        client = TestClient(create_app(service_env))
        response = client.post(
            "/release",
            json={"dataset_id": "nope", "batch": []},
            headers={"Authorization": "Bearer tok-dep"},
        )
        assert response.status_code == 404

    def test_analyst_over_budget_409_keeps_ledger(self, service_env):
        client = TestClient(create_app(service_env))
        batch = [
            {"id": "big", "kind": "mean", "variable": "age", "epsilon": 0.9}
        ]
        response = client.post(
            "/release",
            json={"dataset_id": "svc", "batch": batch},
            headers={"Authorization": "Bearer tok-alice"},
        )
        assert response.status_code == 409
        detail = response.json()["detail"]
        assert detail["remaining"]["epsilon"] == pytest.approx(0.3)
        ok = client.post(
            "/release",
            json={
                "dataset_id": "svc",
                "batch": [
                    {"id": "ok", "kind": "mean", "variable": "age",
                     "epsilon": 0.1}
                ],
            },
            headers={"Authorization": "Bearer tok-alice"},
        )
        assert ok.status_code == 200

    def test_analyst_release_lands_in_own_file_only(self, service_env):
        client = TestClient(create_app(service_env))
        batch = [{"id": "a1", "kind": "mean", "variable": "age", "epsilon": 0.05}]
        client.post(
            "/release",
            json={"dataset_id": "svc", "batch": batch, "batch_id": "alice-b"},
            headers={"Authorization": "Bearer tok-alice"},
        )
        alice = client.get("/metadata/user/svc",
                           headers={"Authorization": "Bearer tok-alice"}).json()
        bob = client.get("/metadata/user/svc",
                         headers={"Authorization": "Bearer tok-bob"}).json()
        public = client.get("/metadata/public/svc").json()
        alice_ids = {r["record_id"] for r in alice["releases"]}
        assert any(r["batch_id"] == "alice-b" for r in alice["releases"])
        assert not any(r["batch_id"] == "alice-b" for r in bob["releases"])
        assert {r["record_id"] for r in public["releases"]} <= alice_ids

    def test_user_cannot_read_another_users_file(self, service_env):
        client = TestClient(create_app(service_env))
        response = client.get(
            "/metadata/user/svc",
            params={"user": "bob"},
            headers={"Authorization": "Bearer tok-alice"},
        )
        assert response.status_code == 403

    def test_public_metadata_needs_no_auth(self, service_env):
        client = TestClient(create_app(service_env))
        assert client.get("/metadata/public/svc").status_code == 200

    def test_shared_pool_race_has_one_winner(self, tmp_path):
        store = DatasetStore(tmp_path / "data")
        store.register(make_dataset(), 0.6, 0.0, analyst_epsilon=0.2)
        config = ServiceConfig(
            data_dir=tmp_path / "data",
            tokens={
                "tok-alice": TokenEntry("alice", "analyst"),
                "tok-bob": TokenEntry("bob", "analyst"),
            },
            analyst_tier=TIER_SHARED,
            test_seed=7,
        )
        app = create_app(config)
        statuses = {}
        barrier = threading.Barrier(2)

        def submit(name, token):
            client = TestClient(app)
            batch = [
                {"id": f"{name}-m", "kind": "mean", "variable": "age",
                 "epsilon": 0.15}
            ]
            barrier.wait()
            response = client.post(
                "/release",
                json={"dataset_id": "svc", "batch": batch},
                headers={"Authorization": f"Bearer {token}"},
            )
            statuses[name] = response.status_code

        threads = [
            threading.Thread(target=submit, args=("alice", "tok-alice")),
            threading.Thread(target=submit, args=("bob", "tok-bob")),
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(statuses.values()) == [200, 409]


class TestNoRawDataLeaks:
    def test_sentinel_absent_from_all_responses(self, service_env):
        client = TestClient(create_app(service_env))
        plan = client.post("/repartition", json=repartition_body()).json()["requests"]
        responses = [
            client.post("/repartition", json=repartition_body()),
            client.post(
                "/release",
                json={"dataset_id": "svc", "batch": plan, "batch_id": "b"},
                headers={"Authorization": "Bearer tok-dep"},
            ),
            client.get("/metadata/public/svc"),
            client.get("/metadata/user/svc",
                       headers={"Authorization": "Bearer tok-alice"}),
        ]
        needle = f"{SENTINEL}"
        for response in responses:
            assert needle not in response.text
