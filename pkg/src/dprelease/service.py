"""HTTP facade: memoryless repartition, release submission, metadata reads.

POST /repartition is a pure function of its body; nothing is consulted or
persisted server-side, so restarting the service between identical calls
cannot change a response. POST /release runs the trusted
verify -> deduct -> execute pipeline against the dataset's ledger, and the
metadata endpoints serve the public document (no credentials) or a user's
own superset of it (bearer token).

Authentication is a pluggable bearer-token table from the config file;
there is deliberately no account management here.
"""

from __future__ import annotations

import os
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import yaml
from fastapi import Body, FastAPI, Header, HTTPException

from .budgeter import (
    DEPOSITOR_POOL,
    SHARED_POOL,
    SampleInfo,
    TIER_PER_USER,
    amplify_budget,
    plan_totals,
    repartition,
    split_budget,
    vet_global_params,
)
from .composition import PrivacyParams
from .engine import execute_release
from .errors import (
    BudgetExceededError,
    BudgetInfeasibleError,
    DpReleaseError,
    ParameterError,
)
from .mechanisms import VariableSpec
from .metadata import PUBLIC_AUDIENCE, user_audience
from .plan import StatisticRequest
from .randomness import secure_source, seeded_source

ROLE_DEPOSITOR = "depositor"
ROLE_ANALYST = "analyst"


@dataclass(frozen=True)
class TokenEntry:
    user: str
    role: str


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: Path
    host: str = "127.0.0.1"
    port: int = 8000
    analyst_tier: str = TIER_PER_USER
    allow_public_spending: bool = False
    rate_limit_eps_per_hour: float | None = None
    tokens: Mapping[str, TokenEntry] = field(default_factory=dict)
    test_seed: int | None = None

    @staticmethod
    def load(path: str | Path | None = None, **overrides) -> "ServiceConfig":
        """Config file plus DPRELEASE_* environment overrides."""
        raw: dict = {}
        if path is not None:
            raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        raw.update(overrides)
        env = os.environ
        data_dir = env.get("DPRELEASE_DATA_DIR", raw.get("data_dir", "./data"))
        tokens = {
            token: TokenEntry(user=entry["user"], role=entry["role"])
            for token, entry in (raw.get("tokens") or {}).items()
        }
        return ServiceConfig(
            data_dir=Path(data_dir),
            host=env.get("DPRELEASE_HOST", raw.get("host", "127.0.0.1")),
            port=int(env.get("DPRELEASE_PORT", raw.get("port", 8000))),
            analyst_tier=raw.get("analyst_tier", TIER_PER_USER),
            allow_public_spending=bool(raw.get("allow_public_spending", False)),
            rate_limit_eps_per_hour=raw.get("rate_limit_eps_per_hour"),
            tokens=tokens,
            test_seed=raw.get("test_seed"),
        )


@dataclass(frozen=True)
class SessionContext:
    """Resolved caller identity: tier, user, and what they may touch."""

    role: str  # depositor | analyst | public
    user_id: str | None = None


def _parse_variables(doc, default_n: int) -> dict[str, VariableSpec]:
    schema: dict[str, VariableSpec] = {}
    for entry in doc:
        spec = VariableSpec(
            name=entry["name"],
            kind=entry["kind"],
            lower=entry.get("lower"),
            upper=entry.get("upper"),
            categories=tuple(entry["categories"]) if "categories" in entry else None,
            n=int(entry.get("n", default_n)),
            description=entry.get("description", ""),
        )
        schema[spec.name] = spec
    return schema


def _reject(status: int, reason: str, source: str, detail: dict | None = None):
    body = {"reason": reason, "source": source}
    if detail:
        body.update(detail)
    raise HTTPException(status_code=status, detail=body)


def create_app(config: ServiceConfig) -> FastAPI:
    from .engine import DatasetStore  # local import keeps startup cheap

    app = FastAPI(title="dprelease", version="0.1.0")
    store = DatasetStore(
        config.data_dir,
        rate_limit_eps_per_hour=config.rate_limit_eps_per_hour,
    )
    rng = (
        seeded_source(config.test_seed)
        if config.test_seed is not None
        else secure_source()
    )

    def session_from(authorization: str | None) -> SessionContext:
        if not authorization:
            return SessionContext(role="public")
        if not authorization.startswith("Bearer "):
            _reject(403, "malformed Authorization header", "auth")
        token = authorization[len("Bearer "):]
        entry = config.tokens.get(token)
        if entry is None:
            _reject(403, "unknown token", "auth")
        return SessionContext(role=entry.role, user_id=entry.user)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/repartition")
    def repartition_endpoint(payload: dict = Body(...)) -> dict:
        # Pure function of the body: the whole budgeting state arrives with
        # the request and nothing is stored afterwards.
        try:
            global_doc = payload["global"]
            eps_g = float(global_doc["epsilon"])
            delta_g = float(global_doc["delta"])
        except (KeyError, TypeError, ValueError):
            _reject(422, "body must carry global.epsilon and global.delta",
                    "repartition")
        vet = vet_global_params(eps_g, delta_g)
        if not vet.ok:
            _reject(422, "; ".join(vet.errors), "vet_global_params")
        try:
            n = int(payload.get("n", 1))
            sample_doc = payload.get("sample") or {}
            sample = SampleInfo(
                is_secret_sample=bool(sample_doc.get("is_secret_sample", False)),
                n=int(sample_doc.get("n", n)),
                m=int(sample_doc.get("m", n)),
            )
            schema = _parse_variables(payload.get("variables", []), default_n=n)
            requests = [
                StatisticRequest.from_dict(d) for d in payload.get("requests", [])
            ]
            effective = amplify_budget(PrivacyParams(eps_g, delta_g), sample)
            analyst_share = float(payload.get("analyst_epsilon", 0.0))
            budget = split_budget(effective, effective.epsilon - analyst_share)
            updated = repartition(requests, budget, schema) if requests else []
            totals = plan_totals(updated, budget, schema) if updated else {
                "epsilon_basic": 0.0,
                "epsilon_composed": 0.0,
                "epsilon_budget": budget.depositor_params.epsilon,
                "delta_budget": budget.depositor_params.delta,
                "within_budget": True,
            }
        except (ParameterError, BudgetInfeasibleError) as exc:
            _reject(422, str(exc), "repartition")
        except (TypeError, ValueError, KeyError) as exc:
            _reject(422, f"malformed body: {exc}", "repartition")
        boost = effective.epsilon / eps_g if eps_g > 0 else 1.0
        return {
            "requests": [r.to_dict() for r in updated],
            "totals": totals,
            "effective": {"epsilon": effective.epsilon, "delta": effective.delta},
            "depositor": {
                "epsilon": budget.depositor_params.epsilon,
                "delta": budget.depositor_params.delta,
            },
            "analyst": {
                "epsilon": budget.analyst_params.epsilon,
                "delta": budget.analyst_params.delta,
            },
            "sample_boost": boost,
            "warnings": list(vet.warnings),
        }

    @app.post("/release")
    def release_endpoint(
        payload: dict = Body(...),
        authorization: str | None = Header(default=None),
    ) -> dict:
        session = session_from(authorization)
        dataset_id = payload.get("dataset_id")
        if not dataset_id:
            _reject(422, "dataset_id is required", "release")
        try:
            dataset, ledger, metadata, budget = store.open(dataset_id)
        except ParameterError as exc:
            _reject(404, str(exc), "release")
        try:
            batch = [StatisticRequest.from_dict(d) for d in payload.get("batch", [])]
        except ParameterError as exc:
            _reject(422, str(exc), "release")
        except (TypeError, ValueError, KeyError) as exc:
            _reject(422, f"malformed batch: {exc}", "release")

        if session.role == ROLE_DEPOSITOR:
            pool = DEPOSITOR_POOL
            audience = PUBLIC_AUDIENCE
            user_id = session.user_id or "depositor"
        elif session.role == ROLE_ANALYST:
            user_id = session.user_id or "analyst"
            if config.analyst_tier == TIER_PER_USER:
                ledger_view = ledger.user_ledger(
                    user_id, TIER_PER_USER, budget.analyst_params
                )
                pool = ledger_view.pool
                audience = user_audience(user_id)
            else:
                ledger.configure_pool(SHARED_POOL, budget.analyst_params)
                pool = SHARED_POOL
                audience = PUBLIC_AUDIENCE  # shared-pool releases are public
        elif session.role == "public" and config.allow_public_spending:
            ledger.configure_pool(SHARED_POOL, budget.analyst_params)
            pool = SHARED_POOL
            audience = PUBLIC_AUDIENCE
            user_id = "public"
        else:
            _reject(403, f"tier {session.role!r} may not submit releases", "release")

        batch_id = payload.get("batch_id") or uuid.uuid4().hex
        try:
            records, decision = execute_release(
                dataset,
                batch,
                ledger,
                pool,
                rng,
                metadata=metadata,
                audience=audience,
                batch_id=batch_id,
                user_id=user_id,
                clock=store.clock,
            )
        except BudgetExceededError as exc:
            _reject(
                409,
                str(exc),
                "release",
                {
                    "remaining": {
                        "epsilon": exc.remaining_epsilon,
                        "delta": exc.remaining_delta,
                    }
                },
            )
        except DpReleaseError as exc:
            _reject(422, str(exc), "release")
        remaining = ledger.remaining(pool)
        return {
            "batch_id": batch_id,
            "records": [r.to_dict() for r in records],
            "remaining": {"epsilon": remaining.epsilon, "delta": remaining.delta},
        }

    @app.get("/metadata/public/{dataset_id}")
    def public_metadata(dataset_id: str) -> dict:
        try:
            _, _, metadata, _ = store.open(dataset_id)
        except ParameterError as exc:
            _reject(404, str(exc), "metadata")
        return metadata.public_file().to_dict()

    @app.get("/metadata/user/{dataset_id}")
    def user_metadata(
        dataset_id: str,
        user: str | None = None,
        authorization: str | None = Header(default=None),
    ) -> dict:
        session = session_from(authorization)
        if session.role not in (ROLE_ANALYST, ROLE_DEPOSITOR) or not session.user_id:
            _reject(403, "a user metadata file requires credentials", "metadata")
        if user is not None and user != session.user_id:
            _reject(403, "cannot read another user's metadata file", "metadata")
        try:
            _, _, metadata, _ = store.open(dataset_id)
        except ParameterError as exc:
            _reject(404, str(exc), "metadata")
        return metadata.user_file(session.user_id).to_dict()

    return app


def run(config: ServiceConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port)
