"""Release records and the public / per-user metadata documents.

The only values that may ever leave the engine are DP releases wrapped in
:class:`ReleaseRecord`; the metadata writer enforces this with a hard type
check (defense in depth: even buggy calling code cannot serialize a raw
statistic). Public files carry the schema facts that were declared public
(names, descriptions, ranges, n) plus DP releases, nothing else. A user's
file is always the public file plus that user's own releases.

The on-disk format is versioned JSON, documented in docs/metadata-format.md.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ParameterError
from .mechanisms import CATEGORICAL, ReleaseValue, VariableSpec

FORMAT_VERSION = 1

PUBLIC_AUDIENCE = "public"


def user_audience(user_id: str) -> str:
    return f"user:{user_id}"


@dataclass(frozen=True)
class ReleaseRecord:
    """One computed DP value with full provenance."""

    record_id: str
    request_id: str
    statistic: str
    variable: str
    epsilon: float
    delta: float
    accuracy: float
    alpha: float
    value: float | tuple
    batch_id: str
    timestamp: float
    audience: str
    payload: dict = field(default_factory=dict)

    @staticmethod
    def from_release(
        release: ReleaseValue,
        request_id: str,
        variable: str,
        batch_id: str,
        timestamp: float,
        audience: str,
    ) -> "ReleaseRecord":
        if not isinstance(release, ReleaseValue):
            raise TypeError(
                f"only ReleaseValue results may become records, got "
                f"{type(release).__name__}"
            )
        return ReleaseRecord(
            record_id=f"{batch_id}/{request_id}",
            request_id=request_id,
            statistic=release.kind,
            variable=variable,
            epsilon=release.epsilon_spent,
            delta=release.delta_spent,
            accuracy=release.accuracy,
            alpha=1.0 - release.confidence_level,
            value=release.value,
            batch_id=batch_id,
            timestamp=timestamp,
            audience=audience,
            payload=dict(release.payload),
        )

    def to_dict(self) -> dict:
        value = list(self.value) if isinstance(self.value, tuple) else self.value
        return {
            "record_id": self.record_id,
            "request_id": self.request_id,
            "statistic": self.statistic,
            "variable": self.variable,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "accuracy": self.accuracy,
            "alpha": self.alpha,
            "value": value,
            "batch_id": self.batch_id,
            "timestamp": self.timestamp,
            "payload": self.payload,
        }

    @staticmethod
    def from_dict(d: Mapping, audience: str) -> "ReleaseRecord":
        value = d["value"]
        if isinstance(value, list):
            value = tuple(value)
        return ReleaseRecord(
            record_id=d["record_id"],
            request_id=d["request_id"],
            statistic=d["statistic"],
            variable=d["variable"],
            epsilon=float(d["epsilon"]),
            delta=float(d["delta"]),
            accuracy=float(d["accuracy"]),
            alpha=float(d["alpha"]),
            value=value,
            batch_id=d["batch_id"],
            timestamp=float(d["timestamp"]),
            audience=audience,
            payload=dict(d.get("payload", {})),
        )


def public_variable_entry(spec: VariableSpec) -> dict:
    """The declared, public facts about a variable; never empirical ones."""
    entry: dict = {
        "name": spec.name,
        "kind": spec.kind,
        "description": spec.description,
    }
    if spec.kind == CATEGORICAL:
        entry["categories"] = list(spec.categories or ())
    else:
        entry["lower"] = float(spec.lower)
        entry["upper"] = float(spec.upper)
    return entry


@dataclass(frozen=True)
class MetadataFile:
    """A metadata document for one audience (public or a single user)."""

    dataset_id: str
    n: int
    audience: str
    variables: tuple[dict, ...]
    releases: tuple[ReleaseRecord, ...]

    def __post_init__(self) -> None:
        for rec in self.releases:
            if not isinstance(rec, ReleaseRecord):
                raise TypeError(
                    "metadata may only contain ReleaseRecord values, got "
                    f"{type(rec).__name__}"
                )

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "dataset_id": self.dataset_id,
            "audience": self.audience,
            "n": self.n,
            "variables": list(self.variables),
            "releases": [r.to_dict() for r in self.releases],
        }


def build_public_metadata(
    dataset_id: str,
    n: int,
    schema: Mapping[str, VariableSpec],
    releases: Sequence[ReleaseRecord],
) -> MetadataFile:
    """Reduce private knowledge to the public document.

    Only declared schema facts and composition-verified DP releases go in;
    any non-record in ``releases`` is a hard failure rather than a silent
    drop.
    """
    public = []
    for rec in releases:
        if not isinstance(rec, ReleaseRecord):
            raise TypeError(
                f"refusing to publish a non-DP value of type {type(rec).__name__}"
            )
        if rec.audience == PUBLIC_AUDIENCE:
            public.append(rec)
    variables = tuple(public_variable_entry(s) for s in schema.values())
    return MetadataFile(
        dataset_id=dataset_id,
        n=n,
        audience=PUBLIC_AUDIENCE,
        variables=variables,
        releases=tuple(public),
    )


class MetadataStore:
    """Per-dataset metadata documents on disk, one writer at a time.

    The public document and each user's private increment live in separate
    files; a user's view is assembled as public + own releases at read
    time, which keeps the superset invariant true by construction.
    """

    def __init__(self, directory: str | Path, dataset_id: str, n: int,
                 schema: Mapping[str, VariableSpec]) -> None:
        self.directory = Path(directory)
        self.dataset_id = dataset_id
        self.n = n
        self.schema = dict(schema)
        self._lock = threading.Lock()
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, audience: str) -> Path:
        if audience == PUBLIC_AUDIENCE:
            return self.directory / "public.json"
        if audience.startswith("user:"):
            safe = "".join(
                c if c.isalnum() or c in "-_" else "_" for c in audience[5:]
            )
            return self.directory / f"user_{safe}.json"
        raise ParameterError(f"unknown audience {audience!r}")

    def _load_records(self, audience: str) -> list[ReleaseRecord]:
        path = self._path(audience)
        if not path.exists():
            return []
        data = json.loads(path.read_text(encoding="utf-8"))
        return [ReleaseRecord.from_dict(d, audience) for d in data["releases"]]

    def append(self, records: Iterable[ReleaseRecord]) -> None:
        """Append records to their audiences' files, grouped per audience."""
        grouped: dict[str, list[ReleaseRecord]] = {}
        for rec in records:
            if not isinstance(rec, ReleaseRecord):
                raise TypeError(
                    f"metadata writer accepts only ReleaseRecord, got "
                    f"{type(rec).__name__}"
                )
            grouped.setdefault(rec.audience, []).append(rec)
        with self._lock:
            for audience, recs in grouped.items():
                existing = self._load_records(audience)
                doc = MetadataFile(
                    dataset_id=self.dataset_id,
                    n=self.n,
                    audience=audience,
                    variables=tuple(
                        public_variable_entry(s) for s in self.schema.values()
                    ),
                    releases=tuple(existing + recs),
                )
                path = self._path(audience)
                path.write_text(
                    json.dumps(doc.to_dict(), indent=2, sort_keys=True),
                    encoding="utf-8",
                )

    def public_file(self) -> MetadataFile:
        with self._lock:
            releases = self._load_records(PUBLIC_AUDIENCE)
        return build_public_metadata(self.dataset_id, self.n, self.schema, releases)

    def user_file(self, user_id: str) -> MetadataFile:
        audience = user_audience(user_id)
        with self._lock:
            own = self._load_records(audience)
            public = self._load_records(PUBLIC_AUDIENCE)
        return MetadataFile(
            dataset_id=self.dataset_id,
            n=self.n,
            audience=audience,
            variables=tuple(
                public_variable_entry(s) for s in self.schema.values()
            ),
            releases=tuple(public + own),
        )
