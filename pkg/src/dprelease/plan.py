"""Release plans: the statistic requests that budgeting and release share.

A plan is a list of :class:`StatisticRequest`. Requests arrive from
depositors or analysts as JSON, are normalized (accuracy converted to
epsilon where needed), repartitioned by the budgeter, and finally executed
by the release engine. Plans carry no dataset values, only metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

from . import accuracy as acc
from .errors import ParameterError
from .mechanisms import CATEGORICAL, VariableSpec


@dataclass(frozen=True)
class StatisticRequest:
    """One statistic to release, with its privacy/accuracy knobs.

    Exactly one of ``variable`` (a declared column) or ``transform`` (a
    program in the row-transformation language, with its declared output
    range) identifies the data. ``epsilon`` and ``accuracy`` are two views
    of the same knob; either may be given and the budgeter keeps them
    consistent. ``hold`` pins epsilon during repartition.
    """

    id: str
    kind: str
    variable: str | None = None
    transform: str | None = None
    transform_range: tuple[float, float] | None = None
    epsilon: float | None = None
    delta: float = 0.0
    accuracy: float | None = None
    alpha: float = 0.05
    hold: bool = False
    n_bins: int = 10
    grid_size: int = 64
    grid_cells: int = 1024
    q: float = 0.5
    use_snapping: bool = False

    def __post_init__(self) -> None:
        if not self.id:
            raise ParameterError("statistic request needs an id")
        if self.kind not in acc.STATISTIC_KINDS:
            raise ParameterError(f"unknown statistic kind {self.kind!r}")
        if (self.variable is None) == (self.transform is None):
            raise ParameterError(
                f"request {self.id}: exactly one of variable/transform required"
            )
        if self.transform is not None and self.transform_range is None:
            raise ParameterError(
                f"request {self.id}: a transform needs a declared output range"
            )
        if self.transform_range is not None:
            lo, hi = self.transform_range
            if not lo < hi:
                raise ParameterError(
                    f"request {self.id}: transform range must satisfy lo < hi"
                )
        if self.epsilon is not None and not self.epsilon > 0.0:
            raise ParameterError(f"request {self.id}: epsilon must be positive")
        if self.accuracy is not None and not self.accuracy > 0.0:
            raise ParameterError(f"request {self.id}: accuracy must be positive")
        if not 0.0 <= self.delta < 1.0:
            raise ParameterError(f"request {self.id}: delta must be in [0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"request {self.id}: alpha must be in (0, 1)")

    def source_spec(self, schema: Mapping[str, VariableSpec]) -> VariableSpec:
        """The variable spec the statistic runs against.

        Transforms get a synthetic numeric spec carrying their declared
        range and the dataset's public n.
        """
        if self.variable is not None:
            if self.variable not in schema:
                raise ParameterError(
                    f"request {self.id}: unknown variable {self.variable!r}"
                )
            return schema[self.variable]
        n = dataset_size(schema)
        lo, hi = self.transform_range  # type: ignore[misc]
        return VariableSpec(
            name=f"transform:{self.id}", kind="numeric", lower=lo, upper=hi, n=n
        )

    def accuracy_spec(self, schema: Mapping[str, VariableSpec]) -> acc.AccuracySpec:
        spec = self.source_spec(schema)
        if spec.kind == CATEGORICAL:
            if self.kind != acc.HISTOGRAM:
                raise ParameterError(
                    f"request {self.id}: {self.kind} requires a numeric variable"
                )
            # declared categories plus the reserved other bin
            n_bins = len(spec.categories or ()) + 1
            width = 1.0
        else:
            n_bins = self.n_bins
            width = spec.width
        return acc.AccuracySpec(
            kind=self.kind,
            n=spec.n,
            width=width,
            n_bins=n_bins,
            grid_size=self.grid_size,
            grid_cells=self.grid_cells,
        )

    def to_dict(self) -> dict:
        d: dict = {"id": self.id, "kind": self.kind}
        if self.variable is not None:
            d["variable"] = self.variable
        if self.transform is not None:
            d["transform"] = self.transform
            d["transform_range"] = list(self.transform_range)  # type: ignore[arg-type]
        if self.epsilon is not None:
            d["epsilon"] = self.epsilon
        if self.accuracy is not None:
            d["accuracy"] = self.accuracy
        d["delta"] = self.delta
        d["alpha"] = self.alpha
        d["hold"] = self.hold
        if self.kind == acc.HISTOGRAM:
            d["n_bins"] = self.n_bins
        if self.kind == acc.CDF:
            d["grid_size"] = self.grid_size
        if self.kind == acc.QUANTILE:
            d["grid_cells"] = self.grid_cells
            d["q"] = self.q
        if self.use_snapping:
            d["use_snapping"] = True
        return d

    @staticmethod
    def from_dict(d: Mapping) -> "StatisticRequest":
        known = {
            "id", "kind", "variable", "transform", "transform_range", "epsilon",
            "delta", "accuracy", "alpha", "hold", "n_bins", "grid_size",
            "grid_cells", "q", "use_snapping",
        }
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown request fields: {sorted(unknown)}")
        kwargs = dict(d)
        if "transform_range" in kwargs and kwargs["transform_range"] is not None:
            lo, hi = kwargs["transform_range"]
            kwargs["transform_range"] = (float(lo), float(hi))
        return StatisticRequest(**kwargs)


def dataset_size(schema: Mapping[str, VariableSpec]) -> int:
    """The shared public n of a schema; all variables must agree."""
    sizes = {spec.n for spec in schema.values()}
    if not sizes:
        raise ParameterError("schema has no variables")
    if len(sizes) > 1:
        raise ParameterError(f"variables disagree on n: {sorted(sizes)}")
    return sizes.pop()


def with_epsilon(request: StatisticRequest, epsilon: float,
                 schema: Mapping[str, VariableSpec]) -> StatisticRequest:
    """Set epsilon and recompute the matching accuracy radius."""
    spec = request.accuracy_spec(schema)
    t = acc.epsilon_to_accuracy(request.kind, epsilon, request.alpha, spec)
    return replace(request, epsilon=epsilon, accuracy=t)


def normalized_epsilon(request: StatisticRequest,
                       schema: Mapping[str, VariableSpec]) -> float | None:
    """Effective epsilon of a request: explicit, or implied by accuracy."""
    if request.epsilon is not None:
        return request.epsilon
    if request.accuracy is not None:
        spec = request.accuracy_spec(schema)
        return acc.accuracy_to_epsilon(request.kind, request.accuracy,
                                       request.alpha, spec)
    return None
