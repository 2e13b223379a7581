"""dprelease: differentially private data releases with managed budgets.

A depositor declares a schema, sets global privacy loss parameters,
selects statistics, and the library partitions the budget optimally,
computes noisy releases with a priori accuracy guarantees, and serves
public and per-user metadata documents. See README.md for the workflow.
"""

from .accuracy import AccuracySpec, accuracy_to_epsilon, epsilon_to_accuracy
from .budgeter import (
    GlobalBudget,
    LedgerStore,
    SampleInfo,
    UserLedger,
    amplify_budget,
    deduct,
    repartition,
    split_budget,
    vet_global_params,
)
from .composition import (
    BatchLedger,
    PrivacyParams,
    basic_compose,
    check_within_budget,
    filter_compose,
    max_scale_factor,
    optimal_epsilon_approx,
    optimal_epsilon_exact,
)
from .engine import Dataset, DatasetStore, execute_release, ingest_csv, verify_request
from .errors import (
    BudgetExceededError,
    BudgetInfeasibleError,
    DpReleaseError,
    EmptyDataError,
    IngestionError,
    ParameterError,
    TransformSyntaxError,
    UnsupportedStatisticError,
)
from .mechanisms import (
    ReleaseValue,
    VariableSpec,
    clamp_column,
    dp_cdf,
    dp_histogram,
    dp_mean,
    dp_quantile,
    laplace_noise,
)
from .metadata import MetadataFile, MetadataStore, ReleaseRecord, build_public_metadata
from .plan import StatisticRequest
from .randomness import RandomSource, secure_source, seeded_source
from .snapping import SnapParams, snap

__version__ = "0.1.0"

__all__ = [
    "AccuracySpec", "accuracy_to_epsilon", "epsilon_to_accuracy",
    "GlobalBudget", "LedgerStore", "SampleInfo", "UserLedger",
    "amplify_budget", "deduct", "repartition", "split_budget",
    "vet_global_params", "BatchLedger", "PrivacyParams", "basic_compose",
    "check_within_budget", "filter_compose", "max_scale_factor",
    "optimal_epsilon_approx", "optimal_epsilon_exact", "Dataset",
    "DatasetStore", "execute_release", "ingest_csv", "verify_request",
    "BudgetExceededError", "BudgetInfeasibleError", "DpReleaseError",
    "EmptyDataError", "IngestionError", "ParameterError",
    "TransformSyntaxError", "UnsupportedStatisticError", "ReleaseValue",
    "VariableSpec", "clamp_column", "dp_cdf", "dp_histogram", "dp_mean",
    "dp_quantile", "laplace_noise", "MetadataFile", "MetadataStore",
    "ReleaseRecord", "build_public_metadata", "StatisticRequest",
    "RandomSource", "secure_source", "seeded_source", "SnapParams", "snap",
]
