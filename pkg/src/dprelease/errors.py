"""Exception types shared across the library."""

from __future__ import annotations


class DpReleaseError(Exception):
    """Base class for all library errors."""


class ParameterError(DpReleaseError):
    """A mechanism or composition parameter is out of its valid domain."""


class EmptyDataError(DpReleaseError):
    """A release was requested on an empty column."""


class IngestionError(DpReleaseError):
    """Raw data failed validation against the declared schema."""


class UnsupportedStatisticError(DpReleaseError):
    """No accuracy translation or mechanism exists for the statistic kind."""


class BudgetInfeasibleError(DpReleaseError):
    """The requested accuracy or hold configuration cannot fit the budget."""


class BudgetExceededError(DpReleaseError):
    """A deduction was rejected because it would overdraw the budget."""

    def __init__(self, message: str, remaining_epsilon: float = 0.0,
                 remaining_delta: float = 0.0) -> None:
        super().__init__(message)
        self.remaining_epsilon = remaining_epsilon
        self.remaining_delta = remaining_delta


class TransformSyntaxError(DpReleaseError):
    """A transformation program failed to parse; carries line/column."""

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column
