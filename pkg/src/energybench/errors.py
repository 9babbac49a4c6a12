"""Exception hierarchy shared by the library, CLI, and HTTP service.

Every error carries a stable machine-readable ``code`` so the service can
return it in JSON bodies and the CLI can map it to an exit code.
"""

from __future__ import annotations

from typing import Any


class BenchError(Exception):
    """Base class for all benchmarking errors."""

    code = "internal_error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details


class SchemaError(BenchError):
    """Input does not conform to a declared schema (columns, terms, features)."""

    code = "schema_mismatch"


class RowParseError(SchemaError):
    """A cell could not be parsed against its column kind."""

    code = "row_parse_error"

    def __init__(self, message: str, line: int, **details: Any):
        super().__init__(message, line=line, **details)
        self.line = line


class EmptyInputError(BenchError):
    code = "empty_input"


class InteractionsUnsupportedError(BenchError):
    """Interaction matrices exist only for tree models."""

    code = "interactions_unsupported"


class EmptyPeerGroupError(BenchError):
    """A peer group has no surviving rows and cannot be benchmarked."""

    code = "empty_peer_group"


class DataError(BenchError):
    """Data violates an operation precondition (non-finite, non-positive, empty)."""

    code = "data_error"


class ArgumentError(BenchError):
    code = "invalid_argument"


class BudgetExceededError(BenchError):
    """Term count exceeds the 1/3-of-samples predictor budget."""

    code = "predictor_budget_exceeded"

    def __init__(self, message: str, q: int, limit: int, **details: Any):
        super().__init__(message, q=q, limit=limit, **details)
        self.q = q
        self.limit = limit


class UnderdeterminedError(BenchError):
    """Fewer samples than coefficients to estimate."""

    code = "underdetermined_system"


class ConfigurationError(BenchError):
    code = "invalid_configuration"


class CapacityError(BenchError):
    """Problem size exceeds what an exact algorithm can enumerate."""

    code = "capacity_exceeded"


class ModelFormatError(BenchError):
    code = "model_format_error"


class DomainError(BenchError):
    """A value is outside the physical/mathematical domain of an operation."""

    code = "domain_error"


class CalibrationError(BenchError):
    """Score-table calibration did not converge."""

    code = "calibration_error"


class NotFoundError(BenchError):
    code = "not_found"
