"""Exception hierarchy shared by every stage of the harness."""

from __future__ import annotations


class SynthABError(Exception):
    """Base class for all harness errors."""


class ValidationError(SynthABError):
    """Input failed a precondition. The CLI maps these to exit code 2."""


class EmptyInput(ValidationError):
    pass


class MalformedInput(ValidationError):
    """Every line of a clickstream failed to parse."""

    def __init__(self, errors):
        self.errors = list(errors)
        first = self.errors[0] if self.errors else None
        detail = f" (first: line {first.lineno}: {first.message})" if first else ""
        super().__init__(f"all {len(self.errors)} lines malformed{detail}")


class ConflictingSessionOwner(ValidationError):
    pass


class TooFewRows(ValidationError):
    pass


class DegenerateK(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class EmptyRange(ValidationError):
    pass


class UnknownCluster(ValidationError):
    pass


class EmptyClusterSummary(ValidationError):
    pass


class TooFewAgents(ValidationError):
    pass


class NoCategories(ValidationError):
    pass


class NoPricedProducts(ValidationError):
    pass


class MissingNorms(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class SchemaError(ValidationError):
    pass


class DuplicateProductId(SchemaError):
    pass


class UnknownCollectionRef(SchemaError):
    pass


class NoEvaluableShops(ValidationError):
    pass


class ZeroHumanDelta(ValidationError):
    pass


class ShopMismatch(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class BackendError(SynthABError):
    """A model backend could not produce a usable answer."""


class TransportError(BackendError):
    pass


class RateLimited(TransportError):
    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class SchemaFailure(BackendError):
    """Responses kept failing schema validation after every retry."""

    def __init__(self, message: str, attempts: int, last_error: str | None = None):
        super().__init__(message)
        self.attempts = attempts
        self.last_error = last_error


# Stage-specific names for the same failure.
BackendSchemaFailure = SchemaFailure
DecisionSchemaFailure = SchemaFailure


class StageError(SynthABError):
    pass


class MissingStageInput(StageError):
    pass


class StaleManifest(StageError):
    def __init__(self, message: str, hint: str):
        super().__init__(f"{message}; {hint}")
        self.hint = hint
