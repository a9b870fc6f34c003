"""Exception hierarchy shared across the package."""
from __future__ import annotations


class GroundPlanError(Exception):
    """Base class for all package errors."""


class DSLError(GroundPlanError, ValueError):
    """A program line or phrase could not be parsed.

    ``line`` is set (1-based) when the error was raised while parsing a
    multi-line listing.
    """

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.message = message
        self.line = line

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        return f"line {self.line}: {self.message}"


class UnknownAction(DSLError):
    pass


class ArityMismatch(DSLError):
    pass


class MalformedSyntax(DSLError):
    pass


class NoTemplateMatch(DSLError):
    pass


class AmbiguousPhrase(DSLError):
    pass


class EmbeddingError(GroundPlanError):
    pass


class DimensionMismatch(EmbeddingError, ValueError):
    pass


class ZeroVector(EmbeddingError, ValueError):
    pass


class DuplicateKey(EmbeddingError, ValueError):
    pass


class EmptyIndex(EmbeddingError, ValueError):
    pass


class ProviderError(EmbeddingError):
    """The embedding provider failed; ``key`` is the text being embedded."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message if key is None else f"{message} (key={key!r})")
        self.key = key


class BackendError(GroundPlanError):
    pass


class BackendUnavailable(BackendError):
    pass


class MissingLogProbs(BackendError):
    pass


class EmptySample(BackendError, ValueError):
    pass


class AllEmpty(BackendError):
    pass


class EmptyCandidateList(GroundPlanError, ValueError):
    pass


class SceneError(GroundPlanError, ValueError):
    pass


class UnknownObject(GroundPlanError, LookupError):
    pass


class DatasetError(GroundPlanError, ValueError):
    pass
