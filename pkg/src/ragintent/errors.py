"""Exception types shared across the package."""

from __future__ import annotations


class RagIntentError(Exception):
    """Base class for all errors raised by this package."""


class IntentPathError(RagIntentError, ValueError):
    """A label path is malformed or does not fit its vertical."""


class CatalogError(RagIntentError, ValueError):
    """A catalog document is malformed or a label fails catalog validation."""


class ConfigError(RagIntentError, ValueError):
    """Bad configuration: unknown fields, dimension mismatch, bad URL."""


class IndexFormatError(RagIntentError):
    """An index file has the wrong magic, version or checksum."""


class EncoderMismatchError(RagIntentError, ValueError):
    """Query-time encoder differs from the one the index was built with."""


class ProviderError(RagIntentError):
    """A model provider call failed. ``retryable`` marks transient failures."""

    def __init__(self, message: str, *, retryable: bool = True, intent: str | None = None):
        super().__init__(message)
        self.retryable = retryable
        self.intent = intent


class UntokenizableError(RagIntentError, ValueError):
    """A continuation contains tokens the provider cannot score."""


class NoCandidatesError(RagIntentError):
    """Retrieval returned nothing to classify against."""
