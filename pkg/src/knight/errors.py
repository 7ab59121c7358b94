"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class KnightError(Exception):
    """Base class for every error this package raises deliberately."""


class ConfigError(KnightError):
    """Invalid or incomplete configuration (bad values, missing env vars)."""


class GraphError(KnightError):
    """Structural graph violation: unknown node, dangling edge endpoint."""


class GatewayError(KnightError):
    """Base class for chat-backend failures."""


class AuthError(GatewayError):
    """Backend rejected the credentials; never retried."""


class RetriesExhaustedError(GatewayError):
    """Transient failures persisted past the retry budget."""


class EmptyResponseError(GatewayError):
    """Backend returned no usable text."""


class RetrievalError(KnightError):
    """Retryable retrieval failure (network, scorer adapter)."""


class PageNotFoundError(KnightError):
    """Requested source page does not exist."""


class AmbiguousTitleError(KnightError):
    """Title resolves to a disambiguation page; caller should try the next candidate."""


class ExtractionError(KnightError):
    """No parseable triple payload in a relation-extraction response."""


class GenerationRejected(KnightError):
    """A generated item failed a structural contract (parse or key placement)."""


class ValidationParseError(KnightError):
    """Critic response did not contain the five expected check lines."""


class AdapterError(KnightError):
    """An auxiliary scoring adapter (embedding, NLI, ontology, policy) failed."""


class SnapshotError(KnightError):
    """Base class for snapshot load failures."""


class SnapshotFormatError(SnapshotError):
    """Snapshot file is not valid JSON or misses required fields."""


class SnapshotVersionError(SnapshotError):
    """Snapshot schema version is not supported."""


class JsonlError(KnightError):
    """Malformed JSONL line; carries the 1-based line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class StoreError(KnightError):
    """Graph store backend failure (unreachable server, auth)."""
