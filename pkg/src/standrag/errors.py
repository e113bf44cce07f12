"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""


class ParseError(EngineError):
    """Raised when a raw document cannot be parsed."""


class InputError(EngineError, ValueError):
    """Caller supplied invalid input (empty text, missing options, ...)."""


class EmptyQueryError(InputError):
    """Query analyzed to zero terms."""


class BuildError(EngineError):
    """Index construction failed (duplicate ids, empty corpus, ...)."""


class LoadError(EngineError):
    """A persisted index could not be loaded (version, checksum, dim, ...)."""


class TransportError(EngineError):
    """A remote call (embedder, reranker, LLM) failed after bounded retries."""


class ContractError(EngineError):
    """A remote service violated its wire contract (e.g. wrong vector dim)."""


class GenerationError(EngineError):
    """Answer generation failed; retrieval results are preserved on the error.

    Attributes:
        retrieved: the (Chunk, score) pairs that would have been cited, so
            callers can still surface sources when the LLM is unreachable.
    """

    def __init__(self, message: str, retrieved: list | None = None):
        super().__init__(message)
        self.retrieved = retrieved or []
