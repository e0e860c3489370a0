"""LLM and embedding I/O: prompts, parsers, usage metering and backends."""

from .backends import (
    AuthenticationError,
    ContextLengthError,
    EmbeddingError,
    GatewayError,
    HashEmbedder,
    LiveBackend,
    MockBackend,
    TransportError,
    UnmatchedPromptError,
    transcript_record,
)
from .client import CompletionResult, Gateway
from .parsing import DecompositionError, parse_decomposition, parse_extraction, parse_resolution
from .prompts import EXTRACTOR_VERSION, MissingSlotError, PromptError, bindings_hash, render_prompt
from .usage import UsageEntry, UsageLedger, weighted_cost

__all__ = [
    "AuthenticationError",
    "CompletionResult",
    "ContextLengthError",
    "DecompositionError",
    "EXTRACTOR_VERSION",
    "EmbeddingError",
    "Gateway",
    "GatewayError",
    "HashEmbedder",
    "LiveBackend",
    "MissingSlotError",
    "MockBackend",
    "PromptError",
    "TransportError",
    "UnmatchedPromptError",
    "UsageEntry",
    "UsageLedger",
    "bindings_hash",
    "parse_decomposition",
    "parse_extraction",
    "parse_resolution",
    "render_prompt",
    "transcript_record",
    "weighted_cost",
]
