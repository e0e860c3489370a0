from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..ingest import DEFAULT_TOKENIZER, Tokenizer, count_tokens
from .backends import Backend, CompletionRequest, EmbeddingError
from .prompts import render_prompt
from .usage import UsageEntry, UsageLedger


@dataclass(frozen=True)
class CompletionResult:
    text: str
    usage: UsageEntry
    latency: float


class Gateway:
    """Single entry point for every LLM and embedding call.

    Renders the named template, calls the backend, and records usage in
    the caller's ledger before the text is handed back for parsing. When
    the backend reports no token counts they are estimated with the ingest
    tokenizer and flagged as estimates.
    """

    def __init__(self, backend: Backend, tokenizer: Tokenizer = DEFAULT_TOKENIZER, dimension: int | None = None):
        self.backend = backend
        self.tokenizer = tokenizer
        self.dimension = dimension

    def complete(
        self,
        template_id: str,
        bindings: Mapping[str, str],
        *,
        phase: str | None = None,
        ledger: UsageLedger | None = None,
    ) -> CompletionResult:
        phase = phase or template_id
        prompt = render_prompt(template_id, bindings)
        start = time.perf_counter()
        raw = self.backend.complete(CompletionRequest(template_id, dict(bindings), prompt, phase))
        latency = time.perf_counter() - start
        estimated = raw.input_tokens is None or raw.output_tokens is None
        usage = UsageEntry(
            phase,
            raw.input_tokens if raw.input_tokens is not None else count_tokens(prompt, self.tokenizer),
            raw.output_tokens if raw.output_tokens is not None else count_tokens(raw.text, self.tokenizer),
            estimated,
        )
        if ledger is not None:
            ledger.record(usage)
        return CompletionResult(raw.text, usage, latency)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """L2-normalized float32 rows, one per input text, in input order."""
        if not texts:
            raise EmbeddingError("embed() needs at least one text", "embed")
        if any(not t.strip() for t in texts):
            raise EmbeddingError("cannot embed empty text", "embed")
        vectors = np.asarray(self.backend.embed(list(texts)), dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(texts):
            raise EmbeddingError(f"backend returned shape {vectors.shape} for {len(texts)} texts", "embed")
        if self.dimension is None:
            self.dimension = vectors.shape[1]
        elif vectors.shape[1] != self.dimension:
            raise EmbeddingError(f"expected dimension {self.dimension}, got {vectors.shape[1]}", "embed")
        if not np.all(np.isfinite(vectors)):
            raise EmbeddingError("non-finite embedding values", "embed")
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise EmbeddingError("zero-length embedding vector", "embed")
        return (vectors / norms).astype(np.float32)
