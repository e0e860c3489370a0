"""LLM and embedding backends: a scripted mock and an HTTP chat-completions client."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import httpx
import numpy as np

from .prompts import bindings_hash

logger = logging.getLogger(__name__)


class GatewayError(RuntimeError):
    """Base class for backend failures; ``phase`` names the pipeline step."""

    def __init__(self, message: str, phase: str | None = None):
        super().__init__(f"[{phase}] {message}" if phase else message)
        self.phase = phase


class TransportError(GatewayError):
    """Network failure or 5xx/429 response that survived every retry."""


class AuthenticationError(GatewayError):
    pass


class ContextLengthError(GatewayError):
    pass


class UnmatchedPromptError(GatewayError):
    pass


class EmbeddingError(GatewayError):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    template_id: str
    bindings: Mapping[str, str]
    prompt: str
    phase: str


@dataclass(frozen=True)
class RawCompletion:
    text: str
    input_tokens: int | None = None
    output_tokens: int | None = None


class Backend(Protocol):
    name: str

    def complete(self, request: CompletionRequest) -> RawCompletion: ...

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class HashEmbedder:
    """Feature-hashing bag-of-words embedder.

    Lower-cased word tokens are hashed (BLAKE2b) into ``dim`` buckets and
    counted. Texts sharing words get positive cosine similarity; the output
    is identical on every platform.
    """

    _word = re.compile(r"\w+")

    def __init__(self, dim: int = 512):
        self.dim = dim

    def bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dim

    def tokens(self, text: str) -> list[str]:
        return self._word.findall(text.lower()) or [text]

    def __call__(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for token in self.tokens(text):
                out[row, self.bucket(token)] += 1.0
        return out


@dataclass
class MockBackend:
    """Replays scripted completions keyed by ``(template_id, bindings_hash)``.

    In strict mode an unknown request raises ``UnmatchedPromptError``;
    otherwise it gets an empty generation.
    """

    responses: dict[tuple[str, str], RawCompletion] = field(default_factory=dict)
    strict: bool = True
    embedder: Callable[[Sequence[str]], np.ndarray] = field(default_factory=HashEmbedder)
    name: str = "mock"

    @classmethod
    def from_records(cls, records: Sequence[Mapping[str, Any]], **kwargs) -> MockBackend:
        responses: dict[tuple[str, str], RawCompletion] = {}
        for record in records:
            key = (record["template_id"], record["bindings_hash"])
            if key in responses:
                logger.warning("duplicate transcript entry for %s; keeping the first", key)
                continue
            responses[key] = RawCompletion(
                record["response"], record.get("input_tokens"), record.get("output_tokens")
            )
        return cls(responses, **kwargs)

    @classmethod
    def from_jsonl(cls, path: str | Path, **kwargs) -> MockBackend:
        with open(path, encoding="utf-8") as fh:
            records = [json.loads(line) for line in fh if line.strip()]
        return cls.from_records(records, **kwargs)

    def complete(self, request: CompletionRequest) -> RawCompletion:
        key = (request.template_id, bindings_hash(request.template_id, request.bindings))
        try:
            return self.responses[key]
        except KeyError:
            if self.strict:
                raise UnmatchedPromptError(
                    f"no transcript entry for template {key[0]!r} hash {key[1]}", request.phase
                ) from None
            return RawCompletion("", None, 0)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return self.embedder(texts)


def transcript_record(
    template_id: str, bindings: Mapping[str, str], response: str, input_tokens: int = 0, output_tokens: int = 0
) -> dict[str, Any]:
    """One line of a mock transcript for the given request."""
    return {
        "template_id": template_id,
        "bindings_hash": bindings_hash(template_id, bindings),
        "response": response,
        "input_tokens": input_tokens,
        "output_tokens": output_tokens,
    }


class LiveBackend:
    """OpenAI-compatible ``/chat/completions`` and ``/embeddings`` client.

    Transport errors, 429 and 5xx responses are retried with exponential
    backoff; everything else surfaces immediately.
    """

    name = "live"

    def __init__(
        self,
        base_url: str,
        model: str,
        embed_model: str,
        api_key: str | None = None,
        *,
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff: float = 1.0,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.client = client or httpx.Client(base_url=base_url.rstrip("/"), headers=headers, timeout=timeout)
        self.model = model
        self.embed_model = embed_model
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.sleep = sleep

    def _post(self, path: str, payload: dict, phase: str) -> dict:
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                response = self.client.post(path, json=payload)
            except httpx.TransportError as exc:
                logger.warning("%s attempt %d failed: %s", path, attempt + 1, exc)
                last = exc
                continue
            status = response.status_code
            if status == 429 or status >= 500:
                logger.warning("%s attempt %d got HTTP %d", path, attempt + 1, status)
                last = httpx.HTTPStatusError(f"HTTP {status}", request=response.request, response=response)
                continue
            if status in (401, 403):
                raise AuthenticationError(f"HTTP {status} from {path}", phase)
            body = response.text
            if status == 413 or (status == 400 and "context" in body.lower() and "length" in body.lower()):
                raise ContextLengthError(f"HTTP {status}: prompt exceeds model context", phase)
            if status >= 400:
                raise GatewayError(f"HTTP {status} from {path}: {body[:200]}", phase)
            try:
                return response.json()
            except ValueError:
                raise GatewayError(f"non-JSON response from {path}", phase) from None
        raise TransportError(f"{path} failed after {self.max_attempts} attempts: {last}", phase)

    def complete(self, request: CompletionRequest) -> RawCompletion:
        data = self._post(
            "/chat/completions",
            {
                "model": self.model,
                "messages": [{"role": "user", "content": request.prompt}],
                "temperature": 0,
            },
            request.phase,
        )
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError):
            raise GatewayError("malformed chat-completion response", request.phase) from None
        usage = data.get("usage") or {}
        return RawCompletion(text, usage.get("prompt_tokens"), usage.get("completion_tokens"))

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        data = self._post("/embeddings", {"model": self.embed_model, "input": list(texts)}, "embed")
        try:
            rows = sorted(data["data"], key=lambda d: d.get("index", 0))
            vectors = [row["embedding"] for row in rows]
        except (KeyError, TypeError):
            raise EmbeddingError("malformed embeddings response", "embed") from None
        if len(vectors) != len(texts):
            raise EmbeddingError(f"asked for {len(texts)} embeddings, got {len(vectors)}", "embed")
        dims = {len(v) for v in vectors}
        if len(dims) > 1:
            raise EmbeddingError(f"inconsistent embedding dimensions {sorted(dims)}", "embed")
        return np.asarray(vectors, dtype=np.float64)
