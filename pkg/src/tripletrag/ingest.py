"""Corpus loading and overlapping fixed-length token chunking."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Protocol, Sequence


class Tokenizer(Protocol):
    """Anything that can report token character spans.

    Model tokenizers can be plugged in by wrapping their offset mapping.
    """

    tokenizer_id: str

    def spans(self, text: str) -> list[tuple[int, int]]: ...


class WhitespaceTokenizer:
    tokenizer_id = "whitespace-v1"
    _token = re.compile(r"\S+")

    def spans(self, text: str) -> list[tuple[int, int]]:
        return [m.span() for m in self._token.finditer(text)]


DEFAULT_TOKENIZER = WhitespaceTokenizer()


def count_tokens(text: str, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> int:
    return len(tokenizer.spans(text))


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    body: str


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    text: str
    token_span: tuple[int, int] | None = None


def chunk_spans(n_tokens: int, chunk_size: int, overlap: int) -> list[tuple[int, int]]:
    """Token spans of the chunks of an ``n_tokens``-long document.

    Chunks start every ``chunk_size - overlap`` tokens. Chunking stops at the
    first chunk that reaches the end, so no chunk is wholly contained in
    its predecessor.
    """
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be positive, got {chunk_size}")
    if not 0 <= overlap < chunk_size:
        raise ValueError(f"overlap must satisfy 0 <= overlap < chunk_size, got {overlap} >= {chunk_size}")
    stride = chunk_size - overlap
    spans = []
    start = 0
    while start < n_tokens:
        end = min(start + chunk_size, n_tokens)
        spans.append((start, end))
        if end == n_tokens:
            break
        start += stride
    return spans


def chunk_document(
    doc: Document,
    chunk_size: int = 1200,
    overlap: int = 100,
    *,
    prepend_title: bool = True,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
) -> list[Chunk]:
    """Split ``doc.body`` into overlapping chunks with ids ``<doc_id>#<ordinal>``.

    Chunk text is the original body slice (whitespace inside the slice is
    kept), optionally prefixed by ``"<title>\\n"``.
    """
    token_spans = tokenizer.spans(doc.body)
    prefix = f"{doc.title}\n" if prepend_title and doc.title.strip() else ""
    chunks = []
    for ordinal, (start, end) in enumerate(chunk_spans(len(token_spans), chunk_size, overlap)):
        text = doc.body[token_spans[start][0] : token_spans[end - 1][1]]
        chunks.append(Chunk(f"{doc.doc_id}#{ordinal}", doc.doc_id, prefix + text, (start, end)))
    return chunks


def chunk_corpus(docs: Sequence[Document], chunk_size: int = 1200, overlap: int = 100, **kwargs) -> list[Chunk]:
    seen: set[str] = set()
    chunks = []
    for doc in docs:
        if doc.doc_id in seen:
            raise ValueError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        chunks.extend(chunk_document(doc, chunk_size, overlap, **kwargs))
    return chunks


class CorpusFormatError(ValueError):
    pass


def _read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise CorpusFormatError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, record


def is_prechunked(path: str | Path) -> bool:
    for _, record in _read_jsonl(path):
        return "chunk_id" in record
    return False


def load_corpus(path: str | Path) -> list[Document]:
    """Read ``{"doc_id", "title", "text"}`` lines."""
    docs = []
    for lineno, record in _read_jsonl(path):
        try:
            docs.append(Document(str(record["doc_id"]), str(record.get("title", "")), str(record["text"])))
        except KeyError as exc:
            raise CorpusFormatError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
    return docs


def load_chunks(path: str | Path) -> list[Chunk]:
    """Read pre-split ``{"chunk_id", "doc_id", "text"}`` lines, bypassing chunking."""
    chunks = []
    seen: set[str] = set()
    for lineno, record in _read_jsonl(path):
        try:
            chunk = Chunk(str(record["chunk_id"]), str(record["doc_id"]), str(record["text"]))
        except KeyError as exc:
            raise CorpusFormatError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
        if chunk.chunk_id in seen:
            raise CorpusFormatError(f"{path}:{lineno}: duplicate chunk_id {chunk.chunk_id!r}")
        seen.add(chunk.chunk_id)
        chunks.append(chunk)
    return chunks
