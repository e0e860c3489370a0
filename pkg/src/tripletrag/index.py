"""Offline indexing: extract triplets per chunk, verbalize, embed, persist.

On-disk layout of an index directory::

    meta.json           versions, dimension, counts, corpus digest, checksums
    propositions.jsonl  {"prop_id", "subject", "predicate", "object", "text", "chunk_id"}
    chunks.jsonl        {"chunk_id", "doc_id", "text"}
    embeddings.bin      u32 rows, u32 dim (little-endian), then rows*dim f32 row-major
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
import struct
import threading
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import RunConfig
from .core import Triplet, count_placeholders
from .gateway import EXTRACTOR_VERSION, Gateway, GatewayError, UsageEntry, UsageLedger, parse_extraction
from .ingest import DEFAULT_TOKENIZER, Chunk, Document, Tokenizer, chunk_corpus, count_tokens

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
_HEADER = struct.Struct("<II")


class IndexFormatError(ValueError):
    pass


class IndexVersionError(IndexFormatError):
    pass


class IndexConsistencyError(IndexFormatError):
    pass


class IndexChecksumError(IndexFormatError):
    pass


class IndexBuildError(RuntimeError):
    """Raised when a build aborts; completed work is kept in ``checkpoint``."""

    def __init__(self, message: str, phase: str, checkpoint: Path | None):
        super().__init__(f"[{phase}] {message}")
        self.phase = phase
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class Proposition:
    prop_id: int
    triplet: Triplet
    text: str
    chunk_id: str


def verbalize(t: Triplet) -> str:
    if count_placeholders(t):
        raise ValueError(f"cannot verbalize triplet with placeholders: {t}")
    return " ".join(t.fields)


class TripletIndex:
    """Immutable proposition table, unit-norm embedding matrix and chunk table."""

    def __init__(
        self,
        propositions: Sequence[Proposition],
        embeddings: np.ndarray,
        chunks: Iterable[Chunk],
        metadata: Mapping | None = None,
    ):
        self.propositions = tuple(propositions)
        self.chunks = {c.chunk_id: c for c in chunks}
        matrix = np.ascontiguousarray(embeddings, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[0] != len(self.propositions):
            raise IndexConsistencyError(
                f"{len(self.propositions)} propositions but embedding matrix has shape {matrix.shape}"
            )
        for i, p in enumerate(self.propositions):
            if p.prop_id != i:
                raise IndexConsistencyError(f"prop_id {p.prop_id} at row {i}")
            if p.chunk_id not in self.chunks:
                raise IndexConsistencyError(f"proposition {i} references unknown chunk {p.chunk_id!r}")
        matrix.setflags(write=False)
        self.embeddings = matrix
        self.metadata = dict(metadata or {})

    def __len__(self) -> int:
        return len(self.propositions)

    @property
    def dimension(self) -> int:
        return self.embeddings.shape[1]

    def chunk_of(self, prop_id: int) -> str:
        return self.propositions[prop_id].chunk_id


def extract_triplets(chunk: Chunk, gateway: Gateway, ledger: UsageLedger | None = None) -> list[Triplet]:
    if not chunk.text.strip():
        raise ValueError(f"chunk {chunk.chunk_id!r} is empty")
    result = gateway.complete("extract", {"passage": chunk.text}, phase="extract", ledger=ledger)
    return parse_extraction(result.text)


def corpus_digest(chunks: Sequence[Chunk]) -> str:
    h = hashlib.sha256()
    for c in chunks:
        h.update(f"{c.chunk_id}\0{c.doc_id}\0{c.text}\n".encode("utf-8"))
    return h.hexdigest()


@dataclass
class BuildStats:
    documents: int
    chunks: int
    tokens: int
    triplets: int
    resumed_chunks: int = 0
    usage: dict = field(default_factory=dict)

    def summary(self) -> str:
        return f"{self.triplets} propositions, {self.chunks} chunks"

    def table(self) -> str:
        rows = [
            ("# documents", self.documents),
            ("# chunks", self.chunks),
            ("# tokens", self.tokens),
            ("# extracted triplets", self.triplets),
            ("# indexing tokens (weighted)", self.usage.get("weighted_cost", 0)),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value:>10,}" for name, value in rows)


class _Checkpoint:
    """Per-chunk extraction results and per-batch embeddings of an unfinished build."""

    def __init__(self, directory: Path, fingerprint: str):
        self.directory = directory
        self._lock = threading.Lock()
        directory.mkdir(parents=True, exist_ok=True)
        stamp = directory / "checkpoint.json"
        if stamp.exists() and json.loads(stamp.read_text()).get("fingerprint") != fingerprint:
            logger.warning("checkpoint at %s belongs to a different build; discarding it", directory)
            shutil.rmtree(directory)
            directory.mkdir(parents=True)
        stamp.write_text(json.dumps({"fingerprint": fingerprint}))
        self.extraction_path = directory / "extraction.jsonl"

    def load_extractions(self) -> dict[str, tuple[list[Triplet], list[dict]]]:
        done: dict[str, tuple[list[Triplet], list[dict]]] = {}
        if not self.extraction_path.exists():
            return done
        with open(self.extraction_path, encoding="utf-8") as fh:
            for line in fh:
                try:
                    record = json.loads(line)
                except json.JSONDecodeError:
                    # a torn final line from an interrupted write
                    continue
                done[record["chunk_id"]] = (
                    [Triplet.from_list(t) for t in record["triplets"]],
                    record.get("usage", []),
                )
        return done

    def save_extraction(self, chunk_id: str, triplets: Sequence[Triplet], usage: Sequence[dict]) -> None:
        line = json.dumps(
            {"chunk_id": chunk_id, "triplets": [t.to_list() for t in triplets], "usage": list(usage)},
            ensure_ascii=False,
        )
        with self._lock, open(self.extraction_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def batch_path(self, i: int) -> Path:
        return self.directory / f"embeddings-{i:06d}.npy"

    def load_batch(self, i: int, rows: int) -> np.ndarray | None:
        path = self.batch_path(i)
        if not path.exists():
            return None
        batch = np.load(path)
        return batch if batch.shape[0] == rows else None

    def save_batch(self, i: int, batch: np.ndarray) -> None:
        tmp = self.directory / f".tmp-{i:06d}.npy"
        np.save(tmp, batch)
        tmp.replace(self.batch_path(i))

    def remove(self) -> None:
        shutil.rmtree(self.directory, ignore_errors=True)


def build_index(
    corpus: Sequence[Document],
    gateway: Gateway,
    config: RunConfig = RunConfig(),
    *,
    checkpoint_dir: str | Path | None = None,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
) -> tuple[TripletIndex, BuildStats]:
    """Chunk *corpus* and build its index; see ``build_index_from_chunks``."""
    if not corpus:
        raise ValueError("corpus is empty")
    chunks = chunk_corpus(
        corpus, config.chunk_size, config.overlap, prepend_title=config.prepend_title, tokenizer=tokenizer
    )
    tokens = sum(count_tokens(d.body, tokenizer) for d in corpus)
    return build_index_from_chunks(
        chunks, gateway, config, checkpoint_dir=checkpoint_dir, tokenizer=tokenizer,
        documents=len(corpus), tokens=tokens,
    )


def build_index_from_chunks(
    chunks: Sequence[Chunk],
    gateway: Gateway,
    config: RunConfig = RunConfig(),
    *,
    checkpoint_dir: str | Path | None = None,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    documents: int | None = None,
    tokens: int | None = None,
) -> tuple[TripletIndex, BuildStats]:
    """Extract, verbalize and embed every chunk.

    Extraction runs on ``config.workers`` threads. prop_ids follow chunk
    order then extraction order, so they do not depend on scheduling.
    With *checkpoint_dir*, each finished chunk and each embedding batch is
    persisted as it completes and reused on the next call with the same
    inputs; a failing build raises ``IndexBuildError`` naming the checkpoint.
    """
    digest = corpus_digest(chunks)
    checkpoint = None
    if checkpoint_dir is not None:
        checkpoint = _Checkpoint(Path(checkpoint_dir), f"{digest}:{EXTRACTOR_VERSION}")
    done = checkpoint.load_extractions() if checkpoint else {}
    resumed = sum(1 for c in chunks if c.chunk_id in done)
    ledger = UsageLedger()
    for chunk_id, (_, usage) in done.items():
        for entry in usage:
            ledger.record(_usage_entry(entry))

    pending = [c for c in chunks if c.chunk_id not in done and c.text.strip()]

    def work(chunk: Chunk) -> None:
        local = UsageLedger()
        triplets = extract_triplets(chunk, gateway, local)
        usage = [e.to_dict() for e in local.entries]
        if checkpoint:
            checkpoint.save_extraction(chunk.chunk_id, triplets, usage)
        done[chunk.chunk_id] = (triplets, usage)
        ledger.extend(local)

    if pending:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(work, c) for c in pending]
            finished, _ = wait(futures, return_when=FIRST_EXCEPTION)
            errors = [f.exception() for f in futures if f.done() and f.exception() is not None]
            if errors:
                for f in futures:
                    f.cancel()
                raise IndexBuildError(
                    f"extraction failed: {errors[0]}", "extract", checkpoint.directory if checkpoint else None
                ) from errors[0]

    propositions: list[Proposition] = []
    for chunk in chunks:
        triplets, _ = done.get(chunk.chunk_id, ([], []))
        seen: set[Triplet] = set()
        for t in triplets:
            if t in seen or count_placeholders(t):
                continue
            seen.add(t)
            propositions.append(Proposition(len(propositions), t, verbalize(t), chunk.chunk_id))

    embeddings = _embed_all([p.text for p in propositions], gateway, config.embed_batch_size, checkpoint)
    stats = BuildStats(
        documents=documents if documents is not None else len({c.doc_id for c in chunks}),
        chunks=len(chunks),
        tokens=tokens if tokens is not None else sum(count_tokens(c.text, tokenizer) for c in chunks),
        triplets=len(propositions),
        resumed_chunks=resumed,
        usage=ledger.to_dict(),
    )
    metadata = {
        "format_version": FORMAT_VERSION,
        "dimension": int(embeddings.shape[1]),
        "propositions": len(propositions),
        "chunks": len(chunks),
        "extractor_version": EXTRACTOR_VERSION,
        "tokenizer_id": tokenizer.tokenizer_id,
        "corpus_digest": digest,
        "cross_chunk_dedup": False,
        "stats": asdict(stats),
        "config": config.to_dict(),
    }
    index = TripletIndex(propositions, embeddings, chunks, metadata)
    if checkpoint:
        checkpoint.remove()
    return index, stats


def _usage_entry(record: Mapping) -> UsageEntry:
    return UsageEntry(record["phase"], record["input_tokens"], record["output_tokens"], record.get("estimated", False))


def _embed_all(texts: Sequence[str], gateway: Gateway, batch_size: int, checkpoint: _Checkpoint | None) -> np.ndarray:
    batches = []
    for i, start in enumerate(range(0, len(texts), batch_size)):
        part = texts[start : start + batch_size]
        batch = checkpoint.load_batch(i, len(part)) if checkpoint else None
        if batch is None:
            try:
                batch = gateway.embed(part)
            except GatewayError as exc:
                raise IndexBuildError(
                    f"embedding failed: {exc}", "embed", checkpoint.directory if checkpoint else None
                ) from exc
            if checkpoint:
                checkpoint.save_batch(i, batch)
        batches.append(batch)
    if not batches:
        return np.zeros((0, gateway.dimension or 0), dtype=np.float32)
    return np.concatenate(batches).astype(np.float32)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)


def save_index(index: TripletIndex, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "chunks.jsonl").write_text(
        _jsonl({"chunk_id": c.chunk_id, "doc_id": c.doc_id, "text": c.text} for c in index.chunks.values()),
        encoding="utf-8",
    )
    (directory / "propositions.jsonl").write_text(
        _jsonl(
            {
                "prop_id": p.prop_id,
                "subject": p.triplet.subject,
                "predicate": p.triplet.predicate,
                "object": p.triplet.object,
                "text": p.text,
                "chunk_id": p.chunk_id,
            }
            for p in index.propositions
        ),
        encoding="utf-8",
    )
    rows, dim = index.embeddings.shape
    with open(directory / "embeddings.bin", "wb") as fh:
        fh.write(_HEADER.pack(rows, dim))
        fh.write(index.embeddings.astype("<f4").tobytes(order="C"))
    meta = dict(index.metadata)
    meta.update(
        format_version=FORMAT_VERSION,
        dimension=dim,
        propositions=rows,
        chunks=len(index.chunks),
        created_at=meta.get("created_at") or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        checksums={
            name: _sha256(directory / name) for name in ("chunks.jsonl", "propositions.jsonl", "embeddings.bin")
        },
    )
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return directory


def load_index(directory: str | Path) -> TripletIndex:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.is_file():
        raise FileNotFoundError(f"no index at {directory} (missing meta.json)")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    found = meta.get("format_version")
    if found != FORMAT_VERSION:
        raise IndexVersionError(f"index format version {found} found, this build reads version {FORMAT_VERSION}")

    raw = (directory / "embeddings.bin").read_bytes()
    if len(raw) < _HEADER.size:
        raise IndexConsistencyError("embeddings.bin is shorter than its header")
    rows, dim = _HEADER.unpack_from(raw)
    expected = _HEADER.size + rows * dim * 4
    if len(raw) != expected:
        raise IndexConsistencyError(
            f"embeddings.bin holds {len(raw) - _HEADER.size} payload bytes, header promises {rows}x{dim} floats"
        )
    if rows != meta.get("propositions") or dim != meta.get("dimension"):
        raise IndexConsistencyError(
            f"embeddings.bin is {rows}x{dim}, meta.json says {meta.get('propositions')}x{meta.get('dimension')}"
        )

    chunks = [
        Chunk(r["chunk_id"], r["doc_id"], r["text"]) for r in _read_jsonl(directory / "chunks.jsonl")
    ]
    props = [
        Proposition(r["prop_id"], Triplet(r["subject"], r["predicate"], r["object"]), r["text"], r["chunk_id"])
        for r in _read_jsonl(directory / "propositions.jsonl")
    ]
    if len(props) != rows:
        raise IndexConsistencyError(f"{len(props)} propositions but {rows} embedding rows")
    if len(chunks) != meta.get("chunks"):
        raise IndexConsistencyError(f"{len(chunks)} chunks but meta.json says {meta.get('chunks')}")

    for name, digest in meta.get("checksums", {}).items():
        if _sha256(directory / name) != digest:
            raise IndexChecksumError(f"checksum mismatch for {name}")

    matrix = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(rows, dim).astype(np.float32)
    return TripletIndex(props, matrix, chunks, meta)


def _read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
