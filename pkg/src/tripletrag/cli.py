"""Command line entry points: ``index``, ``inspect``, ``query`` and ``eval``.

Exit status: 0 success, 1 runtime failure, 2 usage or input error.
The API key is read from the environment variable named by
``--api-key-env`` (default ``OPENAI_API_KEY``), never from a flag.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Iterator, Sequence

from .config import RunConfig
from .evaluation import load_dataset, run_eval
from .gateway import Gateway, HashEmbedder, LiveBackend, MockBackend
from .index import IndexBuildError, IndexFormatError, build_index, build_index_from_chunks, load_index, save_index
from .ingest import CorpusFormatError, is_prechunked, load_chunks, load_corpus
from .resolve import QueryError, run_query

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    d = RunConfig()
    p.add_argument("--k", type=int, default=d.k, help="unique chunks retrieved per round (default %(default)s)")
    p.add_argument("--max-rounds", type=int, default=d.max_rounds, help="round cap (default %(default)s)")
    p.add_argument("--chunk-size", type=int, default=d.chunk_size)
    p.add_argument("--overlap", type=int, default=d.overlap)
    p.add_argument("--pool-mult", type=int, default=d.pool_mult, help="candidates per query proposition = pool-mult * k")
    p.add_argument("--backend", choices=("live", "mock"), default=d.backend)
    p.add_argument("--transcript", metavar="PATH", help="mock transcript JSONL")
    p.add_argument("--lenient-mock", action="store_true", help="unmatched mock prompts yield empty text instead of failing")
    p.add_argument("--mock-dim", type=int, default=d.mock_dim, help="hash-embedding dimension of the mock backend")
    p.add_argument("--endpoint", metavar="URL", help="base URL of an OpenAI-compatible API")
    p.add_argument("--model", metavar="NAME", help="chat model name")
    p.add_argument("--embed-model", metavar="NAME", help="embedding model name")
    p.add_argument("--api-key-env", default=d.api_key_env, metavar="VAR")
    p.add_argument("--workers", type=int, default=d.workers)
    p.add_argument("--trace", nargs="?", const="-", metavar="PATH", help="write JSON-lines trace (stderr if no PATH)")
    p.add_argument("--dedup-rounds", action="store_true", help="never re-retrieve a chunk seen in an earlier round")
    p.add_argument("--propagate-bindings", action="store_true", help="experimental: substitute bound placeholders into fuzzy clues")
    p.add_argument("--no-title", action="store_true", help="do not prefix chunks with the document title")
    p.add_argument("--chunk-char-budget", type=int, help="truncate each passage in the resolver prompt")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tripletrag", description="Triplet-index retrieval-augmented QA.", allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build an index from a corpus", allow_abbrev=False)
    p.add_argument("--corpus", required=True, metavar="PATH", help="corpus JSONL (documents or pre-split chunks)")
    p.add_argument("--out", required=True, metavar="DIR")
    _add_run_flags(p)

    p = sub.add_parser("inspect", help="summarize an index", allow_abbrev=False)
    p.add_argument("--index", required=True, metavar="DIR")
    p.add_argument("--limit", type=int, default=10, help="propositions to list")

    p = sub.add_parser("query", help="answer one question", allow_abbrev=False)
    p.add_argument("--index", required=True, metavar="DIR")
    p.add_argument("question")
    _add_run_flags(p)

    p = sub.add_parser("eval", help="evaluate on a QA dataset", allow_abbrev=False)
    p.add_argument("--index", required=True, metavar="DIR")
    p.add_argument("--dataset", required=True, metavar="PATH")
    p.add_argument("--report-dir", default="report", metavar="DIR")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--error-threshold", type=float, default=RunConfig().error_threshold,
                   help="fail when more than this fraction of examples error")
    _add_run_flags(p)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    try:
        return RunConfig(
            k=args.k,
            max_rounds=args.max_rounds,
            chunk_size=args.chunk_size,
            overlap=args.overlap,
            pool_mult=args.pool_mult,
            prepend_title=not args.no_title,
            dedup_rounds=args.dedup_rounds,
            propagate_bindings=args.propagate_bindings,
            chunk_char_budget=args.chunk_char_budget,
            workers=args.workers,
            backend=args.backend,
            transcript=args.transcript,
            strict_mock=not args.lenient_mock,
            mock_dim=args.mock_dim,
            endpoint=args.endpoint,
            model=args.model,
            embed_model=args.embed_model,
            api_key_env=args.api_key_env,
            error_threshold=getattr(args, "error_threshold", RunConfig().error_threshold),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def make_gateway(config: RunConfig) -> Gateway:
    if config.backend == "mock":
        embedder = HashEmbedder(config.mock_dim)
        if config.transcript:
            if not Path(config.transcript).is_file():
                raise UsageError(f"transcript not found: {config.transcript}")
            backend = MockBackend.from_jsonl(config.transcript, strict=config.strict_mock, embedder=embedder)
        else:
            backend = MockBackend(strict=config.strict_mock, embedder=embedder)
        return Gateway(backend)
    if not (config.endpoint and config.model and config.embed_model):
        raise UsageError("--backend live needs --endpoint, --model and --embed-model")
    api_key = os.environ.get(config.api_key_env)
    if not api_key:
        logger.warning("environment variable %s is not set; sending requests without a key", config.api_key_env)
    return Gateway(LiveBackend(config.endpoint, config.model, config.embed_model, api_key))


@contextmanager
def _trace_sink(target: str | None) -> Iterator[IO[str] | None]:
    if target is None:
        yield None
    elif target == "-":
        yield sys.stderr
    else:
        with open(target, "w", encoding="utf-8") as fh:
            yield fh


def _write_events(sink: IO[str] | None, events: Sequence[dict]) -> None:
    if sink is None:
        return
    for event in events:
        sink.write(json.dumps(event, ensure_ascii=False) + "\n")
    sink.flush()


def cmd_index(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    corpus = Path(args.corpus)
    if not corpus.is_file():
        raise UsageError(f"cannot read corpus: {corpus}")
    gateway = make_gateway(config)
    out = Path(args.out)
    checkpoint = out / ".checkpoint"
    try:
        if is_prechunked(corpus):
            index, stats = build_index_from_chunks(load_chunks(corpus), gateway, config, checkpoint_dir=checkpoint)
        else:
            index, stats = build_index(load_corpus(corpus), gateway, config, checkpoint_dir=checkpoint)
    except CorpusFormatError as exc:
        raise UsageError(str(exc)) from None
    except IndexBuildError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.checkpoint:
            print(f"completed work kept in {exc.checkpoint}; rerun the same command to resume", file=sys.stderr)
        return EXIT_FAILURE
    save_index(index, out)
    if stats.resumed_chunks:
        print(f"resumed {stats.resumed_chunks} chunks from checkpoint")
    print(stats.table())
    print(stats.summary())
    return EXIT_OK


def _load_index(path: str):
    try:
        return load_index(path)
    except (FileNotFoundError, IndexFormatError) as exc:
        raise UsageError(str(exc)) from None


def cmd_inspect(args: argparse.Namespace) -> int:
    index = _load_index(args.index)
    meta = index.metadata
    for key in ("format_version", "propositions", "chunks", "dimension", "extractor_version", "tokenizer_id",
                "corpus_digest", "created_at"):
        print(f"{key:<18} {meta.get(key)}")
    for p in index.propositions[: args.limit]:
        print(f"{p.prop_id:>6}  {p.chunk_id:<20} {p.text}")
    return EXIT_OK


def cmd_query(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    index = _load_index(args.index)
    gateway = make_gateway(config)
    with _trace_sink(args.trace) as sink:
        try:
            result = run_query(args.question, index, gateway, config)
        except QueryError as exc:
            _write_events(sink, exc.events)
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        _write_events(sink, result.events)
    print("config: " + json.dumps(config.to_dict(), sort_keys=True))
    print(
        f"rounds: {result.rounds_used}  fully_resolved: {'yes' if result.fully_resolved else 'no'}  "
        f"weighted tokens: {result.usage.to_dict()['weighted_cost']}"
    )
    print(result.answer)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = config_from_args(args)
    index = _load_index(args.index)
    try:
        dataset = load_dataset(args.dataset)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if not dataset:
        raise UsageError(f"dataset {args.dataset} has no examples")
    gateway = make_gateway(config)
    report = run_eval(dataset, index, gateway, config)

    out = Path(args.report_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    (out / "report.txt").write_text(report.to_text() + "\n", encoding="utf-8")
    report.write_csv(out / "rows.csv")
    if not args.no_figures:
        from .plotting import render_eval_figures

        for path in render_eval_figures(report, out):
            logger.info("wrote %s", path)
    print(report.to_text())
    print(f"report written to {out}")
    print(report.headline())
    if len(report.errors) > config.error_threshold * len(report.rows):
        print(f"error: {len(report.errors)}/{len(report.rows)} examples failed", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


COMMANDS = {"index": cmd_index, "inspect": cmd_inspect, "query": cmd_query, "eval": cmd_eval}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    verbosity = getattr(args, "verbose", 0)
    logging.basicConfig(
        level=logging.DEBUG if verbosity > 1 else logging.INFO if verbosity else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
