"""Question answering over a graph-free index of extracted knowledge triplets.

Offline, each corpus chunk is turned into (subject, predicate, object)
triplets, verbalized into propositions and embedded. Online, a question is
decomposed into triplets with ``?`` placeholders, which are resolved round
by round against the proposition index before a final answer is written.
"""

from .config import RunConfig
from .core import (
    ResolutionState,
    RoundRecord,
    Triplet,
    TripletClass,
    classify,
    count_placeholders,
    is_terminal,
    update_state,
)
from .evaluation import EvalReport, QAExample, exact_match, f1, normalize_answer, run_eval
from .gateway import Gateway, LiveBackend, MockBackend, UsageLedger, weighted_cost
from .index import Proposition, TripletIndex, build_index, load_index, save_index, verbalize
from .ingest import Chunk, Document, chunk_document, count_tokens
from .resolve import QueryResult, run_query
from .retrieve import RetrievalResult, adaptive_retrieve, query_proposition, search_topn

__version__ = "0.1.0"

__all__ = [
    "Chunk",
    "Document",
    "EvalReport",
    "Gateway",
    "LiveBackend",
    "MockBackend",
    "Proposition",
    "QAExample",
    "QueryResult",
    "ResolutionState",
    "RetrievalResult",
    "RoundRecord",
    "RunConfig",
    "Triplet",
    "TripletClass",
    "TripletIndex",
    "UsageLedger",
    "adaptive_retrieve",
    "build_index",
    "chunk_document",
    "classify",
    "count_placeholders",
    "count_tokens",
    "exact_match",
    "f1",
    "is_terminal",
    "load_index",
    "normalize_answer",
    "query_proposition",
    "run_eval",
    "run_query",
    "save_index",
    "search_topn",
    "update_state",
    "verbalize",
    "weighted_cost",
]
