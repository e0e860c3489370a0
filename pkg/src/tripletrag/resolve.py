"""Online query engine: decompose, resolve over bounded rounds, answer."""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field
from typing import Any

from .config import RunConfig
from .core import ResolutionState, Triplet, is_terminal, update_state
from .gateway import DecompositionError, Gateway, UsageLedger, parse_decomposition, parse_resolution
from .gateway.prompts import format_clues, format_passages, format_propositions
from .index import TripletIndex
from .retrieve import adaptive_retrieve, retrieve_texts

logger = logging.getLogger(__name__)

SENTINEL_PREDICATE = "answers"
_ANSWER_LABEL = re.compile(r"^\s*answer\s*:\s*", re.IGNORECASE)


class EmptyAnswerError(RuntimeError):
    pass


class QueryError(RuntimeError):
    """A query aborted in ``phase``; ``events`` holds the trace up to that point."""

    def __init__(self, phase: str, cause: BaseException, events: list[dict], usage: UsageLedger):
        super().__init__(f"query failed during {phase}: {cause}")
        self.phase = phase
        self.events = events
        self.usage = usage


@dataclass
class QueryResult:
    query: str
    answer: str
    fully_resolved: bool
    rounds_used: int
    final_state: ResolutionState
    usage: UsageLedger
    branch: str
    events: list[dict] = field(default_factory=list)
    latency: float = 0.0

    def round_events(self) -> list[dict]:
        return [e for e in self.events if e["event"] == "round"]


def decompose(query: str, gateway: Gateway, ledger: UsageLedger | None = None) -> tuple[ResolutionState, bool]:
    """Round-0 state for *query*, plus whether the whole-question fallback was used."""
    if not query.strip():
        raise ValueError("query is empty")
    result = gateway.complete("decompose", {"query": query}, phase="decompose", ledger=ledger)
    try:
        triplets = parse_decomposition(result.text)
    except DecompositionError:
        logger.warning("decomposition unparseable, falling back to whole-question search")
        return ResolutionState(searchable=(Triplet(query, SENTINEL_PREDICATE, "?"),)), True
    return ResolutionState.from_triplets(triplets), False


def resolve_round(
    state: ResolutionState,
    query: str,
    index: TripletIndex,
    gateway: Gateway,
    config: RunConfig = RunConfig(),
    ledger: UsageLedger | None = None,
) -> ResolutionState:
    """Retrieve for the current clues, ask the resolver, and fold its answer in.

    A state with fuzzy clues but nothing searchable retrieves with the
    original question text instead.
    """
    exclude: set[str] = set()
    if config.dedup_rounds:
        for record in state.trace:
            exclude.update(record.retrieved_chunk_ids)

    fallback = not state.searchable
    if fallback:
        retrieval = retrieve_texts([query], index, config.k, gateway.embed, config.pool_width, exclude_chunks=exclude)
    else:
        retrieval = adaptive_retrieve(
            state.searchable, index, config.k, gateway.embed, config.pool_width, exclude_chunks=exclude
        )

    passages = [(cid, index.chunks[cid].text) for cid in retrieval.chunks]
    bindings = {
        "query": query,
        "searchable": format_clues(state.searchable),
        "fuzzy": format_clues(state.fuzzy),
        "passages": format_passages(passages, config.chunk_char_budget),
        "propositions": format_propositions(index.propositions[pid].text for pid in retrieval.prop_ids),
        "resolved": format_clues(state.resolved),
    }
    local = UsageLedger()
    result = gateway.complete("resolve", bindings, phase="resolve", ledger=local)
    if ledger is not None:
        ledger.extend(local)
    new_resolved, new_searchable = parse_resolution(result.text)
    return update_state(
        state,
        new_resolved,
        new_searchable,
        retrieved_prop_ids=retrieval.prop_ids,
        retrieved_chunk_ids=retrieval.chunks,
        scores=retrieval.scores,
        usage=[e.to_dict() for e in local.entries],
        fallback_query=fallback,
        exhausted=retrieval.exhausted,
        propagate=config.propagate_bindings,
    )


def answer_context(state: ResolutionState) -> tuple[str, list[Triplet], list[Triplet]]:
    """``(branch, clues, excluded_fuzzy)`` for the final prompt.

    Branch ``a``: everything resolved, clues are the resolved facts.
    Branch ``b``: clues are resolved facts plus leftover searchable clues;
    leftover fuzzy clues are left out.
    """
    if not state.unresolved:
        return "a", list(state.resolved), []
    return "b", list(state.resolved) + list(state.searchable), list(state.fuzzy)


def clean_answer(text: str) -> str:
    return _ANSWER_LABEL.sub("", text.strip(), count=1).strip()


def answer(query: str, state: ResolutionState, gateway: Gateway, ledger: UsageLedger | None = None) -> str:
    _, clues, _ = answer_context(state)
    result = gateway.complete("answer", {"query": query, "clues": format_clues(clues)}, phase="answer", ledger=ledger)
    text = clean_answer(result.text)
    if not text:
        raise EmptyAnswerError("answer generation was empty")
    return text


def run_query(query: str, index: TripletIndex, gateway: Gateway, config: RunConfig = RunConfig()) -> QueryResult:
    """Decompose, loop until nothing is unresolved or ``max_rounds`` is hit, answer."""
    start = time.perf_counter()
    ledger = UsageLedger()
    events: list[dict[str, Any]] = [{"event": "config", "query": query, "config": config.to_dict()}]
    phase = "decompose"
    try:
        state, fallback = decompose(query, gateway, ledger)
        events.append(
            {
                "event": "decompose",
                "fallback": fallback,
                "state": state.snapshot(),
                "usage": [e.to_dict() for e in ledger.entries],
            }
        )
        phase = "resolve"
        while not is_terminal(state, config.max_rounds):
            state = resolve_round(state, query, index, gateway, config, ledger)
            events.append(state.trace[-1].to_dict())
        phase = "answer"
        branch, clues, excluded = answer_context(state)
        n_before = len(ledger)
        text = answer(query, state, gateway, ledger)
    except Exception as exc:
        events.append({"event": "error", "phase": phase, "error": f"{type(exc).__name__}: {exc}"})
        raise QueryError(phase, exc, events, ledger) from exc
    events.append(
        {
            "event": "answer",
            "branch": branch,
            "clues": [t.to_list() for t in clues],
            "excluded_fuzzy": [t.to_list() for t in excluded],
            "answer": text,
            "usage": [e.to_dict() for e in ledger.entries[n_before:]],
        }
    )
    return QueryResult(
        query=query,
        answer=text,
        fully_resolved=branch == "a",
        rounds_used=state.round,
        final_state=state,
        usage=ledger,
        branch=branch,
        events=events,
        latency=time.perf_counter() - start,
    )
