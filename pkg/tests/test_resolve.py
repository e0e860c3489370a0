import json

import pytest

from tripletrag import RunConfig
from tripletrag.core import ResolutionState, Triplet
from tripletrag.gateway import Gateway, MockBackend, UsageLedger, transcript_record
from tripletrag.gateway.prompts import format_clues
from tripletrag.resolve import (
    SENTINEL_PREDICATE,
    EmptyAnswerError,
    QueryError,
    answer,
    answer_context,
    clean_answer,
    decompose,
    resolve_round,
    run_query,
)

from conftest import DATA
from scripted import BIRTH_Q, CAPITAL_Q, COMPARE_Q, STUCK_Q

T = Triplet


class Spy:
    """Delegating backend that keeps every request."""

    name = "spy"

    def __init__(self, inner):
        self.inner = inner
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        return self.inner.complete(request)

    def embed(self, texts):
        return self.inner.embed(texts)

    def prompts(self, template_id):
        return [r.prompt for r in self.requests if r.template_id == template_id]


def spy(transcript="transcript.jsonl", extra=()):
    inner = MockBackend.from_jsonl(DATA / transcript)
    for record in extra:
        inner.responses.update(MockBackend.from_records([record]).responses)
    s = Spy(inner)
    return s, Gateway(s)


def resolve_record(state, query, response):
    bindings = {
        "query": query,
        "searchable": format_clues(state.searchable),
        "fuzzy": format_clues(state.fuzzy),
        "resolved": format_clues(state.resolved),
    }
    return transcript_record("resolve", bindings, response, 10, 5)


def test_decompose_single_hop():
    _, gw = spy()
    state, fallback = decompose(CAPITAL_Q, gw)
    assert state.searchable == (T("France", "has capital", "?"),)
    assert state.resolved == () and state.fuzzy == () and not fallback


def test_decompose_comparative():
    _, gw = spy()
    state, _ = decompose(COMPARE_Q, gw)
    assert len(state.searchable) == 2 and len(state.fuzzy) == 2
    assert state.fuzzy[0] == T("?directorA", "was born in", "?")


def test_decompose_prose_falls_back_to_sentinel():
    q = "Tell me something?"
    _, gw = spy(extra=[transcript_record("decompose", {"query": q}, "I am not sure how to split this.")])
    state, fallback = decompose(q, gw)
    assert fallback
    assert state.searchable == (T(q, SENTINEL_PREDICATE, "?"),)


def test_decompose_rejects_empty_query():
    with pytest.raises(ValueError):
        decompose("  ", Gateway(MockBackend()))


def test_case_study_round_one(fixture_index):
    s, gw = spy()
    state, _ = decompose(COMPARE_Q, gw)
    nxt = resolve_round(state, COMPARE_Q, fixture_index, gw, RunConfig())
    assert set(nxt.resolved) == {
        T("Casablanca", "is directed by", "Michael Curtiz"),
        T("Death Is a Caress", "is directed by", "Edith Carlmar"),
    }
    assert set(nxt.searchable) == {T("Michael Curtiz", "was born in", "?"), T("Edith Carlmar", "was born in", "?")}
    assert nxt.fuzzy == ()
    prompt = s.prompts("resolve")[0]
    assert "Searchable Clues: Casablanca | is directed by | ?directorA" in prompt
    assert "- Casablanca is directed by Michael Curtiz" in prompt
    assert "[Passage 1: " in prompt
    assert "Previous Resolved Clues: None" in prompt


def test_no_progress_round(fixture_index):
    fuzzy = T("?x", "was founded by", "?")
    state = ResolutionState(searchable=(T("Seine bridges", "were built by", "?x"),), fuzzy=(fuzzy,))
    _, gw = spy(extra=[resolve_record(state, "q", "I could not resolve anything.")])
    nxt = resolve_round(state, "q", fixture_index, gw, RunConfig())
    assert nxt.searchable == () and nxt.fuzzy == (fuzzy,)
    assert nxt.round == 1


def test_fuzzy_only_state_retrieves_with_query(fixture_index):
    q = "Who directed Casablanca?"
    state = ResolutionState(fuzzy=(T("?", "is directed by", "?"),))
    response = "Fully Resolved Clue 1:\nSubject: Casablanca\nPredicate: is directed by\nObject: Michael Curtiz"
    _, gw = spy(extra=[resolve_record(state, q, response)])
    nxt = resolve_round(state, q, fixture_index, gw, RunConfig(k=1))
    record = nxt.trace[-1]
    assert record.fallback_query
    assert record.retrieved_chunk_ids == ("casablanca#0",)
    assert nxt.resolved == (T("Casablanca", "is directed by", "Michael Curtiz"),)
    assert nxt.fuzzy == ()


def test_dedup_rounds_excludes_seen_chunks(fixture_index):
    _, gw = spy()
    state, _ = decompose(COMPARE_Q, gw)
    config = RunConfig(k=1, dedup_rounds=True)
    first = resolve_round(state, COMPARE_Q, fixture_index, gw, config)
    seen = set(first.trace[-1].retrieved_chunk_ids)
    second = resolve_round(first, COMPARE_Q, fixture_index, gw, config)
    assert not seen & set(second.trace[-1].retrieved_chunk_ids)


def test_passage_budget(fixture_index):
    s, gw = spy()
    state, _ = decompose(CAPITAL_Q, gw)
    resolve_round(state, CAPITAL_Q, fixture_index, gw, RunConfig(chunk_char_budget=5))
    assert "]\nParis\n" in s.prompts("resolve")[0]


def test_answer_branches():
    full = ResolutionState(resolved=(T("France", "has capital", "Paris"),), round=1)
    assert answer_context(full) == ("a", [T("France", "has capital", "Paris")], [])
    stuck = ResolutionState(
        resolved=(T("a", "b", "c"),), searchable=(T("x", "y", "?"),), fuzzy=(T("?p", "q", "?"),), round=3
    )
    branch, clues, excluded = answer_context(stuck)
    assert branch == "b"
    assert clues == [T("a", "b", "c"), T("x", "y", "?")]
    assert excluded == [T("?p", "q", "?")]


def test_answer_with_resolved_capital():
    state = ResolutionState(resolved=(T("France", "has capital", "Paris"),), round=1)
    records = [transcript_record("answer", {"query": CAPITAL_Q, "clues": "France | has capital | Paris"}, "Paris")]
    assert answer(CAPITAL_Q, state, Gateway(MockBackend.from_records(records))) == "Paris"


def test_answer_with_empty_clue_list():
    state = ResolutionState(round=3)
    records = [transcript_record("answer", {"query": "q", "clues": "None"}, " yes \n")]
    assert answer("q", state, Gateway(MockBackend.from_records(records))) == "yes"


def test_empty_answer_is_an_error():
    records = [transcript_record("answer", {"query": "q", "clues": "None"}, "Answer:  ")]
    with pytest.raises(EmptyAnswerError):
        answer("q", ResolutionState(), Gateway(MockBackend.from_records(records)))


@pytest.mark.parametrize(
    "raw,clean",
    [("Answer: Paris", "Paris"), ("answer:Paris", "Paris"), ("  Paris  ", "Paris"), ("The answer: no", "The answer: no")],
)
def test_clean_answer(raw, clean):
    assert clean_answer(raw) == clean


def test_single_hop_query(fixture_index):
    result = run_query(CAPITAL_Q, fixture_index, spy()[1])
    assert result.answer == "Paris"
    assert result.rounds_used == 1 and result.fully_resolved and result.branch == "a"


def test_two_hop_query_stops_early(fixture_index):
    s, gw = spy()
    result = run_query(BIRTH_Q, fixture_index, gw, RunConfig(max_rounds=5))
    assert result.answer == "1886"
    assert result.rounds_used == 2
    assert len(s.prompts("resolve")) == 2


def test_usage_covers_every_phase(fixture_index):
    result = run_query(COMPARE_Q, fixture_index, spy()[1])
    phases = [e.phase for e in result.usage.entries]
    assert phases == ["decompose", "resolve", "resolve", "answer"]
    round_usage = [u["phase"] for e in result.round_events() for u in e["usage"]]
    assert round_usage == ["resolve", "resolve"]


def test_round_cap_path(fixture_index):
    s, gw = spy("adversarial.jsonl")
    result = run_query(STUCK_Q, fixture_index, gw)
    assert result.rounds_used == 3 and not result.fully_resolved
    assert result.branch == "b" and result.answer == "unknown"
    assert "Seine bridges | were built by | ?company" in s.prompts("answer")[0]
    assert "was founded by" not in s.prompts("answer")[0]
    assert result.events[-1]["excluded_fuzzy"] == [["?company", "was founded by", "?"]]


def test_zero_round_budget_answers_directly(fixture_index):
    records = [
        transcript_record("decompose", {"query": "q"}, "Triples:\nq | answers | ?"),
        transcript_record("answer", {"query": "q", "clues": "q | answers | ?"}, "maybe"),
    ]
    result = run_query("q", fixture_index, Gateway(MockBackend.from_records(records)), RunConfig(max_rounds=0))
    assert result.rounds_used == 0 and result.answer == "maybe"


def test_failure_keeps_partial_trace(fixture_index):
    records = [transcript_record("decompose", {"query": "q"}, "Triples:\nFrance | has capital | ?")]
    with pytest.raises(QueryError) as info:
        run_query("q", fixture_index, Gateway(MockBackend.from_records(records)))
    err = info.value
    assert err.phase == "resolve"
    assert [e["event"] for e in err.events] == ["config", "decompose", "error"]
    assert len(err.usage) == 1


def test_trace_is_json_and_deterministic(fixture_index):
    a = run_query(COMPARE_Q, fixture_index, spy()[1])
    b = run_query(COMPARE_Q, fixture_index, spy()[1])
    lines = [json.dumps(e) for e in a.events]
    assert lines == [json.dumps(e) for e in b.events]
    assert a.usage.entries == b.usage.entries
    kinds = [e["event"] for e in a.events]
    assert kinds == ["config", "decompose", "round", "round", "answer"]


def test_result_invariants(fixture_index):
    for q, transcript in [(CAPITAL_Q, "transcript.jsonl"), (STUCK_Q, "adversarial.jsonl")]:
        result = run_query(q, fixture_index, spy(transcript)[1])
        state = result.final_state
        assert result.rounds_used <= 3
        assert result.fully_resolved == (not state.searchable and not state.fuzzy)
        assert result.fully_resolved == (result.events[-1]["branch"] == "a")
        resolved_sets = [set(map(tuple, e["state"]["resolved"])) for e in result.round_events()]
        assert all(x <= y for x, y in zip(resolved_sets, resolved_sets[1:]))
        state.check()
