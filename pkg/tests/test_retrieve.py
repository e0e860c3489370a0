import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripletrag.core import Triplet
from tripletrag.index import Proposition, TripletIndex
from tripletrag.ingest import Chunk
from tripletrag.retrieve import (
    adaptive_retrieve,
    adaptive_retrieve_vectors,
    candidate_pool,
    query_proposition,
    search_topn,
)

import oracles
from conftest import mock_gateway

T = Triplet


def make_index(rows, chunk_of):
    props = [Proposition(i, T(f"s{i}", "p", "o"), f"s{i} p o", c) for i, c in enumerate(chunk_of)]
    chunks = [Chunk(c, "d", c) for c in dict.fromkeys(chunk_of)]
    return TripletIndex(props, np.asarray(rows, dtype=np.float32).reshape(len(chunk_of), -1), chunks)


def random_instance(rng: random.Random):
    """Small integer vectors: exact dot products and plenty of ties."""
    n = rng.randint(1, 50)
    dim = rng.randint(1, 4)
    n_chunks = rng.randint(1, 10)
    rows = [[rng.randint(-2, 2) for _ in range(dim)] for _ in range(n)]
    chunk_of = [f"c{rng.randrange(n_chunks)}" for _ in range(n)]
    queries = [[rng.randint(-2, 2) for _ in range(dim)] for _ in range(rng.randint(1, 3))]
    return rows, chunk_of, queries


@pytest.mark.parametrize(
    "t,text",
    [
        (T("France", "has capital", "?"), "France has capital"),
        (T("Ermengarde of Tours", "died on", "?"), "Ermengarde of Tours died on"),
        (T("?", "won Best Picture", "2020"), "won Best Picture 2020"),
    ],
)
def test_query_proposition(t, text):
    assert query_proposition(t) == text


@pytest.mark.parametrize("t", [T("a", "b", "c"), T("?", "b", "?")])
def test_query_proposition_needs_one_placeholder(t):
    with pytest.raises(ValueError):
        query_proposition(t)


def test_search_self_similarity(fixture_index):
    hits = search_topn(fixture_index, fixture_index.embeddings[4], 3)
    assert hits[0][0] == 4
    assert hits[0][1] == pytest.approx(1.0, abs=1e-6)


def test_search_hand_set_vectors():
    index = make_index([[1, 0], [0.6, 0.8], [0, 1]], ["a", "b", "c"])
    hits = search_topn(index, np.array([0.8, 0.6]), 2)
    assert [pid for pid, _ in hits] == [1, 0]
    assert [round(s, 6) for _, s in hits] == [0.96, 0.8]


def test_search_truncates_and_breaks_ties_by_id():
    index = make_index([[1, 0], [1, 0], [0, 1]], ["a", "b", "c"])
    assert [pid for pid, _ in search_topn(index, np.array([1.0, 0.0]), 10)] == [0, 1, 2]
    assert [pid for pid, _ in search_topn(index, np.array([1.0, 0.0]), 1)] == [0]


def test_search_errors():
    index = make_index([[1, 0]], ["a"])
    with pytest.raises(ValueError):
        search_topn(index, np.array([1.0, 0.0, 0.0]), 1)
    with pytest.raises(ValueError):
        search_topn(index, np.array([1.0, 0.0]), 0)


def scripted_pool():
    # p1(c1,.9) p2(c1,.8) p3(c2,.7) p4(c3,.6) as cosines against the query e0
    angles = np.arccos([0.9, 0.8, 0.7, 0.6])
    rows = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return make_index(rows, ["c1", "c1", "c2", "c3"]), np.array([[1.0, 0.0]])


def test_walk_stops_before_exceeding_k():
    index, q = scripted_pool()
    result = adaptive_retrieve_vectors(q, index, 2, 8)
    assert result.prop_ids == (0, 1, 2)
    assert result.chunks == ("c1", "c2")
    assert not result.exhausted


def test_k_one_takes_single_top_hit():
    index, q = scripted_pool()
    result = adaptive_retrieve_vectors(q, index, 1, 8)
    assert result.prop_ids == (0,) and result.chunks == ("c1",)


def test_single_chunk_index_exhausts():
    index = make_index([[1, 0], [0, 1], [1, 1]], ["c1", "c1", "c1"])
    result = adaptive_retrieve_vectors(np.array([[1.0, 0.0]]), index, 5, 1)
    assert result.prop_ids == (0, 2, 1)
    assert result.chunks == ("c1",)
    assert result.exhausted
    assert result.pool_width == 3


def test_pool_widens_until_k_chunks():
    index = make_index([[1, 0], [0.9, 0.1], [0.8, 0.2], [0, 1]], ["a", "a", "a", "b"])
    result = adaptive_retrieve_vectors(np.array([[1.0, 0.0]]), index, 2, 1)
    assert result.chunks == ("a", "b") and not result.exhausted
    assert result.pool_width == 4


def test_merge_keeps_max_score():
    index = make_index([[1, 0], [0, 1]], ["a", "b"])
    pool = candidate_pool(index, np.array([[1.0, 0.0], [0.6, 0.8]]), 2)
    assert [pid for pid, _ in pool] == [0, 1]
    assert pool[1][1] == pytest.approx(0.8)


def test_excluded_chunks_are_skipped():
    index, q = scripted_pool()
    result = adaptive_retrieve_vectors(q, index, 2, 8, exclude_chunks={"c1"})
    assert result.chunks == ("c2", "c3")


def test_adaptive_retrieve_on_fixture(fixture_index):
    embed = mock_gateway().embed
    result = adaptive_retrieve([T("Casablanca", "is directed by", "?")], fixture_index, 1, embed)
    assert result.prop_ids == (0,)
    assert result.chunks == ("casablanca#0",)
    with pytest.raises(ValueError):
        adaptive_retrieve([], fixture_index, 1, embed)


def test_matches_oracle_on_random_instances():
    rng = random.Random(7)
    for _ in range(300):
        rows, chunk_of, queries = random_instance(rng)
        k, width = rng.randint(1, 5), rng.randint(1, 10)
        result = adaptive_retrieve_vectors(np.array(queries, dtype=float), make_index(rows, chunk_of), k, width)
        props, chunks, exhausted = oracles.adaptive(rows, chunk_of, queries, k, width)
        assert list(result.prop_ids) == props
        assert list(result.chunks) == chunks
        assert result.exhausted == exhausted


@settings(max_examples=100)
@given(st.randoms(use_true_random=False))
def test_result_invariants(rnd):
    rows, chunk_of, queries = random_instance(rnd)
    k = rnd.randint(1, 5)
    result = adaptive_retrieve_vectors(np.array(queries, dtype=float), make_index(rows, chunk_of), k, rnd.randint(1, 10))
    assert len(set(result.chunks)) == len(result.chunks)
    assert {chunk_of[p] for p in result.prop_ids} == set(result.chunks)
    assert len(result.chunks) == min(k, len(set(chunk_of)))
    assert result.exhausted == (len(result.chunks) < k)


@settings(max_examples=100)
@given(st.randoms(use_true_random=False))
def test_pool_grows_monotonically(rnd):
    rows, chunk_of, queries = random_instance(rnd)
    index = make_index(rows, chunk_of)
    width = rnd.randint(1, 10)
    extra = [[rnd.randint(-2, 2) for _ in rows[0]]]
    before = dict(candidate_pool(index, np.array(queries, dtype=float), width))
    after = dict(candidate_pool(index, np.array(queries + extra, dtype=float), width))
    assert set(before) <= set(after)
    assert all(after[pid] >= score for pid, score in before.items())


def test_deterministic(fixture_index):
    searchable = [T("Michael Curtiz", "was born in", "?"), T("Edith Carlmar", "was born in", "?")]
    a = adaptive_retrieve(searchable, fixture_index, 2, mock_gateway().embed)
    b = adaptive_retrieve(searchable, fixture_index, 2, mock_gateway().embed)
    assert a == b
