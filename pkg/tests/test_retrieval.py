from __future__ import annotations

import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctxbubble.corpus import Corpus, ingest_rows, tokenize
from ctxbubble.errors import EmptyCorpus
from ctxbubble.retrieval import (
    QueryTerms,
    RetrievalConfig,
    bm25_score,
    idf,
    retrieve_candidates,
    term_frequency,
)
from ctxbubble.scoring import PriorConfig
from oracles import bm25_reference


def one_chunk(text, section="S"):
    return ingest_rows([("d", section, 0, text)]).chunks[0]


class TestTermFrequency:
    def test_hand_count(self):
        chunk = one_chunk("scope of works includes the scope")
        # scope:2 + of:1 + work:0 (no stemming, "works" is a different term)
        assert term_frequency(chunk, QueryTerms.parse("scope of work")) == 3

    def test_hand_count_with_repeated_of(self):
        chunk = one_chunk("scope of works includes the scope of")
        assert term_frequency(chunk, QueryTerms.parse("scope of work")) == 4

    def test_empty_query(self):
        assert term_frequency(one_chunk("anything"), QueryTerms.parse("")) == 0

    def test_no_shared_terms(self):
        assert term_frequency(one_chunk("alpha beta"), QueryTerms.parse("gamma")) == 0

    def test_duplicate_query_terms_count_once(self):
        chunk = one_chunk("scope scope")
        assert term_frequency(chunk, QueryTerms.parse("scope scope")) == 2

    def test_query_terms_share_tokenizer(self):
        q = QueryTerms.parse("Scope, of WORK!")
        assert q.terms == ("scope", "of", "work")


class TestBM25:
    def test_single_chunk_idf(self):
        corpus = ingest_rows([("d", "S", 0, "membrane")])
        assert idf("membrane", corpus) == pytest.approx(math.log(4 / 3), abs=1e-12)

    def test_absent_term_contributes_zero(self):
        corpus = ingest_rows([("d", "S", 0, "a b"), ("d", "S", 1, "c")])
        chunk = corpus.chunks[0]
        cfg = RetrievalConfig()
        assert bm25_score(chunk, QueryTerms.parse("a zzz"), corpus, cfg) == \
            bm25_score(chunk, QueryTerms.parse("a"), corpus, cfg)

    def test_identical_chunks_score_equal(self):
        corpus = ingest_rows([("d", "S", 0, "pit tanking"), ("d", "S", 1, "pit tanking")])
        q = QueryTerms.parse("tanking")
        a, b = (bm25_score(c, q, corpus, RetrievalConfig()) for c in corpus)
        assert a == b > 0

    @given(st.lists(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=10), min_size=1, max_size=12),
           st.lists(st.sampled_from("abcdefxy"), max_size=5))
    def test_matches_reference(self, docs, query):
        corpus = ingest_rows([("d", "S", i, " ".join(ws)) for i, ws in enumerate(docs)])
        q = QueryTerms.parse(" ".join(query))
        for chunk, ws in zip(corpus, docs):
            got = bm25_score(chunk, q, corpus, RetrievalConfig())
            assert got >= 0
            assert got == pytest.approx(bm25_reference(query, ws, docs), rel=1e-12, abs=1e-12)


def corpus_of(rows) -> Corpus:
    return ingest_rows([("d", sec, i, text) for i, (sec, text) in enumerate(rows)])


class TestRetrieveCandidates:
    def test_prior_pool_only(self):
        corpus = corpus_of([("Scope", "excavate footings"), ("Terms", "payment terms")])
        priors = PriorConfig(section_boosts={"Scope": 6.5})
        out = retrieve_candidates(QueryTerms.parse("waterproofing"), corpus, RetrievalConfig(), priors)
        assert [c.chunk.section_label for c in out] == ["Scope"]
        assert out[0].tf == 0 and out[0].bm25 == 0

    def test_all_matches_when_k_not_binding(self):
        corpus = corpus_of([("S", "pit a"), ("S", "pit b"), ("S", "c")])
        out = retrieve_candidates(QueryTerms.parse("pit"), corpus, RetrievalConfig(k_lexical=10), PriorConfig())
        assert sorted(c.chunk.text for c in out) == ["pit a", "pit b"]

    def test_no_duplicates_across_pools(self):
        corpus = corpus_of([("Scope", "pit"), ("Scope", "other")])
        priors = PriorConfig(section_boosts={"Scope": 1.0})
        out = retrieve_candidates(QueryTerms.parse("pit"), corpus, RetrievalConfig(), priors)
        ids = [c.chunk.chunk_id for c in out]
        assert len(ids) == len(set(ids)) == 2

    def test_pool_bounded_and_ordered_by_prior(self):
        corpus = corpus_of([("A", "x"), ("B", "y"), ("C", "z")])
        priors = PriorConfig(section_boosts={"A": 1.0, "B": 3.0, "C": 2.0})
        out = retrieve_candidates(QueryTerms.parse("q"), corpus, RetrievalConfig(m_prior_pool=2), priors)
        assert [c.chunk.section_label for c in out] == ["B", "C"]

    def test_empty_corpus(self):
        empty = Corpus(chunks=(), doc_freq={}, chunk_count=0, avg_chunk_tokens=0.0,
                       median_chunk_tokens=0, skipped_rows=0, _by_id={})
        with pytest.raises(EmptyCorpus):
            retrieve_candidates(QueryTerms.parse("x"), empty, RetrievalConfig(), PriorConfig())

    @pytest.mark.parametrize("kwargs", [{"k_lexical": 0}, {"m_prior_pool": -1}, {"bm25_k1": 0}, {"bm25_b": 1.5}])
    def test_config_bounds(self, kwargs):
        with pytest.raises(ValueError):
            RetrievalConfig(**kwargs)


docs_strategy = st.lists(
    st.tuples(st.sampled_from(["A", "B"]), st.lists(st.sampled_from("abcdefgh"), min_size=1, max_size=8)),
    min_size=1, max_size=20,
)


class TestRetrievalProperties:
    @given(docs_strategy, st.lists(st.sampled_from("abcz"), max_size=3), st.integers(1, 8))
    def test_recall_floor(self, docs, query, k):
        corpus = corpus_of([(s, " ".join(ws)) for s, ws in docs])
        q = QueryTerms.parse(" ".join(query))
        out = retrieve_candidates(q, corpus, RetrievalConfig(k_lexical=k, m_prior_pool=0), PriorConfig())
        matching = [c for c in corpus if set(tokenize(c.text)) & set(q.terms)]
        assert len(out) == min(k, len(matching))
        if out:
            # nothing left out scores strictly above the weakest admitted candidate
            floor = min(c.bm25 for c in out)
            chosen = {c.chunk.chunk_id for c in out}
            cfg = RetrievalConfig()
            for chunk in matching:
                if chunk.chunk_id not in chosen:
                    assert bm25_score(chunk, q, corpus, cfg) <= floor

    @given(docs_strategy, st.lists(st.sampled_from("abcz"), max_size=3), st.randoms(use_true_random=False))
    def test_permutation_invariant(self, docs, query, rnd):
        rows = [("d", s, i, " ".join(ws)) for i, (s, ws) in enumerate(docs)]
        shuffled = rows[:]
        rnd.shuffle(shuffled)
        priors = PriorConfig(section_boosts={"A": 1.0})
        cfg = RetrievalConfig(k_lexical=5, m_prior_pool=3)
        q = QueryTerms.parse(" ".join(query))
        a = retrieve_candidates(q, ingest_rows(rows), cfg, priors)
        b = retrieve_candidates(q, ingest_rows(shuffled), cfg, priors)
        assert [(c.chunk.chunk_id, c.tf) for c in a] == [(c.chunk.chunk_id, c.tf) for c in b]
        for x, y in zip(a, b):
            assert x.bm25 == pytest.approx(y.bm25, rel=1e-12)

    def test_fixture_candidates_stable(self, corpus, config):
        q = QueryTerms.parse("scope of work")
        runs = [retrieve_candidates(q, corpus, config.retrieval, config.priors.resolved(corpus)) for _ in range(3)]
        assert len({tuple(c.chunk.chunk_id for c in run) for run in runs}) == 1

    def test_random_instances_bm25_nonnegative(self):
        rng = random.Random(7)
        for _ in range(50):
            docs = [[rng.choice("abcde") for _ in range(rng.randint(1, 9))] for _ in range(rng.randint(1, 9))]
            corpus = corpus_of([("S", " ".join(ws)) for ws in docs])
            q = QueryTerms.parse(" ".join(rng.choice("abcdez") for _ in range(3)))
            assert all(bm25_score(c, q, corpus, RetrievalConfig()) >= 0 for c in corpus)
