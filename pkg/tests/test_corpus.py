from __future__ import annotations

import hashlib
import json
import statistics
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxbubble.corpus import (
    Corpus,
    assign_bucket,
    build_corpus,
    count_tokens,
    ingest_rows,
    ingest_text,
    load_corpus,
    make_chunk_id,
    read_rows_jsonl,
    save_corpus,
    tokenize,
)
from ctxbubble.errors import AllRowsEmpty, DuplicatePosition
from oracles import lower_median

# computed once from ("jobA", "Scope of Works", 0, "excavate footings") and frozen
GOLDEN_CHUNK_ID = "ca1201658ca3f7055"

words = st.text(alphabet=st.characters(categories=("L", "N", "P", "Zs")), max_size=60)


class TestTokenize:
    def test_empty(self):
        assert tokenize("") == []

    def test_trailing_colon_stripped(self):
        assert tokenize("Scope of Works:") == ["scope", "of", "works"]

    def test_internal_hyphen_kept(self):
        assert tokenize("Below-Grade  WORK") == ["below-grade", "work"]

    def test_unicode_punctuation_and_whitespace(self):
        assert tokenize("«Tanking» (lift pit). u.s.") == ["tanking", "lift", "pit", "u.s"]

    def test_punctuation_only_word_dropped(self):
        assert tokenize("a -- b ...") == ["a", "b"]

    @given(words)
    def test_idempotent(self, text):
        once = tokenize(text)
        assert tokenize(" ".join(once)) == once

    @given(words)
    def test_terms_are_lowercase_and_nonempty(self, text):
        for term in tokenize(text):
            assert term and term == term.lower() and not any(c.isspace() for c in term)


class TestCountTokens:
    @pytest.mark.parametrize("text, n", [("", 0), ("scope of works", 3), ("a a a a", 4)])
    def test_examples(self, text, n):
        assert count_tokens(text) == n

    @given(words)
    def test_matches_tokenizer(self, text):
        assert count_tokens(text) == len(tokenize(text))


class TestChunkId:
    def test_deterministic(self):
        assert make_chunk_id("d", "s", 1, "x y") == make_chunk_id("d", "s", 1, "x y")

    def test_row_number_in_preimage(self):
        assert make_chunk_id("d", "s", 3, "x") != make_chunk_id("d", "s", 4, "x")

    def test_golden(self):
        assert make_chunk_id("jobA", "Scope of Works", 0, "excavate footings") == GOLDEN_CHUNK_ID

    def test_reference_digest(self):
        preimage = json.dumps(["jobA", "Scope of Works", 0, "excavate footings"], ensure_ascii=False)
        expected = "c" + hashlib.sha256(preimage.encode()).hexdigest()[:16]
        assert make_chunk_id("jobA", "Scope of Works", 0, "excavate footings") == expected

    def test_field_boundaries_are_unambiguous(self):
        assert make_chunk_id("ab", "c", 0, "x") != make_chunk_id("a", "bc", 0, "x")


class TestIngestRows:
    def test_three_rows_two_sections(self):
        corpus = ingest_rows([
            ("jobA", "Scope of Works", 1, "excavate footings"),
            ("jobA", "Scope of Works", 2, "pour slab"),
            ("jobA", "Products", 1, "membrane"),
        ])
        assert corpus.chunk_count == 3
        assert corpus.section_labels == ["Products", "Scope of Works"]
        assert corpus.skipped_rows == 0

    def test_whitespace_row_skipped(self):
        corpus = ingest_rows([("d", "s", 1, "   \t"), ("d", "s", 2, "text here")])
        assert corpus.chunk_count == 1
        assert corpus.skipped_rows == 1

    def test_duplicate_position(self):
        with pytest.raises(DuplicatePosition):
            ingest_rows([("d", "s", 1, "one"), ("d", "s", 1, "two")])

    def test_all_empty(self):
        with pytest.raises(AllRowsEmpty):
            ingest_rows([("d", "s", 1, ""), ("d", "s", 2, " ... ")])

    def test_bucket_is_sheet(self):
        corpus = ingest_rows([("book.xlsx", "Scope of Works", 5, "excavate")])
        assert corpus.chunks[0].bucket == "Scope of Works"

    def test_statistics(self):
        corpus = ingest_rows([("d", "s", i, " ".join(["w"] * n)) for i, n in enumerate([3, 1, 4, 1, 5])])
        assert corpus.doc_freq == {"w": 5}
        assert corpus.median_chunk_tokens == 3
        assert corpus.avg_chunk_tokens == pytest.approx(14 / 5)

    def test_lookup(self):
        corpus = ingest_rows([("d", "s", 1, "alpha")])
        cid = corpus.chunks[0].chunk_id
        assert corpus.get(cid).text == "alpha"
        with pytest.raises(KeyError):
            corpus.get("nope")


row_lists = st.lists(
    st.tuples(st.sampled_from(["A", "B", "C"]), st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=12)),
    min_size=1, max_size=25,
)


class TestCorpusProperties:
    @given(row_lists)
    def test_doc_freq_matches_brute_force(self, spec):
        rows = [("doc", sec, i, " ".join(ws)) for i, (sec, ws) in enumerate(spec)]
        corpus = ingest_rows(rows)
        expected = Counter()
        for _, _, _, text in rows:
            expected.update(set(text.split()))
        assert dict(corpus.doc_freq) == dict(expected)
        assert corpus.chunk_count == len(rows)

    @given(row_lists)
    def test_token_counts_and_median(self, spec):
        rows = [("doc", sec, i, " ".join(ws)) for i, (sec, ws) in enumerate(spec)]
        corpus = ingest_rows(rows)
        lengths = [len(ws) for _, ws in spec]
        assert [c.token_count for c in corpus] == lengths
        assert corpus.median_chunk_tokens == lower_median(lengths)
        assert corpus.avg_chunk_tokens == pytest.approx(statistics.fmean(lengths))

    @settings(max_examples=30)
    @given(spec=row_lists)
    def test_round_trip(self, spec, tmp_path_factory):
        rows = [("doc", sec, i, " ".join(ws)) for i, (sec, ws) in enumerate(spec)]
        corpus = ingest_rows(rows)
        path = tmp_path_factory.mktemp("c") / "corpus.json"
        save_corpus(corpus, path)
        again = load_corpus(path)
        assert again.chunks == corpus.chunks
        assert dict(again.doc_freq) == dict(corpus.doc_freq)


class TestIngestText:
    def test_two_paragraphs(self):
        chunks = ingest_text("notes.txt", "first para here\n\nsecond para", max_chunk_tokens=50)
        assert [c.row_number for c in chunks] == [0, 1]
        assert [c.text for c in chunks] == ["first para here", "second para"]

    def test_split_by_term_count(self):
        text = " ".join(f"w{i}" for i in range(10))
        chunks = ingest_text("notes.txt", text, max_chunk_tokens=4)
        assert [c.token_count for c in chunks] == [4, 4, 2]
        assert len({c.section_label for c in chunks}) == 1

    def test_empty(self):
        assert ingest_text("notes.txt", "", max_chunk_tokens=4) == []

    def test_bucket_is_text(self):
        (chunk,) = ingest_text("notes.md", "hello world", max_chunk_tokens=10)
        assert chunk.bucket == "Text"

    def test_punctuation_does_not_count_toward_cap(self):
        chunks = ingest_text("n.txt", "a - b - c", max_chunk_tokens=2)
        assert [c.token_count for c in chunks] == [2, 1]

    @given(st.lists(st.lists(st.sampled_from(["x", "y", "z", "--"]), max_size=15), max_size=5),
           st.integers(1, 6))
    def test_no_terms_lost(self, paragraphs, cap):
        text = "\n\n".join(" ".join(p) for p in paragraphs)
        chunks = ingest_text("n.txt", text, max_chunk_tokens=cap)
        assert sum(c.token_count for c in chunks) == count_tokens(text)
        assert all(1 <= c.token_count <= cap for c in chunks)


class TestAssignBucket:
    def _chunk(self, source):
        return ingest_text(source, "some words", max_chunk_tokens=10)[0]

    def test_sheet_row(self):
        corpus = ingest_rows([("q.xlsx", "Scope of Works", 1, "x")])
        assert assign_bucket(corpus.chunks[0], structured=True) == "Scope of Works"

    def test_text(self):
        assert assign_bucket(self._chunk("a.txt"), structured=False) == "Text"

    def test_pdf(self):
        assert assign_bucket(self._chunk("a.PDF"), structured=False) == "PDF"

    def test_unknown_source(self):
        assert assign_bucket(self._chunk("a.bin"), structured=False) == "Other"

    def test_custom_rules(self):
        assert assign_bucket(self._chunk("a.log"), structured=False, rules={".log": "Logs"}) == "Logs"


def test_build_corpus_mixes_rows_and_text(tmp_path):
    rows = tmp_path / "rows.jsonl"
    rows.write_text(json.dumps({"source_doc": "q.xlsx", "section_label": "Products", "row_number": 2,
                                "text": "membrane"}) + "\n")
    text = tmp_path / "spec.txt"
    text.write_text("general notes\n\nmore notes")
    corpus = build_corpus([rows], [text])
    assert corpus.buckets == ["Products", "Text"]
    assert corpus.chunk_count == 3
    assert read_rows_jsonl(rows)[0] == ("q.xlsx", "Products", 2, "membrane")


def test_corpus_rejects_empty():
    with pytest.raises(AllRowsEmpty):
        Corpus.from_chunks([])
