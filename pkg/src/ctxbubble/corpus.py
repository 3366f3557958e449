"""Chunks, corpora and ingestion.

A chunk is one retrieval unit: a spreadsheet row (pre-extracted into the
row interchange format) or a paragraph segment of a plain-text document.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import unicodedata
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from pathlib import Path, PurePath
from typing import Iterable, Mapping, Sequence

from .errors import AllRowsEmpty, DuplicatePosition

logger = logging.getLogger(__name__)

CORPUS_FORMAT_VERSION = 1

# Suffix of the source document -> bucket for unstructured text.
DEFAULT_SOURCE_BUCKETS: Mapping[str, str] = {
    ".txt": "Text",
    ".md": "Text",
    ".text": "Text",
    ".pdf": "PDF",
}
FALLBACK_BUCKET = "Other"

_PARAGRAPH_BREAK = re.compile(r"\n[^\S\n]*\n\s*")


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _strip_punct(word: str) -> str:
    start, end = 0, len(word)
    while start < end and _is_punct(word[start]):
        start += 1
    while end > start and _is_punct(word[end - 1]):
        end -= 1
    return word[start:end]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and strip edge punctuation.

    Internal punctuation survives ("below-grade", "u.s"). No stemming and
    no stopword removal.
    """
    terms = []
    for word in text.lower().split():
        term = _strip_punct(word)
        if term:
            terms.append(term)
    return terms


def count_tokens(text: str) -> int:
    return len(tokenize(text))


def make_chunk_id(source_doc: str, section_label: str, row_number: int, text: str) -> str:
    preimage = json.dumps([source_doc, section_label, int(row_number), text], ensure_ascii=False)
    return "c" + hashlib.sha256(preimage.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    text: str
    section_label: str
    bucket: str
    row_number: int
    source_doc: str
    token_count: int

    @cached_property
    def term_counts(self) -> Counter[str]:
        return Counter(tokenize(self.text))

    @cached_property
    def words(self) -> frozenset[str]:
        return frozenset(self.term_counts)

    def to_dict(self) -> dict:
        return asdict(self)


def assign_bucket(
    chunk: Chunk,
    *,
    structured: bool,
    rules: Mapping[str, str] = DEFAULT_SOURCE_BUCKETS,
) -> str:
    """Coarse budget group for a chunk.

    Structured rows budget per sheet, so the bucket is the section label.
    Unstructured chunks are classified by the suffix of their source
    document; anything unrecognised falls back to ``"Other"``.
    """
    if structured:
        return chunk.section_label
    suffix = PurePath(chunk.source_doc).suffix.lower()
    return rules.get(suffix, FALLBACK_BUCKET)


def _new_chunk(source_doc: str, section_label: str, row_number: int, text: str) -> Chunk:
    return Chunk(
        chunk_id=make_chunk_id(source_doc, section_label, row_number, text),
        text=text,
        section_label=section_label,
        bucket="",
        row_number=row_number,
        source_doc=source_doc,
        token_count=count_tokens(text),
    )


@dataclass(frozen=True)
class Corpus:
    """Immutable chunk collection with the statistics retrieval needs.

    Build one with :meth:`from_chunks`; the statistics are derived, never
    supplied by the caller.
    """

    chunks: tuple[Chunk, ...]
    doc_freq: Mapping[str, int]
    chunk_count: int
    avg_chunk_tokens: float
    median_chunk_tokens: int
    skipped_rows: int = 0
    _by_id: Mapping[str, Chunk] = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_chunks(cls, chunks: Iterable[Chunk], skipped_rows: int = 0) -> Corpus:
        chunks = tuple(chunks)
        if not chunks:
            raise AllRowsEmpty("corpus has no chunks")
        by_id: dict[str, Chunk] = {}
        positions: set[tuple[str, str, int]] = set()
        doc_freq: Counter[str] = Counter()
        for chunk in chunks:
            pos = (chunk.source_doc, chunk.section_label, chunk.row_number)
            if pos in positions:
                raise DuplicatePosition(f"duplicate row position {pos!r}")
            positions.add(pos)
            if chunk.chunk_id in by_id:
                raise DuplicatePosition(f"duplicate chunk id {chunk.chunk_id}")
            by_id[chunk.chunk_id] = chunk
            doc_freq.update(chunk.words)
        lengths = sorted(c.token_count for c in chunks)
        n = len(lengths)
        return cls(
            chunks=chunks,
            doc_freq=dict(sorted(doc_freq.items())),
            chunk_count=n,
            avg_chunk_tokens=sum(lengths) / n,
            median_chunk_tokens=lengths[(n - 1) // 2],
            skipped_rows=skipped_rows,
            _by_id=by_id,
        )

    def __len__(self) -> int:
        return self.chunk_count

    def __iter__(self):
        return iter(self.chunks)

    def get(self, chunk_id: str) -> Chunk:
        return self._by_id[chunk_id]

    @property
    def section_labels(self) -> list[str]:
        return sorted({c.section_label for c in self.chunks})

    @property
    def buckets(self) -> list[str]:
        return sorted({c.bucket for c in self.chunks})


Row = tuple[str, str, int, str]


def _row_chunks(rows: Iterable[Row]) -> tuple[list[Chunk], int]:
    chunks = []
    skipped = 0
    for source_doc, section_label, row_number, text in rows:
        text = (text or "").strip()
        if not tokenize(text):
            skipped += 1
            continue
        chunk = _new_chunk(source_doc, section_label, int(row_number), text)
        chunks.append(replace(chunk, bucket=assign_bucket(chunk, structured=True)))
    return chunks, skipped


def ingest_rows(rows: Iterable[Row]) -> Corpus:
    """Build a corpus from structured rows, one chunk per non-empty row."""
    chunks, skipped = _row_chunks(rows)
    if skipped:
        logger.info("skipped %d empty rows", skipped)
    if not chunks:
        raise AllRowsEmpty(f"no rows survived normalization ({skipped} skipped)")
    return Corpus.from_chunks(chunks, skipped_rows=skipped)


def ingest_text(
    source_doc: str,
    text: str,
    max_chunk_tokens: int,
    rules: Mapping[str, str] = DEFAULT_SOURCE_BUCKETS,
) -> list[Chunk]:
    """Chunk free text on blank lines, splitting long paragraphs by term count.

    Every segment of paragraph ``i`` is labelled ``"<source_doc>#<i>"``;
    row numbers run across the whole document.
    """
    if max_chunk_tokens < 1:
        raise ValueError("max_chunk_tokens must be >= 1")
    chunks: list[Chunk] = []
    paragraph_no = 0
    for paragraph in _PARAGRAPH_BREAK.split(text):
        words = paragraph.split()
        if not any(_strip_punct(w) for w in words):
            continue
        label = f"{source_doc}#{paragraph_no}"
        paragraph_no += 1
        segment: list[str] = []
        terms = 0
        for word in words:
            weight = 1 if _strip_punct(word) else 0
            if terms + weight > max_chunk_tokens:
                chunks.append(_text_chunk(source_doc, label, len(chunks), segment, rules))
                segment, terms = [], 0
            segment.append(word)
            terms += weight
        if terms:
            chunks.append(_text_chunk(source_doc, label, len(chunks), segment, rules))
    return chunks


def _text_chunk(source_doc: str, label: str, row_number: int, words: Sequence[str], rules) -> Chunk:
    chunk = _new_chunk(source_doc, label, row_number, " ".join(words))
    return replace(chunk, bucket=assign_bucket(chunk, structured=False, rules=rules))


# -- interchange files ---------------------------------------------------------

_ROW_FIELDS = ("source_doc", "section_label", "row_number", "text")


def read_rows_jsonl(path: str | Path) -> list[Row]:
    rows: list[Row] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            record = json.loads(line)
            missing = [k for k in _ROW_FIELDS if k not in record]
            if missing:
                raise ValueError(f"{path}:{line_no}: missing fields {missing}")
            rows.append((str(record["source_doc"]), str(record["section_label"]),
                         int(record["row_number"]), str(record["text"])))
    return rows


def build_corpus(row_files: Sequence[str | Path] = (), text_files: Sequence[str | Path] = (),
                 max_chunk_tokens: int = 200) -> Corpus:
    """Ingest any mix of row files and plain-text files into one corpus."""
    chunks: list[Chunk] = []
    skipped = 0
    for path in row_files:
        found, dropped = _row_chunks(read_rows_jsonl(path))
        chunks.extend(found)
        skipped += dropped
    for path in text_files:
        text = Path(path).read_text(encoding="utf-8")
        chunks.extend(ingest_text(Path(path).name, text, max_chunk_tokens))
    if not chunks:
        raise AllRowsEmpty(f"no chunks produced ({skipped} rows skipped)")
    return Corpus.from_chunks(chunks, skipped_rows=skipped)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    doc = {
        "format_version": CORPUS_FORMAT_VERSION,
        "statistics": {
            "chunk_count": corpus.chunk_count,
            "avg_chunk_tokens": corpus.avg_chunk_tokens,
            "median_chunk_tokens": corpus.median_chunk_tokens,
            "skipped_rows": corpus.skipped_rows,
            "doc_freq": dict(corpus.doc_freq),
        },
        "chunks": [c.to_dict() for c in corpus.chunks],
    }
    Path(path).write_text(json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


def load_corpus(path: str | Path) -> Corpus:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    version = doc.get("format_version")
    if version != CORPUS_FORMAT_VERSION:
        raise ValueError(f"unsupported corpus format_version {version!r}")
    chunks = [Chunk(**c) for c in doc["chunks"]]
    corpus = Corpus.from_chunks(chunks, skipped_rows=doc["statistics"].get("skipped_rows", 0))
    if corpus.chunk_count != doc["statistics"]["chunk_count"]:
        raise ValueError("corpus statistics do not match its chunks")
    return corpus
