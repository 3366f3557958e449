"""Query normalization and recall-oriented candidate generation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .corpus import Chunk, Corpus, tokenize
from .errors import EmptyCorpus

if TYPE_CHECKING:
    from .scoring import PriorConfig


@dataclass(frozen=True)
class QueryTerms:
    raw: str
    terms: tuple[str, ...]

    @classmethod
    def parse(cls, raw: str) -> QueryTerms:
        return cls(raw=raw, terms=tuple(tokenize(raw)))

    @property
    def distinct(self) -> tuple[str, ...]:
        # first-occurrence order keeps float summation order stable
        return tuple(dict.fromkeys(self.terms))


@dataclass(frozen=True)
class RetrievalConfig:
    k_lexical: int = 50
    m_prior_pool: int = 25
    bm25_k1: float = 1.2
    bm25_b: float = 0.75

    def __post_init__(self) -> None:
        if self.k_lexical < 1:
            raise ValueError("k_lexical must be >= 1")
        if self.m_prior_pool < 0:
            raise ValueError("m_prior_pool must be >= 0")
        if not self.bm25_k1 > 0:
            raise ValueError("bm25_k1 must be > 0")
        if not 0.0 <= self.bm25_b <= 1.0:
            raise ValueError("bm25_b must lie in [0, 1]")


@dataclass(frozen=True)
class Candidate:
    chunk: Chunk
    tf: int
    bm25: float


def term_frequency(chunk: Chunk, query: QueryTerms) -> int:
    """Occurrences of the distinct query terms in the chunk."""
    counts = chunk.term_counts
    return sum(counts[t] for t in query.distinct)


def idf(term: str, corpus: Corpus) -> float:
    df = corpus.doc_freq.get(term, 0)
    return math.log(1.0 + (corpus.chunk_count - df + 0.5) / (df + 0.5))


def bm25_score(chunk: Chunk, query: QueryTerms, corpus: Corpus, cfg: RetrievalConfig) -> float:
    k1, b = cfg.bm25_k1, cfg.bm25_b
    norm = k1 * (1.0 - b + b * chunk.token_count / corpus.avg_chunk_tokens)
    score = 0.0
    for term in query.distinct:
        f = chunk.term_counts[term]
        if f:
            score += idf(term, corpus) * (f * (k1 + 1.0)) / (f + norm)
    return score


def retrieve_candidates(
    query: QueryTerms,
    corpus: Corpus,
    cfg: RetrievalConfig,
    priors: PriorConfig,
) -> list[Candidate]:
    """Top BM25 matches plus a bounded pool of zero-tf, prior-boosted chunks.

    Lexical hits come first (bm25 desc, chunk_id asc), followed by the prior
    pool (prior desc, chunk_id asc).
    """
    from .scoring import structural_prior

    if not corpus.chunks:
        raise EmptyCorpus("cannot retrieve from an empty corpus")

    lexical: list[Candidate] = []
    zero_tf: list[tuple[float, Chunk]] = []
    for chunk in corpus.chunks:
        tf = term_frequency(chunk, query)
        if tf > 0:
            lexical.append(Candidate(chunk, tf, bm25_score(chunk, query, corpus, cfg)))
        elif cfg.m_prior_pool:
            prior = structural_prior(chunk, priors)
            if prior > 0:
                zero_tf.append((prior, chunk))

    lexical.sort(key=lambda c: (-c.bm25, c.chunk.chunk_id))
    zero_tf.sort(key=lambda p: (-p[0], p[1].chunk_id))
    out = lexical[: cfg.k_lexical]
    out.extend(Candidate(chunk, 0, 0.0) for _, chunk in zero_tf[: cfg.m_prior_pool])
    return out
