"""Structural priors, length penalty and final relevance score."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence, Union

from .corpus import Chunk, Corpus, tokenize
from .retrieval import Candidate

CORPUS_MEDIAN = "corpus-median"

Theta = Union[int, str]


@dataclass(frozen=True)
class PriorConfig:
    section_boosts: Mapping[str, float] = field(default_factory=dict)
    keyword_boosts: Mapping[str, float] = field(default_factory=dict)
    theta: Theta = CORPUS_MEDIAN

    def __post_init__(self) -> None:
        normalized = {}
        for keyword, boost in self.keyword_boosts.items():
            terms = tokenize(keyword)
            if len(terms) != 1:
                raise ValueError(f"keyword boost {keyword!r} must normalize to exactly one term")
            normalized[terms[0]] = float(boost)
        object.__setattr__(self, "keyword_boosts", normalized)
        object.__setattr__(self, "section_boosts", {k: float(v) for k, v in self.section_boosts.items()})
        if self.theta != CORPUS_MEDIAN:
            if isinstance(self.theta, bool) or not isinstance(self.theta, int) or self.theta < 1:
                raise ValueError(f"theta must be a positive integer or {CORPUS_MEDIAN!r}")

    def resolve_theta(self, corpus: Corpus) -> int:
        if self.theta == CORPUS_MEDIAN:
            return max(1, corpus.median_chunk_tokens)
        return int(self.theta)

    def resolved(self, corpus: Corpus) -> PriorConfig:
        return replace(self, theta=self.resolve_theta(corpus))


@dataclass(frozen=True)
class ScoredCandidate:
    candidate: Candidate
    prior: float
    len_penalty: float
    score_raw: float
    score_final: float

    @property
    def chunk(self) -> Chunk:
        return self.candidate.chunk

    @property
    def chunk_id(self) -> str:
        return self.candidate.chunk.chunk_id

    @property
    def tf(self) -> int:
        return self.candidate.tf


def structural_prior(chunk: Chunk, cfg: PriorConfig) -> float:
    prior = cfg.section_boosts.get(chunk.section_label, 0.0)
    words = chunk.words
    for keyword, boost in cfg.keyword_boosts.items():
        if keyword in words:
            prior += boost
    return prior


def length_penalty(token_count: int, theta: int) -> float:
    if theta < 1:
        raise ValueError("theta must be >= 1")
    return 1.0 / (1.0 + token_count / theta)


def score_candidate(candidate: Candidate, cfg: PriorConfig, *, structure: bool = True) -> ScoredCandidate:
    """Combine tf, prior and length penalty into the final score.

    With ``structure=False`` the score is the bare term frequency: prior 0
    and penalty 1, which is how the lexical-only baselines rank.
    """
    if not structure:
        tf = float(candidate.tf)
        return ScoredCandidate(candidate, 0.0, 1.0, tf, tf)
    if not isinstance(cfg.theta, int):
        raise ValueError("theta must be resolved before scoring")
    prior = structural_prior(candidate.chunk, cfg)
    penalty = length_penalty(candidate.chunk.token_count, cfg.theta)
    raw = candidate.tf + prior
    return ScoredCandidate(candidate, prior, penalty, raw, raw * penalty)


def rank_candidates(scored: Sequence[ScoredCandidate]) -> list[ScoredCandidate]:
    return sorted(scored, key=lambda s: (-s.score_final, s.chunk_id))
