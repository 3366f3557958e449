"""One query end to end: retrieve, score, build the bubble, assemble artifacts."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .bubble import ContextBubble, build_bubble
from .config import EngineConfig
from .corpus import Corpus
from .retrieval import Candidate, QueryTerms, retrieve_candidates
from .scoring import CORPUS_MEDIAN, PriorConfig, ScoredCandidate, rank_candidates, score_candidate
from .trace import AuditLog, Manifest, TraceSink, emit

GREEDY_POLICY = "continue_scan"


@dataclass
class RunResult:
    query: QueryTerms
    config: EngineConfig
    theta: int
    candidates: list[Candidate]
    ranked: list[ScoredCandidate]
    bubble: ContextBubble
    sink: TraceSink

    @property
    def tokens_used(self) -> int:
        return self.bubble.total_tokens


def run_query(corpus: Corpus, query: str, config: EngineConfig) -> RunResult:
    terms = QueryTerms.parse(query)
    structure = config.bubble.gates.structure
    priors = config.priors.resolved(corpus)
    # lexical-only variants see no priors, so the zero-tf prior pool stays empty
    retrieval_priors = priors if structure else PriorConfig(theta=priors.theta)
    candidates = retrieve_candidates(terms, corpus, config.retrieval, retrieval_priors)
    ranked = rank_candidates([score_candidate(c, priors, structure=structure) for c in candidates])
    sink = TraceSink()
    bubble = build_bubble(ranked, config.bubble, sink)
    return RunResult(terms, config, priors.theta, candidates, ranked, bubble, sink)


def bubble_text(bubble: ContextBubble) -> str:
    parts = []
    for sc, _ in bubble.selected:
        chunk = sc.chunk
        parts.append(f"[{chunk.section_label} | {chunk.chunk_id} | {chunk.token_count}]\n{chunk.text}\n")
    return "\n".join(parts)


def make_manifest(result: RunResult, created_at: str | None = None) -> Manifest:
    bubble = result.bubble
    covered: list[str] = []
    for chunk in bubble.chunks:
        if chunk.section_label not in covered:
            covered.append(chunk.section_label)
    return Manifest(
        query=result.query.raw,
        config_digest=result.config.digest(),
        selected=[
            {"chunk_id": c.chunk_id, "sheet_name": c.section_label, "token_count": c.token_count,
             "rank": bubble.ranks[c.chunk_id]}
            for c in bubble.chunks
        ],
        total_tokens=bubble.total_tokens,
        sections_covered=covered,
        created_at=created_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


def make_audit(result: RunResult, corpus: Corpus) -> AuditLog:
    cfg = result.config.bubble
    gates = cfg.gates
    return AuditLog(
        slack_policy=cfg.slack_policy if gates.section_budgets else None,
        section_caps=dict(result.bubble.section_caps),
        theta={
            "value": result.theta,
            "source": "corpus_median" if result.config.priors.theta == CORPUS_MEDIAN else "config",
        },
        gates={"structure": gates.structure, "redundancy": gates.redundancy,
               "section_budgets": gates.section_budgets},
        skip_counters={"empty_rows_skipped": corpus.skipped_rows},
        extra={
            "greedy_policy": GREEDY_POLICY,
            "gate_order": ["relevance", "selection_cap", "global_budget", "section_budget", "redundancy"],
            "slack_spent": result.bubble.slack_spent,
            "candidates": len(result.ranked),
            "selected": len(result.bubble),
            "config": result.config.to_dict(),
            "config_digest": result.config.digest(),
        },
    )


def write_run(result: RunResult, corpus: Corpus, out_dir: str | Path,
              created_at: str | None = None) -> dict[str, Path]:
    return emit(result.sink, out_dir, make_manifest(result, created_at), make_audit(result, corpus),
                bubble_text(result.bubble))
