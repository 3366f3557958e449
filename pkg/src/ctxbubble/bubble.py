"""Gated greedy construction of the context bubble.

Candidates are scanned once in rank order. Each one meets five gates in a
fixed order (relevance, selection cap, global budget, section budget,
redundancy) and is admitted only if all active gates pass; a failure skips
the candidate and scanning continues. Under the ``slack_pool`` policy a
second pass gives candidates that failed only their section budget another
chance against the tokens nobody spent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence, Union

from .corpus import Chunk
from .errors import FractionSumExceedsOne
from .scoring import ScoredCandidate
from .trace import FAIL, PASS, REJECTED, SELECTED, Reason, TraceSink

UNIFORM = "uniform"
STRICT = "strict"
SLACK_POOL = "slack_pool"
SLACK_POLICIES = (STRICT, SLACK_POOL)

GATES = ("relevance", "selection_cap", "global_budget", "section_budget", "redundancy")
GATE_STAGE = {
    "relevance": "relevance",
    "selection_cap": "cap",
    "global_budget": "global_budget",
    "section_budget": "section_budget",
    "redundancy": "redundancy",
}
GATE_REASON = {
    "relevance": Reason.LOW_RELEVANCE,
    "selection_cap": Reason.SELECTION_CAP,
    "global_budget": Reason.BUDGET,
    "section_budget": Reason.SECTION_BUDGET,
    "redundancy": Reason.REDUNDANT,
}

Fractions = Union[Mapping[str, float], str]


@dataclass(frozen=True)
class GateFlags:
    structure: bool = True
    redundancy: bool = True
    section_budgets: bool = True


@dataclass(frozen=True)
class BubbleConfig:
    token_budget: int = 800
    max_chunks: int = 10
    delta: float = 0.55
    section_fractions: Fractions = UNIFORM
    slack_policy: str = STRICT
    relevance_floor: float = 0.0
    gates: GateFlags = field(default_factory=GateFlags)

    def __post_init__(self) -> None:
        if self.token_budget < 1:
            raise ValueError("token_budget must be >= 1")
        if self.max_chunks < 1:
            raise ValueError("max_chunks must be >= 1")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if self.slack_policy not in SLACK_POLICIES:
            raise ValueError(f"slack_policy must be one of {SLACK_POLICIES}")
        if isinstance(self.section_fractions, str):
            if self.section_fractions != UNIFORM:
                raise ValueError(f"section_fractions must be a mapping or {UNIFORM!r}")
        else:
            _check_fractions(self.section_fractions)


def _check_fractions(fractions: Mapping[str, float]) -> None:
    for bucket, rho in fractions.items():
        if not 0.0 <= rho <= 1.0:
            raise ValueError(f"section fraction for {bucket!r} must lie in [0, 1]")
    if sum(_exact(r) for r in fractions.values()) > 1:
        raise FractionSumExceedsOne(f"section fractions sum to {math.fsum(fractions.values())}")


def _exact(rho: float) -> Fraction:
    # decimal literal as written, so 0.29 * 800 floors to 232 rather than 231
    return Fraction(repr(float(rho)))


def resolve_section_caps(buckets: Iterable[str], cfg: BubbleConfig) -> dict[str, int]:
    buckets = sorted(set(buckets))
    budget = cfg.token_budget
    if cfg.section_fractions == UNIFORM:
        if not buckets:
            return {}
        cap = budget // len(buckets)
        return {b: cap for b in buckets}
    fractions = cfg.section_fractions
    _check_fractions(fractions)
    caps = {b: math.floor(_exact(rho) * budget) for b, rho in fractions.items()}
    for b in buckets:
        caps.setdefault(b, 0)
    return dict(sorted(caps.items()))


@dataclass
class ContextBubble:
    selected: list[tuple[ScoredCandidate, float]] = field(default_factory=list)
    total_tokens: int = 0
    section_tokens: dict[str, int] = field(default_factory=dict)
    word_set: set[str] = field(default_factory=set)
    slack_spent: int = 0
    section_caps: dict[str, int] = field(default_factory=dict)
    ranks: dict[str, int] = field(default_factory=dict)

    def add(self, scored: ScoredCandidate, overlap_at_selection: float, rank: int,
            slack_charge: int = 0) -> None:
        chunk = scored.chunk
        self.selected.append((scored, overlap_at_selection))
        self.total_tokens += chunk.token_count
        self.section_tokens[chunk.bucket] = self.section_tokens.get(chunk.bucket, 0) + chunk.token_count
        self.word_set.update(chunk.words)
        self.slack_spent += slack_charge
        self.ranks[chunk.chunk_id] = rank

    @property
    def chunks(self) -> list[Chunk]:
        return [sc.chunk for sc, _ in self.selected]

    @property
    def sections(self) -> list[str]:
        return sorted({sc.chunk.section_label for sc, _ in self.selected})

    def __len__(self) -> int:
        return len(self.selected)


@dataclass(frozen=True)
class GateOutcome:
    decision: str
    gate: str | None
    overlap: float
    details: Mapping[str, Mapping[str, Any]]

    @property
    def passed(self) -> bool:
        return self.decision == PASS


def overlap(chunk: Chunk, bubble: ContextBubble) -> float:
    """Share of the chunk's distinct words already present in the bubble."""
    words = chunk.words
    if not words or not bubble.word_set:
        return 0.0
    return len(words & bubble.word_set) / len(words)


def is_redundant(overlap_value: float, delta: float) -> bool:
    """Overlap at or above delta; a chunk sharing no words is never redundant."""
    return overlap_value > 0.0 and overlap_value >= delta


def apply_gates(cand: ScoredCandidate, bubble: ContextBubble, cfg: BubbleConfig,
                budgets: Mapping[str, int]) -> GateOutcome:
    """Evaluate every active gate; the outcome names the first one that fails.

    Signals are computed for all gates, including those after the first
    failure, so the trace can show them.
    """
    chunk = cand.chunk
    t = chunk.token_count
    ov = overlap(chunk, bubble)
    shared = {"overlap": ov, "threshold": cfg.delta}
    section_used = bubble.section_tokens.get(chunk.bucket, 0)
    cap = budgets.get(chunk.bucket, 0)

    checks: dict[str, tuple[bool, dict]] = {
        "relevance": (cand.score_final >= cfg.relevance_floor,
                      {"score_final": cand.score_final, "relevance_floor": cfg.relevance_floor}),
        "selection_cap": (len(bubble) < cfg.max_chunks,
                          {"selected": len(bubble), "max_chunks": cfg.max_chunks}),
        "global_budget": (bubble.total_tokens + t <= cfg.token_budget,
                          {"total_tokens": bubble.total_tokens, "token_count": t,
                           "token_budget": cfg.token_budget}),
    }
    if cfg.gates.section_budgets:
        checks["section_budget"] = (section_used + t <= cap,
                                    {"bucket": chunk.bucket, "section_tokens": section_used,
                                     "token_count": t, "section_cap": cap})
    if cfg.gates.redundancy:
        checks["redundancy"] = (not is_redundant(ov, cfg.delta), {})

    details = {}
    failed = None
    for gate, (ok, signals) in checks.items():
        details[gate] = {**signals, **shared, "decision": PASS if ok else FAIL}
        if not ok and failed is None:
            failed = gate
    return GateOutcome(FAIL if failed else PASS, failed, ov, details)


def build_bubble(ranked: Sequence[ScoredCandidate], cfg: BubbleConfig,
                 trace: TraceSink | None = None) -> ContextBubble:
    trace = trace if trace is not None else TraceSink()
    caps: dict[str, int] = {}
    if cfg.gates.section_budgets and ranked:
        caps = resolve_section_caps((sc.chunk.bucket for sc in ranked), cfg)
    bubble = ContextBubble(section_caps=caps)

    deferred: list[tuple[int, ScoredCandidate]] = []
    for rank, sc in enumerate(ranked, 1):
        trace.record(sc, rank, "scoring", PASS, {
            "tf": sc.tf, "prior": sc.prior, "bm25": sc.candidate.bm25,
            "len_penalty": sc.len_penalty, "score_final": sc.score_final,
        })
        outcome = apply_gates(sc, bubble, cfg, caps)
        for gate, details in outcome.details.items():
            trace.record(sc, rank, GATE_STAGE[gate], details["decision"], details)
            if gate == outcome.gate:
                break
        if outcome.passed:
            bubble.add(sc, outcome.overlap, rank)
            trace.verdict(sc.chunk_id, SELECTED, Reason.PASSED)
            continue
        trace.verdict(sc.chunk_id, REJECTED, GATE_REASON[outcome.gate])
        if (cfg.slack_policy == SLACK_POOL and outcome.gate == "section_budget"
                and outcome.details.get("redundancy", {"decision": PASS})["decision"] == PASS):
            deferred.append((rank, sc))

    for rank, sc in deferred:
        _slack_pass(rank, sc, bubble, cfg, trace)
    return bubble


def _slack_pass(rank: int, sc: ScoredCandidate, bubble: ContextBubble, cfg: BubbleConfig,
                trace: TraceSink) -> None:
    chunk = sc.chunk
    t = chunk.token_count
    ov = overlap(chunk, bubble)
    section_used = bubble.section_tokens.get(chunk.bucket, 0)
    cap = bubble.section_caps.get(chunk.bucket, 0)
    slack_available = cfg.token_budget - bubble.total_tokens
    # only the part above the bucket's own cap is drawn from the slack pool
    charge = section_used + t - max(cap, section_used)
    ok_cap = len(bubble) < cfg.max_chunks
    ok_budget = t <= slack_available
    ok_redundancy = not cfg.gates.redundancy or not is_redundant(ov, cfg.delta)
    ok = ok_cap and ok_budget and ok_redundancy
    trace.record(sc, rank, "slack", PASS if ok else FAIL, {
        "overlap": ov, "threshold": cfg.delta,
        "selected": len(bubble), "max_chunks": cfg.max_chunks,
        "total_tokens": bubble.total_tokens, "token_count": t, "token_budget": cfg.token_budget,
        "slack_available": slack_available, "slack_charge": charge if ok else 0,
        "bucket": chunk.bucket, "section_tokens": section_used, "section_cap": cap,
        "decision": PASS if ok else FAIL,
    })
    if ok:
        bubble.add(sc, ov, rank, slack_charge=charge)
        trace.verdict(sc.chunk_id, SELECTED, Reason.PASSED)
