"""Retrieval trace, manifest and audit log.

Every candidate gets one record per pipeline stage it reached, and every
record carries the chunk's final verdict, so a trace file alone is enough
to explain (and replay) a selection.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import SinkClosed
from .scoring import ScoredCandidate

STAGES = ("scoring", "relevance", "cap", "global_budget", "section_budget", "redundancy", "slack")
_STAGE_ORDER = {s: i for i, s in enumerate(STAGES)}

PASS, FAIL = "pass", "fail"
SELECTED, REJECTED = "selected", "rejected"


class Reason(str, Enum):
    PASSED = "passed_all_gates"
    LOW_RELEVANCE = "low_relevance"
    SELECTION_CAP = "selection_cap"
    BUDGET = "budget_exceeded"
    SECTION_BUDGET = "section_budget_exceeded"
    REDUNDANT = "too_redundant"

    @property
    def text(self) -> str:
        return self.value.replace("_", " ")

    @property
    def label(self) -> str:
        return _REPORT_LABELS[self]


_REPORT_LABELS = {
    Reason.PASSED: "Passed All Gates",
    Reason.REDUNDANT: "Redundancy (Overlap ≥ δ)",
    Reason.BUDGET: "Token Budget Exceeded",
    Reason.SECTION_BUDGET: "Section Budget Exceeded",
    Reason.LOW_RELEVANCE: "Low Relevance",
    Reason.SELECTION_CAP: "Selection Cap Reached",
}


@dataclass(frozen=True)
class TraceRecord:
    chunk_id: str
    sheet_name: str
    bucket: str
    row_number: int
    token_count: int
    tf: float
    boost: float
    len_penalty: float
    score_raw: float
    score_final: float
    stage: str
    step_decision: str
    final_decision: str
    final_reason: str
    step_details: Mapping[str, Any]

    def to_json(self) -> str:
        return json.dumps(_fmt(asdict(self)), sort_keys=True, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> TraceRecord:
        return cls(**{f.name: d[f.name] for f in fields(cls)})


TRACE_FIELDS = tuple(f.name for f in fields(TraceRecord))


def _fmt(value: Any) -> Any:
    """Fix float formatting: at most 6 decimals, no negative zero."""
    if isinstance(value, float):
        value = round(value, 6)
        return 0.0 if value == 0 else value
    if isinstance(value, dict):
        return {k: _fmt(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_fmt(v) for v in value]
    return value


class TraceSink:
    """Single-writer collector for one query's trace."""

    def __init__(self) -> None:
        self._rows: list[tuple[int, int, int, ScoredCandidate, str, str, dict]] = []
        self._verdicts: dict[str, tuple[str, Reason]] = {}
        self.closed = False

    def record(self, scored: ScoredCandidate, rank: int, stage: str, decision: str,
               details: Mapping[str, Any] | None = None) -> None:
        if self.closed:
            raise SinkClosed("trace sink is closed")
        if stage not in _STAGE_ORDER:
            raise ValueError(f"unknown stage {stage!r}")
        self._rows.append((rank, _STAGE_ORDER[stage], len(self._rows), scored, stage, decision,
                           dict(details or {})))

    def verdict(self, chunk_id: str, decision: str, reason: Reason) -> None:
        if self.closed:
            raise SinkClosed("trace sink is closed")
        self._verdicts[chunk_id] = (decision, Reason(reason))

    def close(self) -> None:
        self.closed = True

    def records(self) -> list[TraceRecord]:
        out = []
        for _, _, _, sc, stage, decision, details in sorted(self._rows, key=lambda r: r[:3]):
            chunk = sc.chunk
            final_decision, reason = self._verdicts[chunk.chunk_id]
            out.append(TraceRecord(
                chunk_id=chunk.chunk_id,
                sheet_name=chunk.section_label,
                bucket=chunk.bucket,
                row_number=chunk.row_number,
                token_count=chunk.token_count,
                tf=float(sc.tf),
                boost=sc.prior,
                len_penalty=sc.len_penalty,
                score_raw=sc.score_raw,
                score_final=sc.score_final,
                stage=stage,
                step_decision=decision,
                final_decision=final_decision,
                final_reason=reason.value,
                step_details=details,
            ))
        return out


@dataclass
class Manifest:
    query: str
    config_digest: str
    selected: list[dict]
    total_tokens: int
    sections_covered: list[str]
    created_at: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AuditLog:
    slack_policy: str | None
    section_caps: dict[str, int]
    theta: dict
    gates: dict[str, bool]
    skip_counters: dict[str, int]
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        extra = d.pop("extra")
        d.update(extra)
        return d


def dump_json(doc: Mapping[str, Any]) -> str:
    return json.dumps(_fmt(dict(doc)), sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def write_trace(records: Iterable[TraceRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_trace(path: str | Path) -> list[TraceRecord]:
    with open(path, encoding="utf-8") as fh:
        return [TraceRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


def emit(sink: TraceSink, out_dir: str | Path, manifest: Manifest, audit: AuditLog,
         bubble_text: str) -> dict[str, Path]:
    """Write the four run artifacts and return their paths."""
    sink.close()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "bubble": out / "bubble.txt",
        "manifest": out / "manifest.json",
        "trace": out / "trace.jsonl",
        "audit": out / "audit.json",
    }
    paths["bubble"].write_text(bubble_text, encoding="utf-8", newline="\n")
    paths["manifest"].write_text(dump_json(manifest.to_dict()), encoding="utf-8", newline="\n")
    write_trace(sink.records(), paths["trace"])
    paths["audit"].write_text(dump_json(audit.to_dict()), encoding="utf-8", newline="\n")
    return paths


def final_verdicts(records: Iterable[TraceRecord]) -> dict[str, tuple[str, str]]:
    verdicts: dict[str, tuple[str, str]] = {}
    for rec in records:
        seen = verdicts.setdefault(rec.chunk_id, (rec.final_decision, rec.final_reason))
        if seen != (rec.final_decision, rec.final_reason):
            raise ValueError(f"conflicting verdicts for chunk {rec.chunk_id}")
    return verdicts


def rejection_counts(records: Iterable[TraceRecord]) -> Counter[str]:
    return Counter(reason for decision, reason in final_verdicts(records).values()
                   if decision == REJECTED)


def percentages(counts: Mapping[str, int]) -> dict[str, float]:
    total = sum(counts.values())
    if not total:
        return {}
    return {reason: 100.0 * n / total for reason, n in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))}


def rejection_breakdown(records: Iterable[TraceRecord]) -> dict[str, float]:
    """Percentage of rejected candidates per final reason (empty if none)."""
    return percentages(rejection_counts(records))


def explain(records: Iterable[TraceRecord], chunk_id: str) -> str:
    mine = [r for r in records if r.chunk_id == chunk_id]
    if not mine:
        raise KeyError(chunk_id)
    head = mine[0]
    lines = [
        f"chunk {head.chunk_id}  sheet={head.sheet_name!r}  bucket={head.bucket!r}  row={head.row_number}",
        f"tokens {head.token_count}  tf {head.tf:g}  boost {head.boost:g}  "
        f"len_penalty {head.len_penalty:.4f}  score_raw {head.score_raw:.4f}  score_final {head.score_final:.4f}",
    ]
    overlap = threshold = None
    for rec in mine:
        details = ", ".join(f"{k}={_show(v)}" for k, v in sorted(rec.step_details.items()))
        lines.append(f"  {rec.stage:<15} {rec.step_decision:<4}  {details}")
        overlap = rec.step_details.get("overlap", overlap)
        threshold = rec.step_details.get("threshold", threshold)
    if overlap is not None:
        delta = "n/a" if threshold is None else f"{threshold:.2f}"
        lines.append(f"overlap {overlap:.2f}  threshold δ {delta}")
    lines.append(f"{head.final_decision}: {Reason(head.final_reason).text}")
    return "\n".join(lines)


def _show(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)
