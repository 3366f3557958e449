"""Variant comparison, ablation, delta sweep and rejection reports.

All four canonical variants run through the same pipeline; they differ only
in which gates are switched on.
"""

from __future__ import annotations

import csv
import io
import statistics
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .bubble import ContextBubble, GateFlags, is_redundant
from .config import EngineConfig
from .corpus import Corpus
from .errors import EmptyQuerySet, QuerySetFormatError, UnknownVariant
from .pipeline import RunResult, run_query
from .trace import Reason, TraceRecord, percentages, rejection_counts

CATEGORIES = ("narrow_fact", "multi_facet", "cross_sheet", "table_dependent")
DEFAULT_DELTAS = (0.3, 0.4, 0.5, 0.6, 0.7)

# name -> (structure, diversity, section_budgets)
_CANONICAL = {
    "flat_topk": (False, False, False),
    "plus_structure": (True, False, False),
    "plus_diversity": (False, True, False),
    "full": (True, True, True),
}
VARIANT_NAMES = tuple(_CANONICAL)
VARIANT_LABELS = {
    "flat_topk": "Flat Top-K",
    "plus_structure": "+ Structure",
    "plus_diversity": "+ Diversity",
    "full": "Full Context Bubble",
}
ABLATION_LABELS = {
    "flat_topk": "Base",
    "plus_structure": "+ Structure",
    "plus_diversity": "+ Diversity",
    "full": "Full",
}


@dataclass(frozen=True)
class VariantSpec:
    name: str
    structure: bool
    diversity: bool
    section_budgets: bool
    token_budget: int = 800


def variant(name: str, token_budget: int = 800) -> VariantSpec:
    try:
        flags = _CANONICAL[name]
    except KeyError:
        raise UnknownVariant(f"unknown variant {name!r}; expected one of {', '.join(VARIANT_NAMES)}") from None
    return VariantSpec(name, *flags, token_budget=token_budget)


def canonical_variants(token_budget: int = 800) -> list[VariantSpec]:
    return [variant(name, token_budget) for name in VARIANT_NAMES]


def variant_config(base: EngineConfig, spec: VariantSpec) -> EngineConfig:
    return base.with_bubble(
        token_budget=spec.token_budget,
        gates=GateFlags(structure=spec.structure, redundancy=spec.diversity,
                        section_budgets=spec.section_budgets),
    )


@dataclass(frozen=True)
class MetricsRow:
    variant: str
    tokens_used: int
    unique_sections: int
    avg_overlap: float
    chunks_selected: int
    token_budget: int
    query: str = ""


def avg_overlap(bubble: ContextBubble) -> float:
    """Mean overlap at insertion, skipping the first chunk (always 0)."""
    overlaps = [ov for _, ov in bubble.selected[1:]]
    return sum(overlaps) / len(overlaps) if overlaps else 0.0


def metrics_for(result: RunResult, name: str) -> MetricsRow:
    bubble = result.bubble
    return MetricsRow(
        variant=name,
        tokens_used=bubble.total_tokens,
        unique_sections=len(bubble.sections),
        avg_overlap=avg_overlap(bubble),
        chunks_selected=len(bubble),
        token_budget=result.config.bubble.token_budget,
        query=result.query.raw,
    )


def run_variant(query: str, corpus: Corpus, spec: VariantSpec | str,
                base: EngineConfig) -> tuple[MetricsRow, RunResult]:
    if isinstance(spec, str):
        spec = variant(spec, base.bubble.token_budget)
    result = run_query(corpus, query, variant_config(base, spec))
    return metrics_for(result, spec.name), result


# -- query sets -------------------------------------------------------------------


@dataclass(frozen=True)
class QuerySet:
    entries: tuple[tuple[str, str], ...]

    @property
    def queries(self) -> list[str]:
        return [q for _, q in self.entries]

    def category_sizes(self) -> dict[str, int]:
        counts = Counter(c for c, _ in self.entries)
        return {c: counts.get(c, 0) for c in CATEGORIES}

    def __len__(self) -> int:
        return len(self.entries)


def parse_query_set(text: str, source: str = "<string>") -> QuerySet:
    entries = []
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        category, sep, query = line.partition(":")
        category, query = category.strip(), query.strip()
        if not sep:
            raise QuerySetFormatError(source, line_no, "expected 'category: query'")
        if category not in CATEGORIES:
            raise QuerySetFormatError(source, line_no, f"unknown category {category!r}")
        if not query:
            raise QuerySetFormatError(source, line_no, "empty query")
        entries.append((category, query))
    if not entries:
        raise EmptyQuerySet(f"{source}: no queries")
    return QuerySet(tuple(entries))


def load_query_set(path: str | Path) -> QuerySet:
    return parse_query_set(Path(path).read_text(encoding="utf-8"), str(path))


def bundled_query_set() -> QuerySet:
    text = resources.files("ctxbubble.data").joinpath("queries.txt").read_text(encoding="utf-8")
    return parse_query_set(text, "queries.txt")


def _queries(queries: QuerySet | Sequence[str] | str) -> list[str]:
    if isinstance(queries, str):
        return [queries]
    if isinstance(queries, QuerySet):
        return queries.queries
    return list(queries)


# -- reports ----------------------------------------------------------------------


@dataclass
class CompareReport:
    mode: str
    per_query: list[MetricsRow]
    averaged: list[dict]


def _empty_row(name: str, query: str, budget: int) -> MetricsRow:
    return MetricsRow(name, 0, 0, 0.0, 0, budget, query)


def average_rows(rows: Iterable[MetricsRow]) -> list[dict]:
    grouped: dict[str, list[MetricsRow]] = {}
    for row in rows:
        grouped.setdefault(row.variant, []).append(row)
    out = []
    for name, group in grouped.items():
        out.append({
            "variant": name,
            "token_budget": statistics.fmean(r.token_budget for r in group),
            "tokens_used": statistics.fmean(r.tokens_used for r in group),
            "unique_sections": statistics.fmean(r.unique_sections for r in group),
            "avg_overlap": statistics.fmean(r.avg_overlap for r in group),
            "chunks_selected": statistics.fmean(r.chunks_selected for r in group),
            "queries": len(group),
        })
    return out


def compare_variants(queries: QuerySet | Sequence[str] | str, corpus: Corpus, base: EngineConfig,
                     mode: str = "free", variants: Sequence[VariantSpec] | None = None) -> CompareReport:
    """Run every variant on every query.

    ``token_matched`` first runs the full variant, then reruns each baseline
    with its budget clamped to the tokens the full variant actually used on
    that query. The full row itself is the unclamped run, which already fits
    the clamp exactly.
    """
    if mode not in ("free", "token_matched"):
        raise ValueError(f"unknown compare mode {mode!r}")
    variants = list(variants or canonical_variants(base.bubble.token_budget))
    rows: list[MetricsRow] = []
    for query in _queries(queries):
        if mode == "free":
            rows.extend(run_variant(query, corpus, spec, base)[0] for spec in variants)
            continue
        full_spec = next((v for v in variants if v.name == "full"), variant("full", base.bubble.token_budget))
        full_row, _ = run_variant(query, corpus, full_spec, base)
        clamp = full_row.tokens_used
        for spec in variants:
            if spec.name == "full":
                rows.append(MetricsRow(**{**full_row.__dict__, "token_budget": clamp}))
            elif clamp == 0:
                rows.append(_empty_row(spec.name, query, 0))
            else:
                clamped = VariantSpec(spec.name, spec.structure, spec.diversity, spec.section_budgets, clamp)
                rows.append(run_variant(query, corpus, clamped, base)[0])
    return CompareReport(mode, rows, average_rows(rows))


def section_allocation(queries: QuerySet | Sequence[str] | str, corpus: Corpus, base: EngineConfig,
                       variants: Sequence[VariantSpec] | None = None) -> tuple[list[str], dict[str, dict[str, int]]]:
    """Tokens per bucket per variant (summed over the given queries)."""
    variants = list(variants or canonical_variants(base.bubble.token_budget))
    table: dict[str, dict[str, int]] = {v.name: {b: 0 for b in corpus.buckets} for v in variants}
    for query in _queries(queries):
        for spec in variants:
            _, result = run_variant(query, corpus, spec, base)
            for chunk in result.bubble.chunks:
                table[spec.name][chunk.bucket] += chunk.token_count
    totals = Counter()
    for alloc in table.values():
        totals.update(alloc)
    columns = sorted(corpus.buckets, key=lambda b: (-totals[b], b))
    return columns, {name: {b: alloc[b] for b in columns} for name, alloc in table.items()}


def ablation_grid(queries: QuerySet | Sequence[str] | str, corpus: Corpus, base: EngineConfig) -> list[dict]:
    report = compare_variants(queries, corpus, base, "free")
    rows = []
    for avg in report.averaged:
        spec = variant(avg["variant"])
        rows.append({
            "configuration": ABLATION_LABELS[spec.name],
            "variant": spec.name,
            "structure": spec.structure,
            "diversity": spec.diversity,
            "tokens": avg["tokens_used"],
            "sections": avg["unique_sections"],
            "avg_overlap": avg["avg_overlap"],
        })
    return rows


def redundancy_passes(records: Iterable[TraceRecord]) -> int:
    """Candidates whose overlap at their turn would pass the redundancy gate.

    Uses the overlap signal recorded on each first-pass gate record, so
    candidates stopped by an earlier gate still count.
    """
    passed: dict[str, bool] = {}
    for rec in records:
        details = rec.step_details
        if rec.stage in ("scoring", "slack") or "overlap" not in details:
            continue
        passed.setdefault(rec.chunk_id, not is_redundant(details["overlap"], details["threshold"]))
    return sum(passed.values())


def delta_sweep(queries: QuerySet | Sequence[str] | str, corpus: Corpus, base: EngineConfig,
                deltas: Sequence[float] = DEFAULT_DELTAS) -> list[dict]:
    """Full-variant runs over a grid of redundancy thresholds."""
    for d in deltas:
        if not 0.0 <= d <= 1.0:
            raise ValueError(f"delta {d} outside [0, 1]")
    rows = []
    full = variant("full", base.bubble.token_budget)
    for query in _queries(queries):
        for d in deltas:
            row, result = run_variant(query, corpus, full, base.with_bubble(delta=d))
            rows.append({
                "query": query,
                "delta": d,
                "passing_candidates": redundancy_passes(result.sink.records()),
                "candidates": len(result.ranked),
                "unique_sections": row.unique_sections,
                "tokens_used": row.tokens_used,
                "chunks_selected": row.chunks_selected,
            })
    return rows


def rejection_report(queries: QuerySet | Sequence[str] | str, corpus: Corpus,
                     base: EngineConfig) -> tuple[Counter, dict[str, float]]:
    counts: Counter = Counter()
    full = variant("full", base.bubble.token_budget)
    for query in _queries(queries):
        _, result = run_variant(query, corpus, full, base)
        counts.update(rejection_counts(result.sink.records()))
    return counts, percentages(counts)


def stability(queries: QuerySet | Sequence[str] | str, corpus: Corpus, base: EngineConfig,
              repeats: int = 3) -> dict[str, dict]:
    """Repeat every run and report the spread of tokens used (expected: zero)."""
    out = {}
    for spec in canonical_variants(base.bubble.token_budget):
        spreads = []
        for query in _queries(queries):
            tokens = [run_variant(query, corpus, spec, base)[0].tokens_used for _ in range(repeats)]
            spreads.append(statistics.pstdev(tokens))
        out[spec.name] = {"repeats": repeats, "max_std_tokens": max(spreads, default=0.0)}
    return out


# -- CSV rendering ----------------------------------------------------------------


def _f(x: float, digits: int = 4) -> str:
    return f"{x:.{digits}f}"


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def compare_csv(report: CompareReport) -> str:
    matched = report.mode == "token_matched"
    header = ["Variant"] + (["Token Budget"] if matched else []) + [
        "Tokens Used", "Unique Sections", "Avg Overlap", "Chunks Selected", "User Correctness"]
    rows = []
    for avg in report.averaged:
        row = [VARIANT_LABELS.get(avg["variant"], avg["variant"])]
        if matched:
            row.append(_f(avg["token_budget"], 2))
        row += [_f(avg["tokens_used"], 2), _f(avg["unique_sections"], 2), _f(avg["avg_overlap"]),
                _f(avg["chunks_selected"], 2), ""]
        rows.append(row)
    return _csv(header, rows)


def per_query_csv(rows: Sequence[MetricsRow]) -> str:
    return _csv(
        ["Query", "Variant", "Token Budget", "Tokens Used", "Unique Sections", "Avg Overlap", "Chunks Selected"],
        [[r.query, VARIANT_LABELS.get(r.variant, r.variant), r.token_budget, r.tokens_used,
          r.unique_sections, _f(r.avg_overlap), r.chunks_selected] for r in rows],
    )


def sections_csv(columns: Sequence[str], table: dict[str, dict[str, int]]) -> str:
    return _csv(["Variant", *columns, "Total"],
                [[VARIANT_LABELS.get(name, name), *(alloc[c] for c in columns), sum(alloc.values())]
                 for name, alloc in table.items()])


def ablation_csv(rows: Sequence[dict]) -> str:
    mark = {True: "✓", False: "✗"}
    return _csv(["Configuration", "Structure", "Diversity", "Tokens", "Sections", "Avg Overlap"],
                [[r["configuration"], mark[r["structure"]], mark[r["diversity"]], _f(r["tokens"], 2),
                  _f(r["sections"], 2), _f(r["avg_overlap"])] for r in rows])


def sweep_csv(rows: Sequence[dict]) -> str:
    return _csv(["Query", "Delta", "Passing Candidates", "Candidates", "Unique Sections", "Tokens Used",
                 "Chunks Selected"],
                [[r["query"], _f(r["delta"], 2), r["passing_candidates"], r["candidates"],
                  r["unique_sections"], r["tokens_used"], r["chunks_selected"]] for r in rows])


def rejections_csv(counts: Counter, pct: dict[str, float]) -> str:
    return _csv(["Rejection Reason", "Percentage of Candidates", "Count"],
                [[Reason(reason).label, _f(share, 2), counts[reason]] for reason, share in pct.items()])
