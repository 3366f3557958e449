"""Command-line entry point: ingest, build, eval, explain.

Exit codes: 0 success, 2 usage or config error, 3 data error, 4 lookup error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import evalharness as eh
from .config import EngineConfig, default_config_text, load_config
from .corpus import build_corpus, ingest_rows, load_corpus, read_rows_jsonl, save_corpus
from .errors import ConfigError, EmptyQuerySet, QuerySetFormatError
from .pipeline import run_query, write_run
from .trace import dump_json, explain, read_trace

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_LOOKUP = 0, 2, 3, 4
REPORTS = ("compare", "matched", "ablate", "sweep", "sections", "rejections")
ROW_SUFFIXES = {".jsonl", ".ndjson"}

log = logging.getLogger("ctxbubble")


class CommandError(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


def _load_engine_config(args: argparse.Namespace) -> EngineConfig:
    config = EngineConfig()
    if args.config:
        if not Path(args.config).is_file():
            raise CommandError(EXIT_USAGE, f"config file not found: {args.config}")
        try:
            config = load_config(args.config)
        except ConfigError as exc:
            raise CommandError(EXIT_USAGE, f"invalid config: {exc}") from exc
    try:
        if getattr(args, "budget", None) is not None:
            config = config.with_bubble(token_budget=args.budget)
        if getattr(args, "delta", None) is not None:
            config = config.with_bubble(delta=args.delta)
    except ValueError as exc:
        raise CommandError(EXIT_USAGE, f"invalid override: {exc}") from exc
    return config


def _load_corpus(path: str):
    if not Path(path).is_file():
        raise CommandError(EXIT_DATA, f"corpus not found: {path}")
    try:
        return load_corpus(path)
    except (ValueError, KeyError, TypeError) as exc:
        raise CommandError(EXIT_DATA, f"cannot read corpus {path}: {exc}") from exc


def cmd_ingest(args: argparse.Namespace) -> int:
    rows, texts = [], []
    for name in args.inputs:
        path = Path(name)
        if not path.is_file():
            raise CommandError(EXIT_USAGE, f"cannot read input: {path}")
        (rows if path.suffix.lower() in ROW_SUFFIXES else texts).append(path)
    try:
        corpus = build_corpus(rows, texts, max_chunk_tokens=args.max_chunk_tokens)
    except ValueError as exc:
        # AllRowsEmpty, DuplicatePosition and malformed row files
        raise CommandError(EXIT_DATA, str(exc)) from exc
    except (OSError, UnicodeDecodeError) as exc:
        raise CommandError(EXIT_USAGE, f"cannot read input: {exc}") from exc
    save_corpus(corpus, args.out)
    print(f"chunks {corpus.chunk_count}  sections {len(corpus.section_labels)}  "
          f"skipped {corpus.skipped_rows}  -> {args.out}")
    return EXIT_OK


def cmd_build(args: argparse.Namespace) -> int:
    config = _load_engine_config(args)
    corpus = _load_corpus(args.corpus)
    if args.variant:
        config = eh.variant_config(config, eh.variant(args.variant, config.bubble.token_budget))
    result = run_query(corpus, args.query, config)
    write_run(result, corpus, args.out)
    bubble = result.bubble
    flag = "  (empty bubble)" if not len(bubble) else ""
    print(f"tokens {bubble.total_tokens}/{config.bubble.token_budget}  sections {len(bubble.sections)}  "
          f"{len(bubble)} chunks  candidates {len(result.ranked)}{flag}")
    return EXIT_OK


def _query_set(args: argparse.Namespace) -> eh.QuerySet | list[str]:
    if args.query:
        return [args.query]
    if not args.query_set:
        return eh.bundled_query_set()
    if not Path(args.query_set).is_file():
        raise CommandError(EXIT_USAGE, f"query set not found: {args.query_set}")
    try:
        return eh.load_query_set(args.query_set)
    except (QuerySetFormatError, EmptyQuerySet) as exc:
        raise CommandError(EXIT_DATA, str(exc)) from exc


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_engine_config(args)
    corpus = _load_corpus(args.corpus)
    queries = _query_set(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n_queries = len(queries)
    summary: dict = {
        "report": args.report,
        "queries": n_queries,
        "config_digest": config.digest(),
        "token_budget": config.bubble.token_budget,
        "delta": config.bubble.delta,
        "avg_overlap_definition": "mean overlap at insertion over selected chunks after the first",
    }
    files: dict[str, str] = {}

    if args.report in ("compare", "matched"):
        mode = "free" if args.report == "compare" else "token_matched"
        report = eh.compare_variants(queries, corpus, config, mode)
        files[f"{args.report}.csv"] = eh.compare_csv(report)
        files[f"{args.report}_per_query.csv"] = eh.per_query_csv(report.per_query)
        summary["mode"] = mode
        summary["averaged"] = report.averaged
        if mode == "token_matched":
            summary["clamp_policy"] = "per query: baselines clamped to the full variant's realized tokens"
        summary["stability"] = eh.stability(queries, corpus, config, repeats=args.repeats)
    elif args.report == "ablate":
        rows = eh.ablation_grid(queries, corpus, config)
        files["ablation.csv"] = eh.ablation_csv(rows)
        summary["rows"] = rows
    elif args.report == "sweep":
        rows = eh.delta_sweep(queries, corpus, config, args.deltas)
        files["sweep.csv"] = eh.sweep_csv(rows)
        summary["deltas"] = list(args.deltas)
    elif args.report == "sections":
        columns, table = eh.section_allocation(queries, corpus, config)
        files["sections.csv"] = eh.sections_csv(columns, table)
        summary["sections"] = table
    elif args.report == "rejections":
        counts, pct = eh.rejection_report(queries, corpus, config)
        files["rejections.csv"] = eh.rejections_csv(counts, pct)
        summary["rejections"] = {"counts": dict(counts), "percentages": pct}

    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8", newline="\n")
    summary["files"] = sorted(files)
    (out / "summary.json").write_text(dump_json(summary), encoding="utf-8", newline="\n")
    print(f"{args.report}: {n_queries} queries -> {', '.join(sorted(files))} in {out}")
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    if not Path(args.trace).is_file():
        raise CommandError(EXIT_DATA, f"trace not found: {args.trace}")
    records = read_trace(args.trace)
    try:
        print(explain(records, args.chunk_id))
    except KeyError:
        raise CommandError(EXIT_LOOKUP, f"chunk id {args.chunk_id} not in {args.trace}") from None
    return EXIT_OK


def cmd_fixture(args: argparse.Namespace) -> int:
    """Write the bundled demo corpus, config and query set to a directory."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = resources.files("ctxbubble.data")
    rows_path = out / "fixture_rows.jsonl"
    rows_path.write_text(data.joinpath("fixture_rows.jsonl").read_text(encoding="utf-8"), encoding="utf-8")
    (out / "config.toml").write_text(data.joinpath("fixture_config.toml").read_text(encoding="utf-8"),
                                     encoding="utf-8")
    (out / "queries.txt").write_text(data.joinpath("queries.txt").read_text(encoding="utf-8"), encoding="utf-8")
    save_corpus(ingest_rows(read_rows_jsonl(rows_path)), out / "corpus.json")
    print(f"fixture written to {out}")
    return EXIT_OK


def _deltas(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values or any(not 0.0 <= v <= 1.0 for v in values):
        raise argparse.ArgumentTypeError("deltas must lie in [0, 1]")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxbubble", description=__doc__.splitlines()[0])
    parser.add_argument("--print-default-config", action="store_true",
                        help="print the default engine config (TOML) and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("ingest", help="build a corpus file from row (.jsonl) and text files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--max-chunk-tokens", type=int, default=200)
    p.set_defaults(func=cmd_ingest)

    def engine_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--corpus", required=True)
        p.add_argument("--config")
        p.add_argument("--out", required=True)
        p.add_argument("--budget", type=int, help="override the token budget")
        p.add_argument("--delta", type=float, help="override the redundancy threshold")

    p = sub.add_parser("build", help="build a context bubble for one query")
    engine_flags(p)
    p.add_argument("--query", required=True)
    p.add_argument("--variant", choices=eh.VARIANT_NAMES)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("eval", help="run an evaluation report over a query set")
    engine_flags(p)
    p.add_argument("--query-set")
    p.add_argument("--query", help="evaluate a single query instead of a query set")
    p.add_argument("--report", required=True, choices=REPORTS)
    p.add_argument("--deltas", type=_deltas, default=eh.DEFAULT_DELTAS)
    p.add_argument("--repeats", type=int, default=3, help="repeat count for the stability check")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="show the stage-by-stage trace of one chunk")
    p.add_argument("--trace", required=True)
    p.add_argument("--chunk-id", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("fixture", help="write the bundled demo corpus, config and queries")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_default_config:
        sys.stdout.write(default_config_text())
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"ctxbubble: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
