"""Access to the bundled synthetic quote workbook (corpus, config, queries)."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from .config import EngineConfig, load_config
from .corpus import Corpus, ingest_rows, read_rows_jsonl

FIXTURE_QUERY = "scope of work"


def _path(name: str):
    return resources.files("ctxbubble.data").joinpath(name)


@lru_cache(maxsize=1)
def fixture_corpus() -> Corpus:
    with resources.as_file(_path("fixture_rows.jsonl")) as path:
        return ingest_rows(read_rows_jsonl(path))


def fixture_config() -> EngineConfig:
    with resources.as_file(_path("fixture_config.toml")) as path:
        return load_config(path)
