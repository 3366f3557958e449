"""Exception types raised across the engine.

Most subclass ``ValueError`` so callers that only care about bad input can
catch one thing.
"""

from __future__ import annotations


class AllRowsEmpty(ValueError):
    """No row survived normalization during ingestion."""


class DuplicatePosition(ValueError):
    """Two rows share the same (source_doc, section_label, row_number)."""


class EmptyCorpus(ValueError):
    pass


class FractionSumExceedsOne(ValueError):
    pass


class SinkClosed(RuntimeError):
    pass


class UnknownVariant(ValueError):
    pass


class EmptyQuerySet(ValueError):
    pass


class QuerySetFormatError(ValueError):
    def __init__(self, path: str, line_no: int, message: str) -> None:
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class ConfigError(ValueError):
    """Invalid engine configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"{key}: {message}")
        self.key = key
