"""Structure- and diversity-aware context bubble construction."""

from .bubble import BubbleConfig, ContextBubble, GateFlags, build_bubble
from .config import EngineConfig, load_config
from .corpus import Chunk, Corpus, ingest_rows, ingest_text, load_corpus, tokenize
from .pipeline import RunResult, run_query

__all__ = [
    "BubbleConfig",
    "Chunk",
    "ContextBubble",
    "Corpus",
    "EngineConfig",
    "GateFlags",
    "RunResult",
    "build_bubble",
    "ingest_rows",
    "ingest_text",
    "load_config",
    "load_corpus",
    "run_query",
    "tokenize",
]

__version__ = "0.1.0"
