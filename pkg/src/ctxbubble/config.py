"""Engine configuration: one TOML document with retrieval, priors and bubble tables."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .bubble import UNIFORM, BubbleConfig, GateFlags
from .errors import ConfigError
from .retrieval import RetrievalConfig
from .scoring import PriorConfig

_RETRIEVAL_KEYS = {"k_lexical": "k_lexical", "m_prior_pool": "m_prior_pool", "k1": "bm25_k1", "b": "bm25_b"}
_PRIOR_KEYS = {"section_boosts", "keyword_boosts", "theta"}
_BUBBLE_KEYS = {"token_budget", "max_chunks", "delta", "slack_policy", "section_fractions",
                "relevance_floor", "gates"}
_GATE_KEYS = {"structure", "redundancy", "section_budgets"}


@dataclass(frozen=True)
class EngineConfig:
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    priors: PriorConfig = field(default_factory=PriorConfig)
    bubble: BubbleConfig = field(default_factory=BubbleConfig)

    def with_bubble(self, **changes: Any) -> EngineConfig:
        return replace(self, bubble=replace(self.bubble, **changes))

    def with_gates(self, **flags: bool) -> EngineConfig:
        return self.with_bubble(gates=replace(self.bubble.gates, **flags))

    def to_dict(self) -> dict:
        r, p, b = self.retrieval, self.priors, self.bubble
        return {
            "retrieval": {"k_lexical": r.k_lexical, "m_prior_pool": r.m_prior_pool,
                          "k1": r.bm25_k1, "b": r.bm25_b},
            "priors": {"theta": p.theta, "section_boosts": dict(p.section_boosts),
                       "keyword_boosts": dict(p.keyword_boosts)},
            "bubble": {
                "token_budget": b.token_budget, "max_chunks": b.max_chunks, "delta": b.delta,
                "slack_policy": b.slack_policy, "relevance_floor": b.relevance_floor,
                "section_fractions": (b.section_fractions if isinstance(b.section_fractions, str)
                                      else dict(b.section_fractions)),
                "gates": {"structure": b.gates.structure, "redundancy": b.gates.redundancy,
                          "section_budgets": b.gates.section_budgets},
            },
        }

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return "sha256:" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _table(doc: Mapping[str, Any], key: str, path: str) -> Mapping[str, Any]:
    value = doc.get(key, {})
    if not isinstance(value, Mapping):
        raise ConfigError(f"{path}{key}", "expected a table")
    return value


def _reject_unknown(table: Mapping[str, Any], allowed, prefix: str) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{prefix}{key}", "unknown key")


def _number(table: Mapping[str, Any], key: str, path: str, kind=float):
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path + key, f"expected a number, got {value!r}")
    if kind is int and not isinstance(value, int):
        raise ConfigError(path + key, f"expected an integer, got {value!r}")
    return kind(value)


def _boosts(table: Mapping[str, Any], path: str) -> dict[str, float]:
    return {k: _number(table, k, path + ".") for k in table}


def config_from_dict(doc: Mapping[str, Any]) -> EngineConfig:
    _reject_unknown(doc, {"retrieval", "priors", "bubble"}, "")

    rt = _table(doc, "retrieval", "")
    _reject_unknown(rt, _RETRIEVAL_KEYS, "retrieval.")
    r_kwargs = {}
    for key, attr in _RETRIEVAL_KEYS.items():
        if key in rt:
            r_kwargs[attr] = _number(rt, key, "retrieval.", int if key in ("k_lexical", "m_prior_pool") else float)

    pt = _table(doc, "priors", "")
    _reject_unknown(pt, _PRIOR_KEYS, "priors.")
    p_kwargs: dict[str, Any] = {
        "section_boosts": _boosts(_table(pt, "section_boosts", "priors."), "priors.section_boosts"),
        "keyword_boosts": _boosts(_table(pt, "keyword_boosts", "priors."), "priors.keyword_boosts"),
    }
    if "theta" in pt:
        p_kwargs["theta"] = pt["theta"]

    bt = _table(doc, "bubble", "")
    _reject_unknown(bt, _BUBBLE_KEYS, "bubble.")
    b_kwargs: dict[str, Any] = {}
    for key in ("token_budget", "max_chunks"):
        if key in bt:
            b_kwargs[key] = _number(bt, key, "bubble.", int)
    for key in ("delta", "relevance_floor"):
        if key in bt:
            b_kwargs[key] = _number(bt, key, "bubble.")
    if "slack_policy" in bt:
        b_kwargs["slack_policy"] = bt["slack_policy"]
    if "section_fractions" in bt:
        fr = bt["section_fractions"]
        if isinstance(fr, Mapping):
            fr = _boosts(fr, "bubble.section_fractions")
        elif fr != UNIFORM:
            raise ConfigError("bubble.section_fractions", f"expected a table or {UNIFORM!r}")
        b_kwargs["section_fractions"] = fr
    gt = _table(bt, "gates", "bubble.")
    _reject_unknown(gt, _GATE_KEYS, "bubble.gates.")
    for key, value in gt.items():
        if not isinstance(value, bool):
            raise ConfigError(f"bubble.gates.{key}", "expected true or false")
    b_kwargs["gates"] = GateFlags(**gt)

    return EngineConfig(
        _build("retrieval", RetrievalConfig, r_kwargs),
        _build("priors", PriorConfig, p_kwargs),
        _build("bubble", BubbleConfig, b_kwargs),
    )


def _build(section: str, factory, kwargs: dict):
    try:
        return factory(**kwargs)
    except ValueError as exc:
        raise ConfigError(section, str(exc)) from exc


def load_config(path: str | Path) -> EngineConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"not valid TOML: {exc}") from exc
    return config_from_dict(doc)


def dump_config(config: EngineConfig) -> str:
    return tomli_w.dumps(config.to_dict())


def default_config_text() -> str:
    return dump_config(EngineConfig())
