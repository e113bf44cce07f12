"""Engine configuration: one JSON file, env-var overrides for endpoints.

Env overrides (12-factor): EMBEDDER_URL and RERANKER_URL switch the
respective component to its remote kind at that endpoint; LLM_URL points
the chat-completion client somewhere; LLM_API_KEY is sent as a bearer
token.  Everything else lives in the config file; defaults work offline.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..chunker import ChunkingConfig
from ..corpus import DEFAULT_BLOCKLIST
from ..embedder import ENV_EMBEDDER_URL, EmbedderSpec
from ..errors import InputError
from ..generation import ENV_LLM_URL, LlmClientSpec
from ..lexical import Analyzer, Bm25Params, load_default_stop_words
from ..retrieval import ENV_RERANKER_URL, RerankerSpec, RetrievalConfig


@dataclass
class HnswConfig:
    M: int = 16
    ef_construction: int = 200
    ef_search: int | None = None
    seed: int = 0


@dataclass
class AnalyzerConfig:
    lowercase: bool = True
    split_hyphenated: bool = True
    stop_words_file: str | None = None

    def build(self) -> Analyzer:
        if self.stop_words_file:
            words = Path(self.stop_words_file).read_text("utf-8").splitlines()
            stop_words = frozenset(w.strip() for w in words if w.strip())
        else:
            stop_words = load_default_stop_words()
        return Analyzer(
            lowercase=self.lowercase,
            split_hyphenated=self.split_hyphenated,
            stop_words=stop_words,
        )


@dataclass
class EngineConfig:
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    analyzer: AnalyzerConfig = field(default_factory=AnalyzerConfig)
    bm25: Bm25Params = field(default_factory=Bm25Params)
    hnsw: HnswConfig = field(default_factory=HnswConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    embedder: EmbedderSpec = field(default_factory=EmbedderSpec)
    reranker: RerankerSpec = field(default_factory=RerankerSpec)
    llm: LlmClientSpec = field(default_factory=LlmClientSpec)
    blocklist: list[str] = field(default_factory=lambda: sorted(DEFAULT_BLOCKLIST))
    include_source_tags: bool = True
    on_parse_error: str = "skip"  # "skip" | "fail"
    index_dir: str | None = None

    def __post_init__(self):
        if self.on_parse_error not in ("skip", "fail"):
            raise InputError("on_parse_error must be 'skip' or 'fail'")

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "chunking": ChunkingConfig,
    "analyzer": AnalyzerConfig,
    "bm25": Bm25Params,
    "hnsw": HnswConfig,
    "retrieval": RetrievalConfig,
    "embedder": EmbedderSpec,
    "reranker": RerankerSpec,
    "llm": LlmClientSpec,
}


def config_from_dict(data: dict) -> EngineConfig:
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise InputError(f"config section {key!r} must be an object")
            try:
                kwargs[key] = _SECTIONS[key](**value)
            except TypeError as exc:
                raise InputError(f"config section {key!r}: {exc}") from exc
        elif key in ("blocklist", "include_source_tags", "on_parse_error", "index_dir"):
            kwargs[key] = value
        else:
            raise InputError(f"unknown config key: {key!r}")
    return EngineConfig(**kwargs)


def apply_env_overrides(config: EngineConfig) -> EngineConfig:
    embedder_url = os.environ.get(ENV_EMBEDDER_URL)
    if embedder_url:
        config.embedder.kind = "remote"
        config.embedder.endpoint = embedder_url
    reranker_url = os.environ.get(ENV_RERANKER_URL)
    if reranker_url:
        config.reranker.kind = "remote_cross_encoder"
        config.reranker.endpoint = reranker_url
    llm_url = os.environ.get(ENV_LLM_URL)
    if llm_url:
        config.llm.endpoint = llm_url
    return config


def load_config(path: str | Path | None = None) -> EngineConfig:
    """Load a JSON config file (or defaults) and apply env overrides."""
    if path is None:
        config = EngineConfig()
    else:
        try:
            data = json.loads(Path(path).read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from exc
        config = config_from_dict(data)
    return apply_env_overrides(config)
