"""Loaded, query-ready pipeline: immutable indexes plus the configured clients."""

from __future__ import annotations

import logging
from pathlib import Path

from ..chunker import Chunk
from ..embedder import make_embedder
from ..errors import InputError
from ..generation import Answer, Generator, HttpLlmClient, PromptKind
from ..lexical import InvertedIndex
from ..retrieval import BiEncoderReranker, CrossEncoderReranker, Retriever
from ..vector import HnswGraph
from .config import EngineConfig
from .store import IndexManifest, load_index

logger = logging.getLogger(__name__)


class Engine:
    """Retrieval and chat over one immutable index.

    Safe for concurrent use: indexes never mutate after construction and
    remote clients bound their own parallelism.
    """

    def __init__(
        self,
        chunks: list[Chunk],
        lexical: InvertedIndex,
        graph: HnswGraph,
        config: EngineConfig,
        manifest: IndexManifest | None = None,
        llm=None,
    ):
        self.config = config
        self.manifest = manifest
        self.chunks = {c.chunk_id: c for c in chunks}
        embedder = make_embedder(config.embedder)
        fallback = BiEncoderReranker(embedder, vectors=graph.vector_map())
        if config.reranker.kind == "remote_cross_encoder":
            reranker = CrossEncoderReranker(config.reranker)
        else:
            reranker = fallback
        self.retriever = Retriever(
            chunks=self.chunks,
            lexical_index=lexical,
            graph=graph,
            embedder=embedder,
            reranker=reranker,
            config=config.retrieval,
            analyzer=config.analyzer.build(),
            bm25=config.bm25,
            fallback=fallback,
            rerank_hard_fail=config.reranker.hard_fail,
            ef_search=config.hnsw.ef_search,
        )
        if llm is not None:
            self._llm = llm
        elif config.llm.configured:
            self._llm = HttpLlmClient(config.llm)
        else:
            self._llm = None
        self._generator = (
            Generator(self.retriever, self._llm, config.include_source_tags)
            if self._llm is not None
            else None
        )

    @classmethod
    def from_index_dir(cls, index_dir: str | Path, config: EngineConfig, llm=None) -> "Engine":
        chunks, lexical, graph, manifest = load_index(index_dir, config)
        return cls(chunks, lexical, graph, config, manifest=manifest, llm=llm)

    @property
    def chunk_count(self) -> int:
        return len(self.chunks)

    @property
    def llm_configured(self) -> bool:
        return self._llm is not None

    def retrieve(self, query: str, top_k: int | None = None) -> list[tuple[Chunk, float]]:
        return self.retriever.retrieve(query, top_k)

    def retrieve_timed(self, query: str, top_k: int | None = None):
        return self.retriever.retrieve_timed(query, top_k)

    def chat(
        self,
        question: str,
        kind: PromptKind = PromptKind.OPEN_ENDED,
        options: list[str] | None = None,
    ) -> Answer:
        if self._generator is None:
            raise InputError("no LLM configured (set llm.endpoint or LLM_URL)")
        return self._generator.generate(question, kind, options)

    def generate(
        self,
        question: str,
        kind: PromptKind = PromptKind.OPEN_ENDED,
        options: list[str] | None = None,
    ) -> Answer:
        """Alias so the engine satisfies the eval harness pipeline contract."""
        return self.chat(question, kind, options)

    def generate_from(
        self,
        question: str,
        retrieved: list[tuple[Chunk, float]],
        kind: PromptKind = PromptKind.OPEN_ENDED,
        options: list[str] | None = None,
    ) -> Answer:
        """Generate against already-retrieved chunks (lets callers time stages)."""
        if self._generator is None:
            raise InputError("no LLM configured (set llm.endpoint or LLM_URL)")
        return self._generator.generate_with_retrieved(question, retrieved, kind, options)
