"""Two-stage retrieval: hybrid pre-ranking, RRF fusion, then reranking.

Pre-ranking runs BM25 and dense search over the same chunk set, each for
the top K1 candidates, merges the two rankings with reciprocal rank
fusion, and keeps the top tenth.  Ranking rescores those survivors with a
(query, passage) relevance model and returns the top K2.  Fusion uses
ranks only; the two retrievers' scores are not comparable.
"""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field

import httpx
import numpy as np

from ._http import post_json
from .chunker import Chunk
from .errors import ContractError, EmptyQueryError, TransportError
from .lexical import Analyzer, Bm25Params, InvertedIndex, bm25_search
from .vector import HnswGraph, RankedList, dense_search

logger = logging.getLogger(__name__)

ENV_RERANKER_URL = "RERANKER_URL"

DEFAULT_RRF_K = 60.0


@dataclass
class RetrievalConfig:
    top_k1: int = 1000
    top_k2: int = 5
    rrf_k: float = DEFAULT_RRF_K

    @property
    def prerank_keep(self) -> int:
        return math.ceil(self.top_k1 / 10)

    def __post_init__(self):
        if self.rrf_k <= 0:
            raise ValueError("rrf_k must be > 0")
        if not 1 <= self.top_k2 <= self.prerank_keep <= self.top_k1:
            raise ValueError(
                f"require 1 <= top_k2 ({self.top_k2}) <= prerank_keep "
                f"({self.prerank_keep}) <= top_k1 ({self.top_k1})"
            )


@dataclass
class RerankerSpec:
    kind: str = "bi_encoder_fallback"  # "remote_cross_encoder" | "bi_encoder_fallback"
    endpoint: str | None = None
    hard_fail: bool = False

    def __post_init__(self):
        if self.kind not in ("remote_cross_encoder", "bi_encoder_fallback"):
            raise ValueError(f"unknown reranker kind: {self.kind!r}")
        if self.kind == "remote_cross_encoder" and not (
            self.endpoint or os.environ.get(ENV_RERANKER_URL)
        ):
            raise ValueError("remote reranker requires an endpoint")


def rrf_fuse(lists: list[RankedList], k: float = DEFAULT_RRF_K) -> RankedList:
    """Merge ranked lists: fused(c) = sum over lists containing c of 1/(k + rank).

    Ranks are 1-based; a chunk absent from a list contributes nothing for
    that list.  Output is sorted by fused score descending, ties by id.
    """
    if k <= 0:
        raise ValueError("k must be > 0")
    scores: dict[str, float] = {}
    for ranked in lists:
        for rank, (chunk_id, _) in enumerate(ranked, start=1):
            scores[chunk_id] = scores.get(chunk_id, 0.0) + 1.0 / (k + rank)
    return sorted(scores.items(), key=lambda item: (-item[1], item[0]))


class BiEncoderReranker:
    """Fallback scorer: cosine between query and chunk-content embeddings.

    ``vectors`` may supply pre-computed content embeddings (the index's own)
    to avoid re-embedding; they are identical by construction since indexed
    vectors are embeddings of the same content under the same embedder.
    """

    def __init__(self, embedder, vectors: dict[str, np.ndarray] | None = None):
        self._embedder = embedder
        self._vectors = vectors or {}

    def score(self, query: str, candidates: list[Chunk]) -> list[float]:
        qvec = self._embedder.embed_batch([query])[0]
        missing = [c for c in candidates if c.chunk_id not in self._vectors]
        fresh: dict[str, np.ndarray] = {}
        if missing:
            for chunk, vec in zip(missing, self._embedder.embed_batch([c.content for c in missing])):
                fresh[chunk.chunk_id] = vec
        return [
            float(self._vectors.get(c.chunk_id, fresh.get(c.chunk_id)) @ qvec)
            for c in candidates
        ]


class CrossEncoderReranker:
    """Client for the remote scoring protocol: ``POST {endpoint}/rerank``
    with ``{"query": ..., "passages": [...]}``, response ``{"scores": [...]}``
    aligned with the passages."""

    def __init__(self, spec: RerankerSpec, client: httpx.Client | None = None):
        endpoint = os.environ.get(ENV_RERANKER_URL) or spec.endpoint or ""
        if not endpoint:
            raise ValueError("remote reranker requires an endpoint")
        self._endpoint = endpoint.rstrip("/")
        self._client = client or httpx.Client(timeout=30.0)

    def score(self, query: str, candidates: list[Chunk]) -> list[float]:
        passages = [c.content for c in candidates]
        data = post_json(self._client, f"{self._endpoint}/rerank", {"query": query, "passages": passages})
        scores = data.get("scores")
        if not isinstance(scores, list) or len(scores) != len(passages):
            raise ContractError(
                f"reranker returned {len(scores) if isinstance(scores, list) else 'no'} "
                f"scores for {len(passages)} passages"
            )
        return [float(s) for s in scores]


def rerank(
    query: str,
    candidates: list[Chunk],
    reranker,
    k2: int,
    fallback: BiEncoderReranker | None = None,
    hard_fail: bool = False,
) -> list[tuple[Chunk, float]]:
    """Score (query, chunk) pairs and keep the top k2, ties by chunk id.

    A remote scorer failure falls back to the bi-encoder unless
    ``hard_fail`` is set (or no fallback is available).
    """
    if k2 < 1:
        raise ValueError("k2 must be >= 1")
    if not candidates:
        return []
    try:
        scores = reranker.score(query, candidates)
    except TransportError:
        if hard_fail or fallback is None:
            raise
        logger.warning("reranker unreachable; falling back to bi-encoder scoring")
        scores = fallback.score(query, candidates)
    ranked = sorted(zip(candidates, scores), key=lambda p: (-p[1], p[0].chunk_id))
    return [(chunk, float(score)) for chunk, score in ranked[:k2]]


@dataclass
class Retriever:
    """Wires the two pre-ranking retrievers, fusion, and the reranker
    over one immutable chunk set.  Stateless per query; concurrent calls
    are safe."""

    chunks: dict[str, Chunk]
    lexical_index: InvertedIndex
    graph: HnswGraph
    embedder: object
    reranker: object
    config: RetrievalConfig = field(default_factory=RetrievalConfig)
    analyzer: Analyzer = field(default_factory=Analyzer)
    bm25: Bm25Params = field(default_factory=Bm25Params)
    fallback: BiEncoderReranker | None = None
    rerank_hard_fail: bool = False
    ef_search: int | None = None

    def prerank(self, query: str) -> list[str]:
        ids, _ = self.prerank_timed(query)
        return ids

    def prerank_timed(self, query: str) -> tuple[list[str], dict[str, float]]:
        timings: dict[str, float] = {}
        t0 = time.perf_counter()
        try:
            lexical = bm25_search(
                self.lexical_index, query, self.config.top_k1, self.bm25, self.analyzer
            )
        except EmptyQueryError:
            logger.warning("query analyzed to zero terms; dense-only fusion: %r", query)
            lexical = []
        timings["bm25_ms"] = (time.perf_counter() - t0) * 1000

        t0 = time.perf_counter()
        qvec = self.embedder.embed_batch([query])[0]
        dense = dense_search(self.graph, qvec, self.config.top_k1, self.ef_search)
        timings["ann_ms"] = (time.perf_counter() - t0) * 1000

        t0 = time.perf_counter()
        fused = rrf_fuse([lexical, dense], self.config.rrf_k)
        timings["fuse_ms"] = (time.perf_counter() - t0) * 1000
        return [cid for cid, _ in fused[: self.config.prerank_keep]], timings

    def retrieve(self, query: str, top_k: int | None = None) -> list[tuple[Chunk, float]]:
        results, _ = self.retrieve_timed(query, top_k)
        return results

    def retrieve_timed(
        self, query: str, top_k: int | None = None
    ) -> tuple[list[tuple[Chunk, float]], dict[str, float]]:
        k2 = top_k if top_k is not None else self.config.top_k2
        candidate_ids, timings = self.prerank_timed(query)
        candidates = [self.chunks[cid] for cid in candidate_ids]
        t0 = time.perf_counter()
        results = rerank(
            query,
            candidates,
            self.reranker,
            k2,
            fallback=self.fallback,
            hard_fail=self.rerank_hard_fail,
        )
        timings["rerank_ms"] = (time.perf_counter() - t0) * 1000
        return results, timings
