"""standrag: retrieval-augmented generation for technical-standards corpora.

Pipeline: section-aware parsing -> hierarchical + recursive chunking ->
unit-normalized embeddings -> hybrid retrieval (BM25 inverted index +
HNSW dense search, reciprocal-rank fused, reranked) -> prompt-templated
generation via an external LLM, with an MCQ / judge evaluation harness.
"""

__version__ = "0.1.0"

from .chunker import Chunk, ChunkingConfig, hierarchical_chunk, recursive_split
from .corpus import Document, RawDocument, Section, filter_sections, parse_document
from .embedder import EmbedderSpec, embed_batch, test_embed
from .errors import EngineError
from .generation import Answer, PromptKind
from .lexical import Analyzer, Bm25Params, InvertedIndex, analyze, bm25_search, build_lexical_index
from .retrieval import RetrievalConfig, RerankerSpec, Retriever, rerank, rrf_fuse
from .vector import HnswGraph, brute_force_knn, hnsw_insert, hnsw_search

__all__ = [
    "Analyzer",
    "Answer",
    "Bm25Params",
    "Chunk",
    "ChunkingConfig",
    "Document",
    "EmbedderSpec",
    "EngineError",
    "HnswGraph",
    "InvertedIndex",
    "PromptKind",
    "RawDocument",
    "RerankerSpec",
    "RetrievalConfig",
    "Retriever",
    "Section",
    "analyze",
    "bm25_search",
    "brute_force_knn",
    "build_lexical_index",
    "embed_batch",
    "filter_sections",
    "hierarchical_chunk",
    "hnsw_insert",
    "hnsw_search",
    "parse_document",
    "recursive_split",
    "rerank",
    "rrf_fuse",
    "test_embed",
]
