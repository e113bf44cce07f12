"""Shared fixtures: scripted HTTP services and corpus builders."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from standrag.chunker import Chunk
from standrag.embedder import test_embed


class ScriptedServer:
    """Tiny threaded HTTP server for exercising the remote wire contracts.

    ``routes`` maps a POST path to ``callable(body) -> (status, payload)``.
    Every request is recorded in ``requests`` as (path, body, headers).
    """

    def __init__(self):
        self.routes = {}
        self.requests: list[tuple[str, dict, dict]] = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                outer.requests.append((self.path, body, dict(self.headers)))
                route = outer.routes.get(self.path)
                if route is None:
                    self._respond(404, {"error": "no such route"})
                    return
                status, payload = route(body)
                self._respond(status, payload)

            def _respond(self, status, payload):
                data = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def close(self):
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def scripted_server():
    servers: list[ScriptedServer] = []

    def make() -> ScriptedServer:
        server = ScriptedServer()
        servers.append(server)
        return server

    yield make
    for server in servers:
        server.close()


def embedding_route(dim: int, seed: int = 0):
    """An /embed route that mirrors the deterministic test embedder."""

    def route(body):
        vectors = [test_embed(t, dim, seed).tolist() for t in body["texts"]]
        return 200, {"embeddings": vectors}

    return route


def make_chunk(chunk_id: str, content: str, doc_id: str = "doc", **kwargs) -> Chunk:
    defaults = dict(
        filename=f"{doc_id}.txt",
        heading_path=["1 Scope"],
        char_start=0,
        char_end=len(content),
        section_index=0,
    )
    defaults.update(kwargs)
    return Chunk(chunk_id=chunk_id, doc_id=doc_id, content=content, **defaults)


def unit_vectors(n: int, dim: int, seed: int) -> np.ndarray:
    """Seeded random unit vectors, normalized the same way the embedder does."""
    rng = np.random.default_rng(seed)
    vecs = rng.standard_normal((n, dim))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return vecs.astype(np.float32)


def build_retriever(chunks, dim=64, seed=0, config=None, reranker=None, **kwargs):
    """Wire a fully offline Retriever over the given chunks."""
    from standrag.embedder import DeterministicEmbedder, EmbedderSpec
    from standrag.lexical import build_lexical_index
    from standrag.retrieval import BiEncoderReranker, RetrievalConfig, Retriever
    from standrag.vector import HnswGraph

    embedder = DeterministicEmbedder(EmbedderSpec(kind="deterministic_test", dim=dim, seed=seed))
    lexical = build_lexical_index(chunks)
    graph = HnswGraph(dim=dim, seed=seed)
    for chunk, vec in zip(chunks, embedder.embed_batch([c.content for c in chunks]) if chunks else []):
        graph.insert(chunk.chunk_id, vec)
    fallback = BiEncoderReranker(embedder, vectors=graph.vector_map())
    return Retriever(
        chunks={c.chunk_id: c for c in chunks},
        lexical_index=lexical,
        graph=graph,
        embedder=embedder,
        reranker=reranker if reranker is not None else fallback,
        config=config or RetrievalConfig(),
        fallback=fallback,
        **kwargs,
    )


def synthetic_corpus(rng, n_chunks: int, n_planted: int, filler_vocab: int = 50, rare_terms: int = 4):
    """Filler chunks plus planted answer chunks that repeat unique rare terms.

    Returns (chunks, [(query, planted_chunk_id), ...]); each query is the
    rare-term set of exactly one chunk.  Like a real answer passage, the
    planted chunk mentions its key terms several times, so the lexical and
    dense signals both clearly prefer it over hash-collision noise.
    """
    vocab = [f"w{i:02d}" for i in range(filler_vocab)]
    contents = [
        " ".join(rng.choice(vocab) for _ in range(rng.randint(30, 60))) for _ in range(n_chunks)
    ]
    planted_ids = rng.sample(range(n_chunks), n_planted)
    queries = []
    for q, chunk_idx in enumerate(planted_ids):
        rare = " ".join(f"rare{q:03d}{chr(ord('a') + j)}" for j in range(rare_terms))
        contents[chunk_idx] = contents[chunk_idx] + (" " + rare) * 3
        queries.append((rare, f"c{chunk_idx:04d}"))
    chunks = [make_chunk(f"c{i:04d}", content) for i, content in enumerate(contents)]
    return chunks, queries
