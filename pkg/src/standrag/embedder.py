"""Dense vector embedding behind a pluggable contract.

Two embedder kinds: ``remote`` posts batches to an embedding server over a
minimal JSON protocol (``POST {endpoint}/embed``), and ``deterministic_test``
is a seeded hashing bag-of-words encoder that lets the whole pipeline run
offline and reproducibly.  All vectors are unit-normalized here regardless
of what the backend returns; downstream similarity is a plain dot product.
"""

from __future__ import annotations

import hashlib
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import httpx
import numpy as np

from ._http import post_json
from .errors import ContractError, InputError
from .lexical import Analyzer, analyze

ENV_EMBEDDER_URL = "EMBEDDER_URL"

DEFAULT_DIM = 1024
DEFAULT_BATCH_SIZE = 32
DEFAULT_PARALLELISM = 4


@dataclass
class EmbedderSpec:
    kind: str = "deterministic_test"  # "remote" | "deterministic_test"
    endpoint: str | None = None
    dim: int = DEFAULT_DIM
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0
    parallelism: int = DEFAULT_PARALLELISM

    def __post_init__(self):
        if self.kind not in ("remote", "deterministic_test"):
            raise ValueError(f"unknown embedder kind: {self.kind!r}")
        if self.kind == "remote" and not (self.endpoint or os.environ.get(ENV_EMBEDDER_URL)):
            raise ValueError("remote embedder requires an endpoint")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def fingerprint(self) -> str:
        if self.kind == "deterministic_test":
            return f"deterministic_test:dim={self.dim}:seed={self.seed}"
        return f"remote:dim={self.dim}"


def normalize(vec: np.ndarray) -> np.ndarray:
    """Unit-normalize in float64, return float32."""
    v = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ContractError("cannot normalize a zero vector")
    return (v / norm).astype(np.float32)


def _bucket(term: str, dim: int, seed: int) -> int:
    digest = hashlib.blake2b(
        term.encode("utf-8"), digest_size=8, key=str(seed).encode("ascii")
    ).digest()
    return int.from_bytes(digest, "little") % dim


def test_embed(text: str, dim: int, seed: int = 0) -> np.ndarray:
    """Seeded hashing bag-of-words embedding; fully deterministic.

    Terms from the lexical analyzer are hashed into ``dim`` buckets and the
    counts L2-normalized.  Text whose tokens are all stop words falls back
    to hashing the raw string into a single bucket, so the result is never
    a zero vector.
    """
    if not text:
        raise InputError("cannot embed empty text")
    counts = np.zeros(dim, dtype=np.float64)
    terms = analyze(text, _TEST_ANALYZER)
    if terms:
        for term in terms:
            counts[_bucket(term, dim, seed)] += 1.0
    else:
        counts[_bucket(text, dim, seed)] = 1.0
    return normalize(counts)


test_embed.__test__ = False  # keep pytest from collecting the op by its name


_TEST_ANALYZER = Analyzer()


class DeterministicEmbedder:
    """In-process embedder used for tests and offline runs."""

    def __init__(self, spec: EmbedderSpec):
        self.spec = spec

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        _check_texts(texts)
        return [test_embed(t, self.spec.dim, self.spec.seed) for t in texts]


class RemoteEmbedder:
    """Client for the JSON embedding protocol.

    Wire contract: ``POST {endpoint}/embed`` with ``{"texts": [...]}``;
    response ``{"embeddings": [[...], ...]}`` in request order.  Requests
    are capped at ``spec.batch_size`` texts and issued with bounded
    parallelism; vectors are re-normalized locally.
    """

    def __init__(self, spec: EmbedderSpec, client: httpx.Client | None = None):
        self.spec = spec
        self.endpoint = (os.environ.get(ENV_EMBEDDER_URL) or spec.endpoint or "").rstrip("/")
        if not self.endpoint:
            raise ValueError("remote embedder requires an endpoint")
        self._client = client or httpx.Client(timeout=30.0)
        self._lock = threading.Lock()

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        _check_texts(texts)
        batches = [
            texts[i : i + self.spec.batch_size]
            for i in range(0, len(texts), self.spec.batch_size)
        ]
        if len(batches) == 1:
            return self._embed_one_batch(batches[0])
        with ThreadPoolExecutor(max_workers=self.spec.parallelism) as pool:
            results = list(pool.map(self._embed_one_batch, batches))
        return [vec for batch in results for vec in batch]

    def _embed_one_batch(self, texts: list[str]) -> list[np.ndarray]:
        data = post_json(self._client, f"{self.endpoint}/embed", {"texts": texts})
        embeddings = data.get("embeddings")
        if not isinstance(embeddings, list) or len(embeddings) != len(texts):
            raise ContractError(
                f"embedder returned {len(embeddings) if isinstance(embeddings, list) else 'no'} "
                f"embeddings for {len(texts)} texts"
            )
        out = []
        for i, values in enumerate(embeddings):
            vec = np.asarray(values, dtype=np.float64)
            if vec.ndim != 1 or vec.shape[0] != self.spec.dim:
                raise ContractError(
                    f"embedding {i}: expected dim {self.spec.dim}, got shape {vec.shape}"
                )
            out.append(normalize(vec))
        return out


def _check_texts(texts: list[str]) -> None:
    for i, text in enumerate(texts):
        if not text:
            raise InputError(f"empty text at index {i}")


def make_embedder(spec: EmbedderSpec, client: httpx.Client | None = None):
    if spec.kind == "remote":
        return RemoteEmbedder(spec, client=client)
    return DeterministicEmbedder(spec)


def embed_batch(texts: list[str], spec: EmbedderSpec) -> list[np.ndarray]:
    """One vector per text, order-preserving, each L2-normalized."""
    return make_embedder(spec).embed_batch(texts)
