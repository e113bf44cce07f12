"""HNSW approximate nearest-neighbor graph over unit vectors.

Layered proximity graph with seeded geometric level assignment
(multiplier 1/ln(M)), greedy descent through the upper layers, and a
beam search at each insertion layer.  Degree caps are M per layer above
0 and 2*M at layer 0; neighbor selection is closest-first.  Similarity
is cosine, computed as a dot product of pre-normalized vectors; the
internal "distance" is the negated dot so heaps order nearest-first.

Approximation affects which candidates are found, never their scores:
returned scores are recomputed per item with the same primitive the
brute-force oracle uses, so with ``ef_search >= node count`` the result
equals exact kNN bit-for-bit.

Construction is single-writer; a built graph is immutable and safe for
concurrent searches.  Deletions are unsupported (rebuild instead), and a
deserialized graph is sealed for searching, not for further inserts.
"""

from __future__ import annotations

import heapq
import math
import random
import struct

import numpy as np

from .errors import BuildError, ContractError, LoadError

RankedList = list[tuple[str, float]]

DEFAULT_M = 16
DEFAULT_EF_CONSTRUCTION = 200
# Below this many nodes, exact search costs nothing; skip the graph walk.
BRUTE_FORCE_MAX_NODES = 1000

_MAGIC = b"SDRGHNW1"
_FORMAT_VERSION = 1


def _check_unit(vec: np.ndarray, what: str) -> None:
    norm = float(np.linalg.norm(np.asarray(vec, dtype=np.float64)))
    if abs(norm - 1.0) > 1e-4:
        raise ContractError(f"{what} is not unit-normalized (norm={norm:.6f})")


class HnswGraph:
    def __init__(
        self,
        dim: int,
        M: int = DEFAULT_M,
        ef_construction: int = DEFAULT_EF_CONSTRUCTION,
        seed: int = 0,
    ):
        if M < 2:
            raise ValueError("M must be >= 2")
        self.dim = dim
        self.M = M
        self.ef_construction = ef_construction
        self.seed = seed
        self._ml = 1.0 / math.log(M)
        self._rng = random.Random(seed)
        self._ids: list[str] = []
        self._id_to_idx: dict[str, int] = {}
        self._matrix = np.zeros((0, dim), dtype=np.float32)
        self._capacity = 0
        self._levels: list[int] = []
        self._adj: list[list[list[int]]] = []  # node -> layer -> neighbor idxs
        self._entry = -1
        self._max_level = -1
        self._vector_map: dict[str, np.ndarray] | None = None

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._ids)

    def _draw_level(self) -> int:
        return int(-math.log(1.0 - self._rng.random()) * self._ml)

    def _grow(self, needed: int) -> None:
        if needed <= self._capacity:
            return
        new_capacity = max(needed, self._capacity * 2, 64)
        matrix = np.zeros((new_capacity, self.dim), dtype=np.float32)
        matrix[: len(self._ids)] = self._matrix[: len(self._ids)]
        self._matrix = matrix
        self._capacity = new_capacity

    def insert(self, chunk_id: str, vec: np.ndarray) -> None:
        """Insert a unit vector; the node's level comes from the seeded RNG.

        Raises:
            BuildError: duplicate id.
            ContractError: wrong dimension or non-unit vector.
        """
        if chunk_id in self._id_to_idx:
            raise BuildError(f"duplicate id in vector index: {chunk_id}")
        vec = np.asarray(vec, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise ContractError(f"vector dim {vec.shape} does not match index dim {self.dim}")
        _check_unit(vec, f"vector for {chunk_id}")

        idx = len(self._ids)
        self._grow(idx + 1)
        self._matrix[idx] = vec
        self._ids.append(chunk_id)
        self._id_to_idx[chunk_id] = idx
        self._vector_map = None

        level = self._draw_level()
        self._levels.append(level)
        self._adj.append([[] for _ in range(level + 1)])

        if self._entry < 0:
            self._entry = idx
            self._max_level = level
            return

        query = self._matrix[idx]
        ep = self._entry
        for layer in range(self._max_level, level, -1):
            ep = self._greedy_descend(query, ep, layer)

        entry_points = [ep]
        for layer in range(min(level, self._max_level), -1, -1):
            candidates = self._search_layer(query, entry_points, layer, self.ef_construction)
            m_eff = 2 * self.M if layer == 0 else self.M
            neighbors = [i for _, i in candidates[:m_eff] if i != idx]
            self._adj[idx][layer] = neighbors
            for nb in neighbors:
                nb_list = self._adj[nb][layer]
                nb_list.append(idx)
                if len(nb_list) > m_eff:
                    self._adj[nb][layer] = self._prune(nb, nb_list, m_eff)
            entry_points = [i for _, i in candidates]

        if level > self._max_level:
            self._entry = idx
            self._max_level = level

    def _prune(self, node: int, neighbor_idxs: list[int], m_eff: int) -> list[int]:
        """Keep the m_eff closest neighbors (ties by index ascending)."""
        sims = (self._matrix[neighbor_idxs] @ self._matrix[node]).tolist()
        order = sorted(zip(neighbor_idxs, sims), key=lambda p: (-p[1], p[0]))
        return [i for i, _ in order[:m_eff]]

    # ------------------------------------------------------------------
    # search
    # ------------------------------------------------------------------

    def _greedy_descend(self, query: np.ndarray, ep: int, layer: int) -> int:
        matrix = self._matrix
        current = ep
        current_sim = float(matrix[current] @ query)
        improved = True
        while improved:
            improved = False
            neighbors = self._adj[current][layer]
            if not neighbors:
                break
            sims = matrix[neighbors] @ query
            best = int(np.argmax(sims))
            if float(sims[best]) > current_sim:
                current = neighbors[best]
                current_sim = float(sims[best])
                improved = True
        return current

    def _search_layer(
        self, query: np.ndarray, entry_points: list[int], layer: int, ef: int
    ) -> list[tuple[float, int]]:
        """Beam search at one layer; returns (neg_sim, idx) ascending."""
        matrix = self._matrix
        adj = self._adj
        visited = bytearray(len(self._ids))

        dists = (-(matrix[entry_points] @ query)).tolist()
        candidates: list[tuple[float, int]] = []
        best: list[tuple[float, int]] = []  # max-heap via (-dist, -idx)
        for d, i in zip(dists, entry_points):
            if visited[i]:
                continue
            visited[i] = 1
            heapq.heappush(candidates, (d, i))
            heapq.heappush(best, (-d, -i))

        while candidates:
            d, current = heapq.heappop(candidates)
            if d > -best[0][0] and len(best) >= ef:
                break
            fresh = [nb for nb in adj[current][layer] if not visited[nb]]
            if not fresh:
                continue
            for nb in fresh:
                visited[nb] = 1
            nb_dists = (-(matrix[fresh] @ query)).tolist()
            worst = -best[0][0]
            n_best = len(best)
            for nd, nb in zip(nb_dists, fresh):
                if n_best < ef:
                    heapq.heappush(candidates, (nd, nb))
                    heapq.heappush(best, (-nd, -nb))
                    n_best += 1
                    worst = -best[0][0]
                elif nd < worst:
                    heapq.heappush(candidates, (nd, nb))
                    heapq.heapreplace(best, (-nd, -nb))
                    worst = -best[0][0]

        return sorted((-nd, -ni) for nd, ni in best)

    def search(self, query: np.ndarray, k: int, ef_search: int | None = None) -> RankedList:
        """Approximate top-k by cosine; scores descending, ties by id ascending.

        Returned scores are exact dot products of the stored vectors with
        the query.  An empty graph yields an empty list.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self._ids:
            return []
        query = np.asarray(query, dtype=np.float32)
        if query.shape != (self.dim,):
            raise ContractError(f"query dim {query.shape} does not match index dim {self.dim}")
        _check_unit(query, "query")
        ef = max(ef_search if ef_search is not None else max(64, 2 * k), k)

        ep = self._entry
        for layer in range(self._max_level, 0, -1):
            ep = self._greedy_descend(query, ep, layer)
        beam = self._search_layer(query, [ep], 0, ef)

        matrix = self._matrix
        ids = self._ids
        scored = [(float(matrix[i] @ query), ids[i]) for _, i in beam]
        scored.sort(key=lambda p: (-p[0], p[1]))
        return [(chunk_id, score) for score, chunk_id in scored[:k]]

    # ------------------------------------------------------------------
    # accessors and validation
    # ------------------------------------------------------------------

    def vector_map(self) -> dict[str, np.ndarray]:
        """id -> stored vector view; built lazily, cached until next insert."""
        if self._vector_map is None:
            self._vector_map = {cid: self._matrix[i] for i, cid in enumerate(self._ids)}
        return self._vector_map

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix[: len(self._ids)]

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    @property
    def entry_point(self) -> str | None:
        return self._ids[self._entry] if self._entry >= 0 else None

    def validate(self) -> None:
        """Check structural invariants; raises BuildError on violation."""
        n = len(self._ids)
        level_counts: dict[int, int] = {}
        for idx in range(n):
            level = self._levels[idx]
            if len(self._adj[idx]) != level + 1:
                raise BuildError(f"node {idx}: adjacency layers != level+1")
            for layer in range(level + 1):
                level_counts[layer] = level_counts.get(layer, 0) + 1
                m_eff = 2 * self.M if layer == 0 else self.M
                nbrs = self._adj[idx][layer]
                if len(nbrs) > m_eff:
                    raise BuildError(f"node {idx} layer {layer}: degree {len(nbrs)} > {m_eff}")
                for nb in nbrs:
                    if nb < 0 or nb >= n:
                        raise BuildError(f"node {idx} layer {layer}: edge to missing node {nb}")
                    if self._levels[nb] < layer:
                        raise BuildError(
                            f"node {idx} layer {layer}: neighbor {nb} absent from layer"
                        )
        for layer in range(1, self._max_level + 1):
            if level_counts.get(layer, 0) > level_counts.get(layer - 1, 0):
                raise BuildError(f"layer {layer} larger than layer {layer - 1}")

    # ------------------------------------------------------------------
    # serialization (structure only; vectors are persisted separately)
    # ------------------------------------------------------------------

    def to_bytes(self) -> bytes:
        out = bytearray()
        out += _MAGIC
        out += struct.pack(
            "<IIIIqii",
            _FORMAT_VERSION,
            self.dim,
            self.M,
            self.ef_construction,
            self.seed,
            self._entry,
            self._max_level,
        )
        out += struct.pack("<I", len(self._ids))
        for cid in self._ids:
            raw = cid.encode("utf-8")
            out += struct.pack("<H", len(raw))
            out += raw
        for level in self._levels:
            out += struct.pack("<I", level)
        for layers in self._adj:
            for nbrs in layers:
                out += struct.pack("<I", len(nbrs))
                out += struct.pack(f"<{len(nbrs)}I", *nbrs)
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes, matrix: np.ndarray) -> "HnswGraph":
        if data[:8] != _MAGIC:
            raise LoadError("graph: bad magic")
        off = 8
        version, dim, M, ef_c, seed, entry, max_level = struct.unpack_from("<IIIIqii", data, off)
        off += struct.calcsize("<IIIIqii")
        if version != _FORMAT_VERSION:
            raise LoadError(f"graph: unsupported format_version {version}")
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        graph = cls(dim=dim, M=M, ef_construction=ef_c, seed=seed)
        if matrix.shape != (count, dim):
            raise LoadError(
                f"graph: vector matrix shape {matrix.shape} does not match ({count}, {dim})"
            )
        for _ in range(count):
            (n_raw,) = struct.unpack_from("<H", data, off)
            off += 2
            cid = data[off : off + n_raw].decode("utf-8")
            off += n_raw
            graph._id_to_idx[cid] = len(graph._ids)
            graph._ids.append(cid)
        levels = list(struct.unpack_from(f"<{count}I", data, off))
        off += 4 * count
        graph._levels = levels
        for level in levels:
            layers = []
            for _ in range(level + 1):
                (n_nbrs,) = struct.unpack_from("<I", data, off)
                off += 4
                layers.append(list(struct.unpack_from(f"<{n_nbrs}I", data, off)))
                off += 4 * n_nbrs
            graph._adj.append(layers)
        if off != len(data):
            raise LoadError("graph: trailing bytes")
        graph._matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        graph._capacity = count
        graph._entry = entry
        graph._max_level = max_level
        return graph


def hnsw_insert(graph: HnswGraph, chunk_id: str, vec: np.ndarray) -> HnswGraph:
    graph.insert(chunk_id, vec)
    return graph


def hnsw_search(
    graph: HnswGraph, query: np.ndarray, k: int, ef_search: int | None = None
) -> RankedList:
    return graph.search(query, k, ef_search)


def brute_force_knn(vectors: dict[str, np.ndarray], query: np.ndarray, k: int) -> RankedList:
    """Exact top-k by cosine over a vector map; the test oracle and the
    search path for small corpora."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query = np.asarray(query, dtype=np.float32)
    _check_unit(query, "query")
    scored = [(float(vec @ query), cid) for cid, vec in vectors.items()]
    scored.sort(key=lambda p: (-p[0], p[1]))
    return [(cid, score) for score, cid in scored[:k]]


def dense_search(
    graph: HnswGraph, query: np.ndarray, k: int, ef_search: int | None = None
) -> RankedList:
    """Graph search, or exact scan when the corpus is small enough."""
    if len(graph) < BRUTE_FORCE_MAX_NODES:
        return brute_force_knn(graph.vector_map(), query, k)
    return graph.search(query, k, ef_search)
