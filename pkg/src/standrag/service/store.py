"""On-disk index layout, atomic builds, and verified loading.

Layout under the index directory:

    manifest.json    build metadata, per-file sha256 checksums
    manifest.sha256  checksum of manifest.json itself
    config.json      the resolved config the index was built with
    chunks.jsonl     one chunk record per line (defines chunk order)
    postings.bin     doc lengths + term postings (little-endian)
    vectors.bin      float32 embedding rows, aligned with chunk order
    graph.bin        HNSW structure (see vector.HnswGraph.to_bytes)

Builds write into a temp sibling directory and rename into place, so a
crash never leaves a loadable half-written index.  Loading re-hashes every
file against the manifest and fails loudly on any mismatch.  Rebuilds from
identical corpus + config + seeds are byte-identical; set SOURCE_DATE_EPOCH
(or pass ``created_at``) to pin the manifest timestamp too.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import shutil
import struct
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..chunker import Chunk, hierarchical_chunk
from ..corpus import Document, RawDocument, filter_sections, parse_document
from ..embedder import make_embedder
from ..errors import BuildError, LoadError, ParseError
from ..lexical import InvertedIndex, build_lexical_index
from ..vector import HnswGraph
from .config import EngineConfig

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

MANIFEST = "manifest.json"
MANIFEST_SUM = "manifest.sha256"
CONFIG_ECHO = "config.json"
CHUNKS = "chunks.jsonl"
POSTINGS = "postings.bin"
VECTORS = "vectors.bin"
GRAPH = "graph.bin"

_POSTINGS_MAGIC = b"SDRGPST1"
_VECTORS_MAGIC = b"SDRGVEC1"

_RELEASE_RE = re.compile(r"(?i)(?<![a-z])rel(?:ease)?[-_. ]?(\d{1,3})(?![0-9])")

_DOC_SUFFIXES = {".txt": "heading_text", ".md": "heading_text", ".jsonl": "structured_records"}


@dataclass
class IndexManifest:
    format_version: int
    created_at: str
    document_count: int
    chunk_count: int
    embedder_fingerprint: str
    embedder_dim: int
    analyzer_fingerprint: str
    hnsw_seed: int
    checksums: dict[str, str]

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "created_at": self.created_at,
            "document_count": self.document_count,
            "chunk_count": self.chunk_count,
            "embedder_fingerprint": self.embedder_fingerprint,
            "embedder_dim": self.embedder_dim,
            "analyzer_fingerprint": self.analyzer_fingerprint,
            "hnsw_seed": self.hnsw_seed,
            "checksums": self.checksums,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IndexManifest":
        try:
            return cls(**data)
        except TypeError as exc:
            raise LoadError(f"manifest: {exc}") from exc


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def infer_release_tag(filename: str) -> str | None:
    m = _RELEASE_RE.search(filename)
    return f"rel{m.group(1)}" if m else None


def _build_timestamp(created_at: str | None) -> str:
    if created_at is not None:
        return created_at
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        return datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()
    return datetime.now(timezone.utc).isoformat()


def parse_corpus_dir(corpus_dir: str | Path, config: EngineConfig) -> list[Document]:
    """Parse and filter every recognized document file, sorted by path."""
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise BuildError(f"corpus dir not found: {corpus_dir}")
    blocklist = set(config.blocklist)
    documents: list[Document] = []
    for path in sorted(p for p in corpus_dir.rglob("*") if p.is_file()):
        fmt = _DOC_SUFFIXES.get(path.suffix.lower())
        if fmt is None:
            logger.warning("skipping unrecognized file: %s", path)
            continue
        rel_name = path.relative_to(corpus_dir).as_posix()
        try:
            body = path.read_text("utf-8")
            doc = parse_document(
                RawDocument(filename=rel_name, body=body),
                format=fmt,
                release_tag=infer_release_tag(rel_name),
            )
        except (OSError, UnicodeDecodeError, ParseError) as exc:
            if config.on_parse_error == "fail":
                raise BuildError(f"{path}: {exc}") from exc
            logger.warning("skipping unreadable document %s: %s", path, exc)
            continue
        documents.append(filter_sections(doc, blocklist))
    if not documents:
        raise BuildError(f"no parseable documents in {corpus_dir}")
    return documents


def build_index(
    corpus_dir: str | Path,
    config: EngineConfig,
    out_dir: str | Path,
    created_at: str | None = None,
) -> IndexManifest:
    """parse -> filter -> chunk -> embed -> index -> persist atomically.

    Raises:
        BuildError: empty corpus, zero chunks, or (with on_parse_error =
            "fail") any unreadable document.
    """
    out_dir = Path(out_dir)
    documents = parse_corpus_dir(corpus_dir, config)

    chunks: list[Chunk] = []
    for doc in documents:
        chunks.extend(hierarchical_chunk(doc, config.chunking))
    if not chunks:
        raise BuildError(f"corpus produced zero chunks: {corpus_dir}")

    analyzer = config.analyzer.build()
    lexical = build_lexical_index(chunks, analyzer)

    embedder = make_embedder(config.embedder)
    vectors = embedder.embed_batch([c.content for c in chunks])

    graph = HnswGraph(
        dim=config.embedder.dim,
        M=config.hnsw.M,
        ef_construction=config.hnsw.ef_construction,
        seed=config.hnsw.seed,
    )
    for chunk, vec in zip(chunks, vectors):
        graph.insert(chunk.chunk_id, vec)

    manifest = IndexManifest(
        format_version=FORMAT_VERSION,
        created_at=_build_timestamp(created_at),
        document_count=len(documents),
        chunk_count=len(chunks),
        embedder_fingerprint=config.embedder.fingerprint(),
        embedder_dim=config.embedder.dim,
        analyzer_fingerprint=analyzer.fingerprint(),
        hnsw_seed=config.hnsw.seed,
        checksums={},
    )

    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp_dir = Path(tempfile.mkdtemp(prefix=out_dir.name + ".tmp-", dir=out_dir.parent))
    try:
        _write_files(tmp_dir, chunks, lexical, graph, manifest, config)
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp_dir, out_dir)
    except BaseException:
        shutil.rmtree(tmp_dir, ignore_errors=True)
        raise
    logger.info(
        "built index at %s: %d documents, %d chunks", out_dir, len(documents), len(chunks)
    )
    return manifest


def _write_files(
    dir_path: Path,
    chunks: list[Chunk],
    lexical: InvertedIndex,
    graph: HnswGraph,
    manifest: IndexManifest,
    config: EngineConfig,
) -> None:
    _write_chunks(dir_path / CHUNKS, chunks)
    _write_postings(dir_path / POSTINGS, chunks, lexical)
    _write_vectors(dir_path / VECTORS, graph)
    (dir_path / GRAPH).write_bytes(graph.to_bytes())
    (dir_path / CONFIG_ECHO).write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    manifest.checksums = {
        name: _sha256(dir_path / name) for name in (CHUNKS, POSTINGS, VECTORS, GRAPH, CONFIG_ECHO)
    }
    manifest_path = dir_path / MANIFEST
    manifest_path.write_text(
        json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (dir_path / MANIFEST_SUM).write_text(_sha256(manifest_path) + "\n", encoding="utf-8")


def _chunk_record(chunk: Chunk) -> dict:
    return {
        "chunk_id": chunk.chunk_id,
        "doc_id": chunk.doc_id,
        "filename": chunk.filename,
        "heading_path": chunk.heading_path,
        "content": chunk.content,
        "char_start": chunk.char_start,
        "char_end": chunk.char_end,
        "section_index": chunk.section_index,
        "release_tag": chunk.release_tag,
    }


def _write_chunks(path: Path, chunks: list[Chunk]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for chunk in chunks:
            fh.write(json.dumps(_chunk_record(chunk), sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def _read_chunks(path: Path) -> list[Chunk]:
    chunks = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                chunks.append(
                    Chunk(
                        chunk_id=rec["chunk_id"],
                        doc_id=rec["doc_id"],
                        filename=rec["filename"],
                        heading_path=list(rec["heading_path"]),
                        content=rec["content"],
                        char_start=rec["char_start"],
                        char_end=rec["char_end"],
                        section_index=rec["section_index"],
                        release_tag=rec.get("release_tag"),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise LoadError(f"{path}: line {i}: {exc}") from exc
    return chunks


def _write_postings(path: Path, chunks: list[Chunk], lexical: InvertedIndex) -> None:
    idx_of = {chunk.chunk_id: i for i, chunk in enumerate(chunks)}
    with open(path, "wb") as fh:
        fh.write(_POSTINGS_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(chunks)))
        fh.write(struct.pack(f"<{len(chunks)}I", *(lexical.doc_len[c.chunk_id] for c in chunks)))
        terms = sorted(lexical.postings)
        fh.write(struct.pack("<I", len(terms)))
        for term in terms:
            raw = term.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            plist = lexical.postings[term]
            fh.write(struct.pack("<I", len(plist)))
            flat = []
            for chunk_id, tf in plist:
                flat += [idx_of[chunk_id], tf]
            fh.write(struct.pack(f"<{len(flat)}I", *flat))


def _read_postings(path: Path, chunks: list[Chunk]) -> InvertedIndex:
    data = path.read_bytes()
    if data[:8] != _POSTINGS_MAGIC:
        raise LoadError(f"{path}: bad magic")
    off = 8
    version, count = struct.unpack_from("<II", data, off)
    off += 8
    if version != FORMAT_VERSION:
        raise LoadError(f"{path}: unsupported format_version {version}")
    if count != len(chunks):
        raise LoadError(f"{path}: chunk count {count} != {len(chunks)}")
    lens = struct.unpack_from(f"<{count}I", data, off)
    off += 4 * count
    doc_len = {chunk.chunk_id: n for chunk, n in zip(chunks, lens)}
    (n_terms,) = struct.unpack_from("<I", data, off)
    off += 4
    postings: dict[str, list[tuple[str, int]]] = {}
    for _ in range(n_terms):
        (n_raw,) = struct.unpack_from("<H", data, off)
        off += 2
        term = data[off : off + n_raw].decode("utf-8")
        off += n_raw
        (n_postings,) = struct.unpack_from("<I", data, off)
        off += 4
        flat = struct.unpack_from(f"<{2 * n_postings}I", data, off)
        off += 8 * n_postings
        postings[term] = [(chunks[flat[2 * i]].chunk_id, flat[2 * i + 1]) for i in range(n_postings)]
    if off != len(data):
        raise LoadError(f"{path}: trailing bytes")
    return InvertedIndex(postings=postings, doc_len=doc_len)


def _write_vectors(path: Path, graph: HnswGraph) -> None:
    matrix = graph.matrix
    with open(path, "wb") as fh:
        fh.write(_VECTORS_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, matrix.shape[0], matrix.shape[1]))
        fh.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())


def _read_vectors(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if data[:8] != _VECTORS_MAGIC:
        raise LoadError(f"{path}: bad magic")
    version, count, dim = struct.unpack_from("<III", data, 8)
    if version != FORMAT_VERSION:
        raise LoadError(f"{path}: unsupported format_version {version}")
    expected = 20 + 4 * count * dim
    if len(data) != expected:
        raise LoadError(f"{path}: size {len(data)} != expected {expected}")
    flat = np.frombuffer(data, dtype="<f4", offset=20)
    return flat.reshape(count, dim).astype(np.float32)


def verify_checksums(index_dir: Path, manifest: IndexManifest) -> None:
    for name, expected in manifest.checksums.items():
        path = index_dir / name
        if not path.is_file():
            raise LoadError(f"missing index file: {name}")
        actual = _sha256(path)
        if actual != expected:
            raise LoadError(f"checksum mismatch for {name}: {actual} != {expected}")


def read_manifest(index_dir: str | Path) -> IndexManifest:
    index_dir = Path(index_dir)
    manifest_path = index_dir / MANIFEST
    if not manifest_path.is_file():
        raise LoadError(f"no manifest at {manifest_path}")
    sum_path = index_dir / MANIFEST_SUM
    if sum_path.is_file():
        expected = sum_path.read_text("utf-8").strip()
        actual = _sha256(manifest_path)
        if actual != expected:
            raise LoadError(f"checksum mismatch for {MANIFEST}: {actual} != {expected}")
    try:
        data = json.loads(manifest_path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise LoadError(f"{manifest_path}: invalid JSON: {exc}") from exc
    manifest = IndexManifest.from_dict(data)
    if manifest.format_version != FORMAT_VERSION:
        raise LoadError(f"unsupported format_version: {manifest.format_version}")
    return manifest


def load_index(
    index_dir: str | Path, config: EngineConfig
) -> tuple[list[Chunk], InvertedIndex, HnswGraph, IndexManifest]:
    """Load and verify a persisted index; validates config compatibility.

    Raises:
        LoadError: naming the offending field/file on any version,
            checksum, dim, embedder, or analyzer mismatch.
    """
    index_dir = Path(index_dir)
    manifest = read_manifest(index_dir)
    verify_checksums(index_dir, manifest)

    if config.embedder.dim != manifest.embedder_dim:
        raise LoadError(
            f"dim mismatch: index built with dim={manifest.embedder_dim}, "
            f"config expects dim={config.embedder.dim}"
        )
    if config.embedder.fingerprint() != manifest.embedder_fingerprint:
        raise LoadError(
            f"embedder mismatch: index built with {manifest.embedder_fingerprint}, "
            f"config gives {config.embedder.fingerprint()}"
        )
    analyzer = config.analyzer.build()
    if analyzer.fingerprint() != manifest.analyzer_fingerprint:
        raise LoadError(
            f"analyzer mismatch: index built with {manifest.analyzer_fingerprint}, "
            f"config gives {analyzer.fingerprint()}"
        )

    chunks = _read_chunks(index_dir / CHUNKS)
    if len(chunks) != manifest.chunk_count:
        raise LoadError(f"chunk_count mismatch: {len(chunks)} != {manifest.chunk_count}")
    lexical = _read_postings(index_dir / POSTINGS, chunks)
    matrix = _read_vectors(index_dir / VECTORS)
    graph = HnswGraph.from_bytes((index_dir / GRAPH).read_bytes(), matrix)
    if graph.ids != [c.chunk_id for c in chunks]:
        raise LoadError("graph ids do not match chunk order")
    return chunks, lexical, graph, manifest


def load_index_config(index_dir: str | Path) -> EngineConfig:
    """The resolved config an index was built with (config.json echo)."""
    from .config import apply_env_overrides, config_from_dict

    path = Path(index_dir) / CONFIG_ECHO
    if not path.is_file():
        raise LoadError(f"no config echo at {path}")
    return apply_env_overrides(config_from_dict(json.loads(path.read_text("utf-8"))))
