"""Acceptance suite: one test per acceptance criterion, stated tolerances.

Each test prints a PASS line (visible with ``pytest -s``); a failing
criterion fails its test.  Run via ``pytest tests/test_acceptance.py -v``.
"""

from __future__ import annotations

import json
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import httpx
import numpy as np
import pytest
import uvicorn

from conftest import build_retriever, make_chunk, synthetic_corpus, unit_vectors
from test_chunker import assert_spans_round_trip
from test_lexical import naive_full_scan
from standrag.chunker import ChunkingConfig, hierarchical_chunk
from standrag.corpus import Document, Section
from standrag.errors import LoadError
from standrag.evaluation import McqItem, OpenItem, run_llm_eval, run_mcq_eval
from standrag.generation import (
    MCQ_PROMPT_TEMPLATE,
    OPEN_ENDED_PROMPT_TEMPLATE,
    Answer,
    PromptKind,
    ScriptedLlm,
    assemble_prompt,
)
from standrag.lexical import Analyzer, Bm25Params, bm25_search, build_lexical_index
from standrag.retrieval import RetrievalConfig, rrf_fuse
from standrag.service import Engine, build_index, load_index
from standrag.service.app import create_app
from standrag.service.config import config_from_dict
from standrag.vector import HnswGraph, brute_force_knn

PLAIN = Analyzer(stop_words=frozenset())


def ok(line: str):
    print(f"\nACCEPTANCE PASS: {line}")


# ---------------------------------------------------------------------------
# 1. BM25 oracle equivalence
# ---------------------------------------------------------------------------


def test_bm25_oracle_equivalence():
    """100 seeded corpora x 20 queries: scores within rel 1e-9 of a naive
    full-scan reference, rankings exact, under 30 s."""
    started = time.perf_counter()
    rng = random.Random(0xB25)
    params = Bm25Params()
    checked = 0
    for _ in range(100):
        vocab = [f"t{i:02d}" for i in range(rng.randint(2, 30))]
        n_chunks = rng.randint(1, 50)
        token_lists = {
            f"c{i:03d}": [rng.choice(vocab) for _ in range(rng.randint(1, 30))]
            for i in range(n_chunks)
        }
        chunks = [make_chunk(cid, " ".join(toks)) for cid, toks in sorted(token_lists.items())]
        index = build_lexical_index(chunks, PLAIN)
        for _ in range(20):
            terms = [rng.choice(vocab) for _ in range(rng.randint(1, 4))]
            expected = naive_full_scan(token_lists, list(dict.fromkeys(terms)), params)
            actual = bm25_search(index, " ".join(terms), n_chunks, params, PLAIN)
            assert [cid for cid, _ in actual] == [cid for cid, _ in expected]
            for (_, got), (_, want) in zip(actual, expected):
                assert got == pytest.approx(want, rel=1e-9)
            checked += len(actual)
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"BM25 oracle sweep took {elapsed:.1f}s"
    ok(f"BM25 oracle equivalence (100 corpora, 2000 queries, {checked} scored candidates, "
       f"{elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# 2. HNSW recall
# ---------------------------------------------------------------------------


def test_hnsw_recall_and_exactness():
    """2000 vectors, dim 64, M=16, ef_construction=200: recall@10 >= 0.95 at
    ef_search=200; exact equality at ef_search=N; under 60 s."""
    started = time.perf_counter()
    vectors = unit_vectors(2000, 64, seed=0xA11)
    graph = HnswGraph(dim=64, M=16, ef_construction=200, seed=7)
    for i, vec in enumerate(vectors):
        graph.insert(f"c{i:05d}", vec)
    queries = unit_vectors(100, 64, seed=0xDE5)
    vector_map = graph.vector_map()

    hits = 0
    for query in queries:
        approx = {cid for cid, _ in graph.search(query, 10, ef_search=200)}
        exact = {cid for cid, _ in brute_force_knn(vector_map, query, 10)}
        hits += len(approx & exact)
    recall = hits / 1000
    assert recall >= 0.95, f"recall@10 {recall:.3f} < 0.95"

    for query in queries[:20]:
        assert graph.search(query, 10, ef_search=len(graph)) == brute_force_knn(
            vector_map, query, 10
        )
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0, f"HNSW gate took {elapsed:.1f}s"
    ok(f"HNSW recall@10 = {recall:.3f} >= 0.95; ef=N exactness ({elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# 3. RRF correctness
# ---------------------------------------------------------------------------


def test_rrf_correctness():
    """Fused scores equal direct formula evaluation (1e-12); first-in-both
    implies maximal; constructed tie broken by id."""
    rng = random.Random(0x44F)
    pool = [f"c{i:02d}" for i in range(20)]
    for trial in range(300):
        a = rng.sample(pool, rng.randint(0, len(pool)))
        b = rng.sample(pool, rng.randint(0, len(pool)))
        if trial % 3 == 0 and a and b:
            b = [a[0]] + [cid for cid in b[1:] if cid != a[0]]  # shared first place
        k = rng.choice([1.0, 7.5, 60.0])
        ranked_a = [(cid, float(len(a) - i)) for i, cid in enumerate(a)]
        ranked_b = [(cid, float(len(b) - i)) for i, cid in enumerate(b)]
        fused = rrf_fuse([ranked_a, ranked_b], k=k)
        scores = dict(fused)
        for cid in set(a) | set(b):
            expected = 0.0
            if cid in a:
                expected += 1.0 / (k + a.index(cid) + 1)
            if cid in b:
                expected += 1.0 / (k + b.index(cid) + 1)
            assert abs(scores[cid] - expected) <= 1e-12
        if a and b and a[0] == b[0]:
            top_id, top_score = fused[0]
            assert top_id == a[0]
            assert all(s < top_score for cid, s in fused if cid != top_id)

    tie = rrf_fuse(
        [[("c1", 2.0), ("c2", 1.0)], [("c2", 2.0), ("c1", 1.0)]], k=60
    )
    assert [cid for cid, _ in tie] == ["c1", "c2"]
    assert tie[0][1] == tie[1][1]
    ok("RRF formula equivalence (300 randomized pairs, 1e-12), max-score and tie-break rules")


# ---------------------------------------------------------------------------
# 4. Chunker round trip
# ---------------------------------------------------------------------------


def _generated_document(rng: random.Random, doc_index: int) -> Document:
    words = ["carrier", "bearer", "handover", "measurement", "the", "shall", "procedure"]
    sections = []
    path = []
    for sec_index in range(rng.randint(1, 4)):
        level = rng.randint(1, 3)
        heading = f"{sec_index + 1} {rng.choice(words).title()}"
        path = path[: level - 1] + [heading]
        pieces = []
        for _ in range(rng.randint(0, 40)):
            kind = rng.random()
            if kind < 0.15:
                pieces.append("\n\n")
            elif kind < 0.3:
                pieces.append("\n")
            elif kind < 0.4:
                pieces.append(". ")
            elif kind < 0.45:
                pieces.append("x" * rng.randint(200, 1600))
            else:
                pieces.append(" ".join(rng.choice(words) for _ in range(rng.randint(3, 30))))
        sections.append(
            Section(level=level, heading=heading, heading_path=list(path), text="".join(pieces))
        )
    return Document(doc_id=f"doc{doc_index:04d}", filename=f"doc{doc_index:04d}.txt",
                    sections=sections)


def test_chunker_round_trip_at_scale():
    """1000 generated documents: spans <= 1250, byte-exact reconstruction,
    full heading path on every chunk."""
    rng = random.Random(0xC41)
    cfg = ChunkingConfig()
    n_chunks = 0
    for doc_index in range(1000):
        doc = _generated_document(rng, doc_index)
        chunks = hierarchical_chunk(doc, cfg)
        n_chunks += len(chunks)
        by_section: dict[int, list] = {}
        for chunk in chunks:
            assert len(chunk.body) <= 1250
            section = doc.sections[chunk.section_index]
            assert chunk.heading_path == section.heading_path
            assert chunk.content == " > ".join(section.heading_path) + "\n" + chunk.body
            by_section.setdefault(chunk.section_index, []).append(chunk)
        for sec_index, sec_chunks in by_section.items():
            text = doc.sections[sec_index].text
            spans = [(c.char_start, c.char_end) for c in sec_chunks]
            assert_spans_round_trip(text, spans, cfg)
    ok(f"chunker round trip on 1000 documents ({n_chunks} chunks), all spans <= 1250, "
       f"paths intact")


# ---------------------------------------------------------------------------
# 5. Pipeline fidelity (Top-K1 / 1/10 rule / Top-K2, planted answers)
# ---------------------------------------------------------------------------


def test_pipeline_fidelity():
    """top_k1=1000 and top_k2=5 on a 200-chunk corpus: prerank emits <= 100
    candidates, retrieve exactly 5, planted chunk in top-5 for >= 95% of
    100 generated queries."""
    rng = random.Random(0x3199)
    chunks, queries = synthetic_corpus(rng, n_chunks=200, n_planted=100)
    assert len(chunks) == 200 and len(queries) == 100
    config = RetrievalConfig(top_k1=1000, top_k2=5)
    assert config.prerank_keep == 100
    retriever = build_retriever(chunks, dim=256, seed=1, config=config)

    hits = 0
    for query, planted_id in queries:
        candidates = retriever.prerank(query)
        assert len(candidates) <= 100
        results = retriever.retrieve(query)
        assert len(results) == 5
        hits += planted_id in [c.chunk_id for c, _ in results]
    assert hits >= 95, f"planted chunk found in top-5 for only {hits}/100 queries"
    ok(f"pipeline fidelity: prerank <= 100, retrieve == 5, planted hit rate {hits}/100")


# ---------------------------------------------------------------------------
# 6. Prompt fidelity
# ---------------------------------------------------------------------------


def test_prompt_fidelity():
    """Rendered prompts differ from the fixed templates only at the
    placeholder sites (byte-level check)."""
    context, question = "CTX-BYTES", "QUESTION-BYTES"
    options = ["first", "second", "third"]
    mcq = assemble_prompt(PromptKind.MCQ, question, context, options)
    expected_mcq = (
        MCQ_PROMPT_TEMPLATE.replace("{retrieved documents}", context)
        .replace("{question}", question)
        .replace("{options}", "option 1: first\noption 2: second\noption 3: third")
    )
    assert mcq == expected_mcq
    open_prompt = assemble_prompt(PromptKind.OPEN_ENDED, question, context)
    expected_open = OPEN_ENDED_PROMPT_TEMPLATE.replace(
        "{retrieved documents}", context
    ).replace("{statement}", question)
    assert open_prompt == expected_open

    # restoring the placeholders reproduces the templates byte-for-byte
    assert mcq.replace(context, "{retrieved documents}", 1).replace(question, "{question}", 1)\
        .replace("option 1: first\noption 2: second\noption 3: third", "{options}", 1) \
        == MCQ_PROMPT_TEMPLATE
    assert open_prompt.replace(context, "{retrieved documents}", 1)\
        .replace(question, "{statement}", 1) == OPEN_ENDED_PROMPT_TEMPLATE
    ok("prompt fidelity: byte-exact templates outside the placeholder sites")


# ---------------------------------------------------------------------------
# 7. Eval harness exactness
# ---------------------------------------------------------------------------


class _ScriptedPipeline:
    def __init__(self, answers):
        self.answers = answers

    def generate(self, question, kind=PromptKind.OPEN_ENDED, options=None):
        return Answer(text=self.answers[question], cited_chunks=[], prompt_kind=kind)


def test_eval_harness_exactness():
    """Scripted 10-item MCQ run with 7 correct reports accuracy 0.7 with the
    right per-release partition; scripted judge with 5 Yes of 10 reports 0.5."""
    items = [
        McqItem(
            question=f"q{i}",
            options=["a", "b", "c", "d"],
            answer_index=(i % 4) + 1,
            release_tag="rel17" if i < 6 else "rel18",
        )
        for i in range(10)
    ]
    answers = {}
    for i, item in enumerate(items):
        chosen = item.answer_index if i < 7 else (item.answer_index % 4) + 1
        answers[item.question] = f'"answer": "option {chosen}: {item.options[chosen - 1]}"'
    report = run_mcq_eval(items, _ScriptedPipeline(answers))
    assert report.n == 10 and report.correct == 7
    assert report.accuracy == 0.7
    assert report.per_release["rel17"].n == 6 and report.per_release["rel17"].correct == 6
    assert report.per_release["rel18"].n == 4 and report.per_release["rel18"].correct == 1
    assert sum(s.n for s in report.per_release.values()) == 10

    open_items = [OpenItem(question=f"o{i}", gold_answer="gold", release_tag="rel17")
                  for i in range(10)]
    pipeline = _ScriptedPipeline({f"o{i}": f"candidate {i}" for i in range(10)})

    class Judge:
        def complete(self, prompt):
            index = int(prompt.split("Question:o")[1].split("\n")[0])
            return "Yes." if index < 5 else "No."

    judge_report = run_llm_eval(open_items, pipeline, Judge())
    assert judge_report.accuracy == 0.5
    ok("eval harness exactness: MCQ 7/10 -> 0.7 with partition; judge 5/10 -> 0.5")


# ---------------------------------------------------------------------------
# 8. Determinism & persistence
# ---------------------------------------------------------------------------


def _write_fixture_corpus(corpus_dir):
    corpus_dir.mkdir()
    (corpus_dir / "ts_a_rel17.txt").write_text(
        "# 1 Scope\nScope text about radio procedures and measurements.\n"
        "# 5 Procedures\n" + ("The UE shall perform the configured procedure. " * 60) + "\n"
        "## 5.3 Setup\nSetup details with timer T300 and default bearers.\n",
        encoding="utf-8",
    )
    (corpus_dir / "ts_b_rel18.jsonl").write_text(
        json.dumps({"level": 1, "heading": "4 Architecture",
                    "text": "Slicing and edge deployments with AMF, SMF, UPF."}) + "\n",
        encoding="utf-8",
    )


def test_determinism_and_persistence(tmp_path, monkeypatch):
    """Two builds from the same corpus, config, and seeds are byte-identical;
    a single corrupted byte in any persisted file fails the load."""
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    corpus = tmp_path / "corpus"
    _write_fixture_corpus(corpus)
    config = config_from_dict({"embedder": {"kind": "deterministic_test", "dim": 64, "seed": 5}})

    out1, out2 = tmp_path / "i1", tmp_path / "i2"
    build_index(corpus, config, out1)
    build_index(corpus, config, out2)
    names = sorted(p.name for p in out1.iterdir())
    assert names == sorted(p.name for p in out2.iterdir())
    for name in names:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), f"{name} differs"

    load_index(out1, config)  # pristine index loads
    for name in names:
        path = out1 / name
        original = path.read_bytes()
        corrupted = bytearray(original)
        corrupted[len(corrupted) // 2] ^= 0x40
        path.write_bytes(bytes(corrupted))
        with pytest.raises(LoadError):
            load_index(out1, config)
        path.write_bytes(original)
    load_index(out1, config)
    ok(f"determinism & persistence: {len(names)} files byte-identical across builds; "
       "every single-byte corruption detected")


# ---------------------------------------------------------------------------
# 9. Service contract
# ---------------------------------------------------------------------------


class _LiveServer:
    def __init__(self, app):
        config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def __enter__(self) -> str:
        self.thread.start()
        deadline = time.time() + 10
        while not self.server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.01)
        port = self.server.servers[0].sockets[0].getsockname()[1]
        return f"http://127.0.0.1:{port}"

    def __exit__(self, *exc):
        self.server.should_exit = True
        self.thread.join(timeout=10)


def test_service_contract(tmp_path, monkeypatch):
    """/v1/query returns non-increasing scores; concurrent queries equal
    serial execution; /v1/chat without an LLM degrades to 503 + sources."""
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    corpus = tmp_path / "corpus"
    _write_fixture_corpus(corpus)
    config = config_from_dict({"embedder": {"kind": "deterministic_test", "dim": 64, "seed": 5}})
    index_dir = tmp_path / "index"
    build_index(corpus, config, index_dir)
    engine = Engine.from_index_dir(index_dir, config)

    queries = [
        "UE timer T300 setup",
        "network slicing architecture",
        "configured procedure measurements",
        "default bearers",
    ] * 5
    with _LiveServer(create_app(engine)) as base_url:
        with httpx.Client(base_url=base_url, timeout=30.0) as client:
            assert client.get("/v1/health").json()["status"] == "ok"

            serial = [client.post("/v1/query", json={"query": q}).json() for q in queries]
            for response in serial:
                scores = [c["score"] for c in response["chunks"]]
                assert scores == sorted(scores, reverse=True)

            def post(q):
                with httpx.Client(base_url=base_url, timeout=30.0) as c:
                    return c.post("/v1/query", json={"query": q}).json()

            with ThreadPoolExecutor(max_workers=8) as pool:
                concurrent = list(pool.map(post, queries))
            assert concurrent == serial

            chat = client.post("/v1/chat", json={"question": "What timer does the UE start?"})
            assert chat.status_code == 503
            body = chat.json()
            assert body["error"] == "llm_unconfigured"
            assert body["sources"]
    ok("service contract: ordered scores, concurrent == serial over a live server, "
       "503 + sources without an LLM")
