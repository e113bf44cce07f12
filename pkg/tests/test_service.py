"""Index persistence, engine loading, and the HTTP surface."""

from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from standrag.errors import BuildError, LoadError
from standrag.generation import ScriptedLlm
from standrag.service import Engine, build_index, load_index
from standrag.service.app import create_app
from standrag.service.config import EngineConfig, config_from_dict, load_config
from standrag.service.store import infer_release_tag, read_manifest

CORPUS_TXT = """# 1 Scope
This specification covers the radio resource control protocol states.
# 2 References
Normative references listed here.
# 5 Procedures
General requirements text for connected mode operation.
## 5.3 Connection setup
The UE shall apply the default radio configuration and start timer T300.
# Annex B (normative)
Annex text to be filtered.
"""

CORPUS_JSONL = (
    json.dumps(
        {
            "level": 1,
            "heading": "4 Architecture",
            "text": "The core network supports slicing, roaming, and edge deployments.",
        }
    )
    + "\n"
    + json.dumps({"level": 2, "heading": "4.1 Functions", "text": "AMF and SMF handle mobility."})
    + "\n"
)


def small_config() -> EngineConfig:
    return config_from_dict({"embedder": {"kind": "deterministic_test", "dim": 64, "seed": 3}})


@pytest.fixture
def corpus_dir(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "ts_38_331_rel17.txt").write_text(CORPUS_TXT, encoding="utf-8")
    (corpus / "ts_23_501_rel18.jsonl").write_text(CORPUS_JSONL, encoding="utf-8")
    return corpus


@pytest.fixture
def built_index(tmp_path, corpus_dir, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    out = tmp_path / "index"
    manifest = build_index(corpus_dir, small_config(), out)
    return out, manifest


# ---------------------------------------------------------------------------
# build
# ---------------------------------------------------------------------------


def test_build_counts_and_checksums(built_index):
    out, manifest = built_index
    assert manifest.document_count == 2
    assert manifest.chunk_count > 0
    for name, digest in manifest.checksums.items():
        assert (out / name).is_file()
        assert len(digest) == 64


def test_build_filters_boilerplate(built_index):
    out, _ = built_index
    records = [json.loads(line) for line in (out / "chunks.jsonl").read_text().splitlines()]
    headings = {element for rec in records for element in rec["heading_path"]}
    assert "2 References" not in headings
    assert not any(h.lower().startswith("annex") for h in headings)
    assert "5.3 Connection setup" in headings


def test_rebuild_is_byte_identical(tmp_path, corpus_dir, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    out1, out2 = tmp_path / "i1", tmp_path / "i2"
    build_index(corpus_dir, small_config(), out1)
    build_index(corpus_dir, small_config(), out2)
    names1 = sorted(p.name for p in out1.iterdir())
    assert names1 == sorted(p.name for p in out2.iterdir())
    for name in names1:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_build_empty_corpus_fails(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(BuildError):
        build_index(empty, small_config(), tmp_path / "out")


def test_build_skips_unreadable_by_default(tmp_path, corpus_dir, caplog):
    (corpus_dir / "broken.jsonl").write_text("{not json}\n")
    with caplog.at_level("WARNING"):
        manifest = build_index(corpus_dir, small_config(), tmp_path / "out")
    assert manifest.document_count == 2
    assert any("skipping unreadable" in r.message for r in caplog.records)


def test_build_hard_fail_on_unreadable(tmp_path, corpus_dir):
    (corpus_dir / "broken.jsonl").write_text("{not json}\n")
    config = small_config()
    config.on_parse_error = "fail"
    with pytest.raises(BuildError, match="broken"):
        build_index(corpus_dir, config, tmp_path / "out")


def test_failed_build_leaves_no_output(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    out = tmp_path / "out"
    with pytest.raises(BuildError):
        build_index(empty, small_config(), out)
    assert not out.exists()
    assert not list(tmp_path.glob("out.tmp-*"))


def test_release_tag_inference():
    assert infer_release_tag("ts_38_331_rel17.txt") == "rel17"
    assert infer_release_tag("spec-Rel-18.md") == "rel18"
    assert infer_release_tag("release 17_notes.txt") == "rel17"
    assert infer_release_tag("ts_23_501.txt") is None


# ---------------------------------------------------------------------------
# load
# ---------------------------------------------------------------------------


def test_load_round_trip(built_index):
    out, manifest = built_index
    chunks, lexical, graph, loaded = load_index(out, small_config())
    assert loaded.to_dict() == manifest.to_dict()
    assert len(chunks) == manifest.chunk_count
    assert lexical.N == manifest.chunk_count
    assert len(graph) == manifest.chunk_count


def test_load_dim_mismatch_names_field(built_index):
    out, _ = built_index
    config = config_from_dict({"embedder": {"kind": "deterministic_test", "dim": 1024, "seed": 3}})
    with pytest.raises(LoadError, match="dim"):
        load_index(out, config)


def test_load_embedder_mismatch(built_index):
    out, _ = built_index
    config = config_from_dict({"embedder": {"kind": "deterministic_test", "dim": 64, "seed": 9}})
    with pytest.raises(LoadError, match="embedder"):
        load_index(out, config)


def test_load_analyzer_mismatch(built_index, tmp_path):
    out, _ = built_index
    stop_file = tmp_path / "stops.txt"
    stop_file.write_text("custom\nwords\n")
    config = small_config()
    config.analyzer.stop_words_file = str(stop_file)
    with pytest.raises(LoadError, match="analyzer"):
        load_index(out, config)


@pytest.mark.parametrize(
    "victim", ["chunks.jsonl", "postings.bin", "vectors.bin", "graph.bin", "config.json"]
)
def test_single_byte_corruption_detected(built_index, victim):
    out, _ = built_index
    path = out / victim
    data = bytearray(path.read_bytes())
    data[len(data) // 2] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(LoadError, match="checksum"):
        load_index(out, small_config())


def test_manifest_corruption_detected(built_index):
    out, _ = built_index
    path = out / "manifest.json"
    data = bytearray(path.read_bytes())
    data[len(data) // 3] ^= 0x01
    path.write_bytes(bytes(data))
    with pytest.raises(LoadError):
        read_manifest(out)


def test_truncated_vectors_detected(built_index):
    out, _ = built_index
    path = out / "vectors.bin"
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(LoadError, match="checksum"):
        load_index(out, small_config())


def test_missing_manifest(tmp_path):
    with pytest.raises(LoadError, match="manifest"):
        load_index(tmp_path, small_config())


# ---------------------------------------------------------------------------
# engine + HTTP API
# ---------------------------------------------------------------------------


@pytest.fixture
def engine(built_index):
    out, _ = built_index
    return Engine.from_index_dir(out, small_config())


def test_engine_retrieve(engine):
    results = engine.retrieve("UE connection setup timer")
    assert results
    assert results[0][0].heading_path[-1] == "5.3 Connection setup"


def test_health(engine):
    client = TestClient(create_app(engine))
    body = client.get("/v1/health").json()
    assert body["status"] == "ok"
    assert body["chunks"] == engine.chunk_count


def test_query_scores_non_increasing(engine):
    client = TestClient(create_app(engine))
    response = client.post("/v1/query", json={"query": "radio configuration timer"})
    assert response.status_code == 200
    chunks = response.json()["chunks"]
    assert chunks
    scores = [c["score"] for c in chunks]
    assert scores == sorted(scores, reverse=True)
    assert {"id", "filename", "heading_path", "content", "score"} <= set(chunks[0])


def test_query_top_k_override(engine):
    client = TestClient(create_app(engine))
    response = client.post("/v1/query", json={"query": "the radio protocol", "top_k": 1})
    assert len(response.json()["chunks"]) == 1


def test_query_requires_nonempty(engine):
    client = TestClient(create_app(engine))
    assert client.post("/v1/query", json={"query": ""}).status_code == 422


def test_chat_degrades_without_llm(engine):
    client = TestClient(create_app(engine))
    response = client.post("/v1/chat", json={"question": "What timer does the UE start?"})
    assert response.status_code == 503
    body = response.json()
    assert body["error"] == "llm_unconfigured"
    assert body["sources"], "retrieval results must still be included"


def test_chat_with_llm(built_index):
    out, _ = built_index
    engine = Engine.from_index_dir(out, small_config(), llm=ScriptedLlm(responses=["T300."]))
    client = TestClient(create_app(engine))
    response = client.post("/v1/chat", json={"question": "What timer does the UE start?"})
    assert response.status_code == 200
    body = response.json()
    assert body["answer"] == "T300."
    assert [s["id"] for s in body["sources"]]
    assert body["sources"][0]["heading_path"][-1] == "5.3 Connection setup"


def test_chat_mcq_requires_options(built_index):
    out, _ = built_index
    engine = Engine.from_index_dir(out, small_config(), llm=ScriptedLlm(responses=["x"]))
    client = TestClient(create_app(engine))
    response = client.post("/v1/chat", json={"question": "q", "kind": "mcq"})
    assert response.status_code == 400
    ok = client.post(
        "/v1/chat", json={"question": "which timer?", "kind": "mcq", "options": ["T300", "T301"]}
    )
    assert ok.status_code == 200


def test_chat_llm_failure_is_502_with_sources(built_index):
    out, _ = built_index
    engine = Engine.from_index_dir(out, small_config(), llm=ScriptedLlm(responses=[]))
    client = TestClient(create_app(engine))
    response = client.post("/v1/chat", json={"question": "What timer does the UE start?"})
    assert response.status_code == 502
    body = response.json()
    assert body["error"] == "llm_unavailable"
    assert body["sources"]


def test_get_chunk_by_id(engine):
    client = TestClient(create_app(engine))
    chunk_id = next(iter(engine.chunks))
    record = client.get(f"/v1/chunks/{chunk_id}").json()
    assert record["id"] == chunk_id
    assert client.get("/v1/chunks/nope").status_code == 404


def test_engine_satisfies_eval_pipeline_contract(built_index):
    out, _ = built_index
    answer_text = '"answer": "option 1: T300"'
    engine = Engine.from_index_dir(out, small_config(), llm=ScriptedLlm(responses=[answer_text]))
    from standrag.evaluation import McqItem, run_mcq_eval

    items = [McqItem(question="Which timer?", options=["T300", "T301"], answer_index=1)]
    report = run_mcq_eval(items, engine)
    assert report.accuracy == 1.0


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def test_load_config_defaults(tmp_path):
    config = load_config(None)
    assert config.retrieval.top_k1 == 1000
    assert config.retrieval.top_k2 == 5
    assert config.chunking.max_chars == 1250
    assert config.embedder.dim == 1024
    assert config.bm25.k1 == 1.2 and config.bm25.b == 0.75


def test_load_config_file_and_unknown_key(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"retrieval": {"top_k1": 100, "top_k2": 3}}))
    config = load_config(path)
    assert config.retrieval.top_k1 == 100
    path.write_text(json.dumps({"no_such_section": {}}))
    from standrag.errors import InputError

    with pytest.raises(InputError, match="no_such_section"):
        load_config(path)


def test_env_overrides_switch_kinds(monkeypatch):
    monkeypatch.setenv("EMBEDDER_URL", "http://embed.example")
    monkeypatch.setenv("RERANKER_URL", "http://rerank.example")
    monkeypatch.setenv("LLM_URL", "http://llm.example")
    config = load_config(None)
    assert config.embedder.kind == "remote"
    assert config.embedder.endpoint == "http://embed.example"
    assert config.reranker.kind == "remote_cross_encoder"
    assert config.llm.configured


def test_config_round_trip():
    config = small_config()
    assert config_from_dict(config.to_dict()).to_dict() == config.to_dict()
