"""HTTP API over a loaded engine.

Endpoints (all JSON, UTF-8):
    GET  /v1/health        -> {"status": "ok", "chunks": N}
    POST /v1/query         -> retrieval only; works with no LLM at all
    POST /v1/chat          -> retrieval + generation; 503 "llm_unconfigured"
                              (sources still included) when no LLM is set
    GET  /v1/chunks/{id}   -> one chunk record

Every request logs one line with its timing breakdown.
"""

from __future__ import annotations

import logging
import time
from typing import Literal

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from ..chunker import Chunk
from ..errors import GenerationError
from ..generation import PromptKind
from .engine import Engine

logger = logging.getLogger(__name__)


class QueryRequest(BaseModel):
    query: str = Field(min_length=1)
    top_k: int | None = Field(default=None, ge=1)


class ChatRequest(BaseModel):
    question: str = Field(min_length=1)
    kind: Literal["open_ended", "mcq"] = "open_ended"
    options: list[str] | None = None
    top_k: int | None = Field(default=None, ge=1)


def _chunk_payload(chunk: Chunk, score: float | None = None) -> dict:
    payload = {
        "id": chunk.chunk_id,
        "filename": chunk.filename,
        "heading_path": chunk.heading_path,
        "content": chunk.content,
    }
    if score is not None:
        payload["score"] = score
    return payload


def _fmt_timings(timings: dict[str, float]) -> str:
    return " ".join(f"{key}={value:.2f}" for key, value in timings.items())


def create_app(engine: Engine, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="standrag", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "chunks": engine.chunk_count}

    @app.post("/v1/query")
    def query(request: QueryRequest):
        t0 = time.perf_counter()
        results, timings = engine.retrieve_timed(request.query, request.top_k)
        timings["total_ms"] = (time.perf_counter() - t0) * 1000
        logger.info("query chunks=%d %s", len(results), _fmt_timings(timings))
        return {"chunks": [_chunk_payload(c, score) for c, score in results]}

    @app.post("/v1/chat")
    def chat(request: ChatRequest):
        kind = PromptKind(request.kind)
        if kind == PromptKind.MCQ and not request.options:
            return JSONResponse(
                status_code=400,
                content={"error": "missing_options", "detail": "MCQ chat requires options"},
            )
        t0 = time.perf_counter()
        retrieved, timings = engine.retrieve_timed(request.question, request.top_k)
        sources = [_chunk_payload(c, score) for c, score in retrieved]
        if not engine.llm_configured:
            logger.info("chat degraded llm_unconfigured %s", _fmt_timings(timings))
            return JSONResponse(
                status_code=503,
                content={
                    "error": "llm_unconfigured",
                    "detail": "no LLM endpoint configured; retrieval results included",
                    "sources": sources,
                },
            )
        try:
            t_llm = time.perf_counter()
            answer = engine.generate_from(request.question, retrieved, kind, request.options)
            timings["llm_ms"] = (time.perf_counter() - t_llm) * 1000
        except GenerationError as exc:
            logger.warning("chat llm failure: %s", exc)
            return JSONResponse(
                status_code=502,
                content={"error": "llm_unavailable", "detail": str(exc), "sources": sources},
            )
        timings["total_ms"] = (time.perf_counter() - t0) * 1000
        logger.info("chat sources=%d %s", len(sources), _fmt_timings(timings))
        return {"answer": answer.text, "kind": answer.prompt_kind.value, "sources": sources}

    @app.get("/v1/chunks/{chunk_id}")
    def get_chunk(chunk_id: str):
        chunk = engine.chunks.get(chunk_id)
        if chunk is None:
            return JSONResponse(status_code=404, content={"error": "chunk_not_found"})
        return _chunk_payload(chunk)

    if ui_dir:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(engine: Engine, host: str, port: int, ui_dir: str | None = None) -> None:
    """Run uvicorn until SIGINT/SIGTERM; in-flight requests finish first."""
    import uvicorn

    uvicorn.run(create_app(engine, ui_dir), host=host, port=port, log_level="info")
