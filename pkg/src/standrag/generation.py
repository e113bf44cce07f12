"""Prompt assembly and answer generation through a chat-completion API.

The two prompt templates are fixed text; rendering replaces only the
placeholder sites, so downstream answer parsing can rely on the exact
instruction wording.  MCQ answers are requested in a machine-readable
format and the model is told how to refuse when the context is
insufficient.
"""

from __future__ import annotations

import enum
import logging
import os
import threading
from dataclasses import dataclass, field

import httpx

from ._http import post_json
from .chunker import Chunk
from .errors import GenerationError, InputError, TransportError

logger = logging.getLogger(__name__)

ENV_LLM_URL = "LLM_URL"
ENV_LLM_API_KEY = "LLM_API_KEY"

MCQ_PROMPT_TEMPLATE = """You are an expert on 3GPP standards. Based on the provided context, answer the multiple-choice question by selecting the correct option.
Context:{retrieved documents}
Question:{question}
Options:{options}
Instructions:
1. Carefully review the context provided to determine the correct answer.
2. If the context does not provide sufficient information, respond with "Insufficient context to answer."
3. Provide your answer in the exact format: "answer": "option X: [selected option content]".
Answer:"""

OPEN_ENDED_PROMPT_TEMPLATE = """The following is a question about telecommunications and networking. Just give the answer based on the provided context.
Context:{retrieved documents}
Question:{statement}
Answer:"""

CONTEXT_SEPARATOR = "\n---\n"

INSUFFICIENT_CONTEXT = "Insufficient context to answer."


class PromptKind(str, enum.Enum):
    MCQ = "mcq"
    OPEN_ENDED = "open_ended"


@dataclass
class LlmClientSpec:
    endpoint: str = ""
    model: str = "LLama3-8B-Instruct"
    temperature: float = 0.0
    max_tokens: int = 512
    timeout_s: float = 60.0
    parallelism: int = 2

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @property
    def resolved_endpoint(self) -> str:
        return (os.environ.get(ENV_LLM_URL) or self.endpoint or "").rstrip("/")

    @property
    def configured(self) -> bool:
        return bool(self.resolved_endpoint)


@dataclass
class SourceRef:
    chunk_id: str
    filename: str
    heading_path: list[str]
    score: float


@dataclass
class Answer:
    text: str
    cited_chunks: list[SourceRef]
    prompt_kind: PromptKind


def serialize_options(options: list[str]) -> str:
    """"option 1: ..." per line, 1-based, matching the demanded answer format."""
    return "\n".join(f"option {i}: {text}" for i, text in enumerate(options, start=1))


def assemble_context(chunks: list[Chunk], include_source_tags: bool = True) -> str:
    """Join chunk contents with the separator, tagging each with its source.

    Tags are inert provenance text; pass ``include_source_tags=False`` for
    bare chunk contents.
    """
    parts = []
    for chunk in chunks:
        if include_source_tags:
            tag = f"[{chunk.filename} | {' > '.join(chunk.heading_path)}]"
            parts.append(f"{tag}\n{chunk.content}")
        else:
            parts.append(chunk.content)
    return CONTEXT_SEPARATOR.join(parts)


def assemble_prompt(
    kind: PromptKind,
    question: str,
    context: str,
    options: list[str] | None = None,
) -> str:
    """Instantiate the template for ``kind``, touching only placeholder sites.

    Raises:
        InputError: MCQ prompt requested without options.
    """
    if kind == PromptKind.MCQ:
        if not options:
            raise InputError("MCQ prompt requires a non-empty options list")
        return (
            MCQ_PROMPT_TEMPLATE.replace("{retrieved documents}", context)
            .replace("{question}", question)
            .replace("{options}", serialize_options(options))
        )
    return OPEN_ENDED_PROMPT_TEMPLATE.replace("{retrieved documents}", context).replace(
        "{statement}", question
    )


class HttpLlmClient:
    """Chat-completion client: ``POST {endpoint}/v1/chat/completions`` with a
    single user message; the answer is ``choices[0].message.content``.
    In-flight calls are bounded by ``spec.parallelism``."""

    def __init__(self, spec: LlmClientSpec, client: httpx.Client | None = None):
        if not spec.configured:
            raise ValueError("LLM client requires an endpoint (config or LLM_URL)")
        self.spec = spec
        self._client = client or httpx.Client(timeout=spec.timeout_s)
        self._gate = threading.Semaphore(max(1, spec.parallelism))

    def complete(self, prompt: str) -> str:
        headers = {}
        api_key = os.environ.get(ENV_LLM_API_KEY)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.spec.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.spec.temperature,
            "max_tokens": self.spec.max_tokens,
        }
        with self._gate:
            data = post_json(
                self._client,
                f"{self.spec.resolved_endpoint}/v1/chat/completions",
                payload,
                headers=headers or None,
            )
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat completion response: {data!r}") from exc


@dataclass
class Generator:
    """retrieve -> assemble context -> assemble prompt -> one LLM call."""

    retriever: object  # Retriever
    llm: object  # anything with .complete(prompt) -> str
    include_source_tags: bool = True

    def generate(
        self,
        question: str,
        kind: PromptKind = PromptKind.OPEN_ENDED,
        options: list[str] | None = None,
    ) -> Answer:
        """Answer ``question`` from retrieved context.

        Retrieval always uses the question text alone; MCQ options appear
        only in the prompt.  On LLM failure the raised error carries the
        retrieval results so callers can still show sources.
        """
        retrieved = self.retriever.retrieve(question)
        return self.generate_with_retrieved(question, retrieved, kind, options)

    def generate_with_retrieved(
        self,
        question: str,
        retrieved: list[tuple[Chunk, float]],
        kind: PromptKind = PromptKind.OPEN_ENDED,
        options: list[str] | None = None,
    ) -> Answer:
        context = assemble_context([c for c, _ in retrieved], self.include_source_tags)
        prompt = assemble_prompt(kind, question, context, options if kind == PromptKind.MCQ else None)
        try:
            text = self.llm.complete(prompt)
        except TransportError as exc:
            raise GenerationError(f"LLM call failed: {exc}", retrieved=retrieved) from exc
        cited = [
            SourceRef(
                chunk_id=chunk.chunk_id,
                filename=chunk.filename,
                heading_path=list(chunk.heading_path),
                score=score,
            )
            for chunk, score in retrieved
        ]
        return Answer(text=text, cited_chunks=cited, prompt_kind=kind)


@dataclass
class ScriptedLlm:
    """Test double: returns scripted responses (cycled) or echoes the prompt."""

    responses: list[str] = field(default_factory=list)
    echo: bool = False
    calls: list[str] = field(default_factory=list)

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        if self.echo:
            return prompt
        if not self.responses:
            raise TransportError("scripted LLM has no responses")
        return self.responses[(len(self.calls) - 1) % len(self.responses)]
