"""Batch evaluation: MCQ accuracy and judge-based open-ended scoring.

MCQ runs ask the pipeline each question (options excluded from retrieval),
parse the selected option out of the model's reply, and score exact
matches.  Open-ended runs generate a candidate answer and ask a judge
model to compare it with the gold answer, counting replies that begin
with "yes".  Unparseable or failed items are scored incorrect and logged
in the report; the run always continues.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import EngineError, InputError
from .generation import INSUFFICIENT_CONTEXT, PromptKind

logger = logging.getLogger(__name__)

UNTAGGED = "untagged"

_ANSWER_RE = re.compile(r'"\s*answer\s*"\s*:\s*"\s*option\s*(\d+)', re.IGNORECASE)
_OPTION_RE = re.compile(r"\boption\s*(\d+)\b", re.IGNORECASE)

JUDGE_PROMPT_TEMPLATE = """You are evaluating an answer to a telecommunications question.
Question:{question}
Ground truth answer:{ground truth}
Candidate answer:{candidate}
Does the candidate answer convey the same information as the ground truth? Reply with Yes or No only.
Verdict:"""


class NoAnswerError(EngineError):
    """The LLM output contained no usable option selection."""


class JudgeParseError(EngineError):
    """The judge replied with neither Yes nor No."""


@dataclass
class McqItem:
    question: str
    options: list[str]
    answer_index: int  # 1-based
    release_tag: str | None = None

    def __post_init__(self):
        if len(self.options) < 2:
            raise InputError("MCQ item needs at least 2 options")
        if not 1 <= self.answer_index <= len(self.options):
            raise InputError(f"answer_index {self.answer_index} out of range")


@dataclass
class OpenItem:
    question: str
    gold_answer: str
    release_tag: str | None = None

    def __post_init__(self):
        if not self.question or not self.gold_answer:
            raise InputError("open item needs non-empty question and gold_answer")


@dataclass
class ReleaseStats:
    n: int = 0
    correct: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else 0.0


@dataclass
class EvalReport:
    n: int
    correct: int
    per_release: dict[str, ReleaseStats]
    failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else 0.0

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "per_release": {
                tag: {"n": s.n, "correct": s.correct, "accuracy": s.accuracy}
                for tag, s in sorted(self.per_release.items())
            },
            "failures": [{"index": i, "reason": reason} for i, reason in self.failures],
        }


def parse_mcq_answer(llm_output: str, n_options: int) -> int:
    """Extract the selected 1-based option index from an LLM reply.

    Tries the demanded '"answer": "option X' format first, then an explicit
    insufficient-context refusal, then the first standalone "option N"
    mention.

    Raises:
        NoAnswerError: refusal, no option found, or index out of range.
    """
    if n_options < 2:
        raise InputError("n_options must be >= 2")
    m = _ANSWER_RE.search(llm_output)
    if m is None:
        if INSUFFICIENT_CONTEXT.rstrip(".").lower() in llm_output.lower():
            raise NoAnswerError("insufficient context")
        m = _OPTION_RE.search(llm_output)
    if m is None:
        raise NoAnswerError("no option selection found in output")
    index = int(m.group(1))
    if not 1 <= index <= n_options:
        raise NoAnswerError(f"option {index} out of range (1..{n_options})")
    return index


def parse_judge_verdict(judge_output: str) -> bool:
    """True iff the trimmed reply begins with "yes" (case-insensitive).

    Raises:
        JudgeParseError: reply starts with neither yes nor no.
    """
    verdict = judge_output.strip().lower()
    if verdict.startswith("yes"):
        return True
    if verdict.startswith("no"):
        return False
    raise JudgeParseError(f"unparseable judge verdict: {judge_output[:80]!r}")


def _aggregate(outcomes: list[tuple[str | None, bool, str | None]]) -> EvalReport:
    per_release: dict[str, ReleaseStats] = {}
    failures: list[tuple[int, str]] = []
    correct = 0
    for i, (tag, ok, reason) in enumerate(outcomes):
        stats = per_release.setdefault(tag or UNTAGGED, ReleaseStats())
        stats.n += 1
        if ok:
            stats.correct += 1
            correct += 1
        if reason is not None:
            failures.append((i, reason))
    return EvalReport(
        n=len(outcomes), correct=correct, per_release=per_release, failures=failures
    )


def _run_items(items, evaluate_one, parallelism: int) -> EvalReport:
    if not items:
        raise InputError("dataset is empty")
    workers = max(1, parallelism)
    if workers == 1 or len(items) == 1:
        outcomes = [evaluate_one(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(evaluate_one, items))
    return _aggregate(outcomes)


def run_mcq_eval(
    items: list[McqItem],
    pipeline,
    report_path: str | Path | None = None,
    parallelism: int = 2,
) -> EvalReport:
    """Accuracy over MCQ items: correct iff the parsed option matches.

    ``pipeline`` is anything with ``generate(question, kind, options)``.
    Generation errors and unparseable outputs are scored incorrect and
    recorded in ``failures``.
    """

    def evaluate_one(item: McqItem):
        try:
            answer = pipeline.generate(item.question, PromptKind.MCQ, item.options)
            index = parse_mcq_answer(answer.text, len(item.options))
        except EngineError as exc:
            return (item.release_tag, False, str(exc))
        return (item.release_tag, index == item.answer_index, None)

    report = _run_items(items, evaluate_one, parallelism)
    if report_path is not None:
        write_report(report, report_path, mode="mcq")
    return report


def run_llm_eval(
    items: list[OpenItem],
    pipeline,
    judge,
    report_path: str | Path | None = None,
    parallelism: int = 2,
) -> EvalReport:
    """Judge-scored accuracy over open-ended items.

    ``judge`` is anything with ``complete(prompt) -> str``; it sees the
    question, the gold answer, and the candidate, and must reply Yes or No.
    """

    def evaluate_one(item: OpenItem):
        try:
            answer = pipeline.generate(item.question, PromptKind.OPEN_ENDED)
            prompt = (
                JUDGE_PROMPT_TEMPLATE.replace("{question}", item.question)
                .replace("{ground truth}", item.gold_answer)
                .replace("{candidate}", answer.text)
            )
            verdict = parse_judge_verdict(judge.complete(prompt))
        except EngineError as exc:
            return (item.release_tag, False, str(exc))
        return (item.release_tag, verdict, None)

    report = _run_items(items, evaluate_one, parallelism)
    if report_path is not None:
        write_report(report, report_path, mode="open")
    return report


def load_mcq_dataset(path: str | Path) -> list[McqItem]:
    """Line-delimited JSON: question / options / answer_index / release_tag."""
    items = []
    for i, record in enumerate(_read_jsonl(path)):
        try:
            items.append(
                McqItem(
                    question=record["question"],
                    options=list(record["options"]),
                    answer_index=int(record["answer_index"]),
                    release_tag=record.get("release_tag"),
                )
            )
        except (KeyError, TypeError, InputError) as exc:
            raise InputError(f"{path}: item {i}: {exc}") from exc
    return items


def load_open_dataset(path: str | Path) -> list[OpenItem]:
    """Line-delimited JSON: question / gold_answer / release_tag."""
    items = []
    for i, record in enumerate(_read_jsonl(path)):
        try:
            items.append(
                OpenItem(
                    question=record["question"],
                    gold_answer=record["gold_answer"],
                    release_tag=record.get("release_tag"),
                )
            )
        except (KeyError, TypeError, InputError) as exc:
            raise InputError(f"{path}: item {i}: {exc}") from exc
    return items


def _read_jsonl(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def write_report(
    report: EvalReport, path: str | Path, mode: str, config_echo: dict | None = None
) -> None:
    payload = {
        "mode": mode,
        "generated_at": datetime.now(timezone.utc).isoformat(),
        **report.to_dict(),
    }
    if config_echo is not None:
        payload["config"] = config_echo
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("wrote %s eval report to %s (accuracy=%.3f)", mode, path, report.accuracy)
