"""Command-line entry points: ingest, query, chat, serve, eval."""

from __future__ import annotations

import logging
import sys

import click

from ..errors import EngineError
from ..evaluation import load_mcq_dataset, load_open_dataset, run_llm_eval, run_mcq_eval, write_report
from ..generation import HttpLlmClient, LlmClientSpec
from .config import load_config
from .engine import Engine
from .store import build_index, load_index_config


def _engine_for(index_dir: str, config_path: str | None) -> Engine:
    if config_path:
        config = load_config(config_path)
    else:
        config = load_index_config(index_dir)
    return Engine.from_index_dir(index_dir, config)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool):
    """Retrieval-augmented generation engine for technical-standards corpora."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def ingest(corpus: str, out: str, config_path: str | None):
    """Parse, chunk, embed, and index a corpus directory."""
    config = load_config(config_path)
    try:
        manifest = build_index(corpus, config, out)
    except EngineError as exc:
        raise click.ClickException(str(exc))
    click.echo(
        f"indexed {manifest.document_count} documents into {manifest.chunk_count} chunks at {out}"
    )


@main.command()
@click.option("--index", "index_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--top-k", type=int, default=None, help="Override the result count.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("question")
def query(index_dir: str, top_k: int | None, config_path: str | None, question: str):
    """Retrieve the most relevant chunks for a question."""
    try:
        engine = _engine_for(index_dir, config_path)
        results = engine.retrieve(question, top_k)
    except EngineError as exc:
        raise click.ClickException(str(exc))
    for rank, (chunk, score) in enumerate(results, start=1):
        click.echo(f"[{rank}] {score:.4f}  {chunk.filename} | {' > '.join(chunk.heading_path)}")
        click.echo(f"    {chunk.body.strip()[:200]}")


@main.command()
@click.option("--index", "index_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def chat(index_dir: str, config_path: str | None):
    """Interactive REPL: prints the answer, then numbered sources."""
    try:
        engine = _engine_for(index_dir, config_path)
    except EngineError as exc:
        raise click.ClickException(str(exc))
    if not engine.llm_configured:
        click.echo("note: no LLM configured (set LLM_URL); showing retrieval only", err=True)
    click.echo("ask a question (empty line or Ctrl-D to quit)")
    while True:
        try:
            question = click.prompt(">", prompt_suffix=" ").strip()
        except (EOFError, click.Abort):
            break
        if not question:
            break
        try:
            if engine.llm_configured:
                answer = engine.chat(question)
                click.echo(answer.text)
                sources = [(ref.filename, ref.heading_path, ref.score) for ref in answer.cited_chunks]
            else:
                results = engine.retrieve(question)
                sources = [(c.filename, c.heading_path, score) for c, score in results]
        except EngineError as exc:
            click.echo(f"error: {exc}", err=True)
            continue
        for i, (filename, path, score) in enumerate(sources, start=1):
            click.echo(f"  [{i}] {filename} | {' > '.join(path)} ({score:.4f})")


@main.command()
@click.option("--index", "index_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--ui", "ui_dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Static UI bundle to host at /.")
def serve(index_dir: str, port: int, host: str, config_path: str | None, ui_dir: str | None):
    """Serve the HTTP API (and optionally the chat UI)."""
    from .app import serve as run_server

    try:
        engine = _engine_for(index_dir, config_path)
    except EngineError as exc:
        raise click.ClickException(str(exc))
    run_server(engine, host, port, ui_dir)


@main.command(name="eval")
@click.option("--index", "index_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", required=True, type=click.Choice(["mcq", "open"]))
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--judge-url", default=None, help="Judge endpoint for open mode (defaults to the LLM).")
@click.option("--judge-model", default=None)
def eval_cmd(
    index_dir: str,
    dataset: str,
    mode: str,
    report_path: str,
    config_path: str | None,
    judge_url: str | None,
    judge_model: str | None,
):
    """Run an MCQ or open-ended evaluation and write a JSON report."""
    try:
        engine = _engine_for(index_dir, config_path)
        if mode == "mcq":
            items = load_mcq_dataset(dataset)
            report = run_mcq_eval(items, engine, parallelism=engine.config.llm.parallelism)
        else:
            items = load_open_dataset(dataset)
            judge_spec = LlmClientSpec(
                endpoint=judge_url or engine.config.llm.endpoint,
                model=judge_model or engine.config.llm.model,
            )
            judge = HttpLlmClient(judge_spec)
            report = run_llm_eval(items, engine, judge, parallelism=engine.config.llm.parallelism)
        write_report(report, report_path, mode=mode, config_echo=engine.config.to_dict())
    except EngineError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"{mode} accuracy: {report.accuracy:.3f} ({report.correct}/{report.n})")
    if report.failures:
        click.echo(f"{len(report.failures)} item(s) failed; see {report_path}", err=True)


if __name__ == "__main__":
    sys.exit(main())
