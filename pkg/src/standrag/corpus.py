"""Document parsing and boilerplate-section filtering.

Raw input arrives either as plaintext with ATX-style ``#`` heading markers
(one ``#`` per nesting level) or as line-delimited JSON records with
``level``/``heading``/``text`` fields.  Both forms are parsed into a flat,
ordered list of sections, each carrying the full heading path from the
document root.  Boilerplate sections (contents, references, annexes, ...)
are then dropped together with their entire subtree.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import ParseError

# Headings equal to these (case-insensitive, numbering prefix trimmed) or
# matching a trailing-"*" prefix pattern are boilerplate by default.
DEFAULT_BLOCKLIST = frozenset({"contents", "references", "foreword", "annex*"})

_HEADING_RE = re.compile(r"^(#+)[ \t]+(\S.*)$")
# Whole-line markers for non-textual content; dropped during parsing.
_NONTEXT_RE = re.compile(r"^\[(image|table|figure)\b[^\]]*\]$", re.IGNORECASE)
# Leading section numbering such as "3 ", "5.3.1 ", "A.2 " is ignored when
# matching headings against the blocklist.
_NUMBERING_RE = re.compile(r"^[0-9][0-9.\s]*")


@dataclass
class RawDocument:
    """Unparsed document handed to the engine.

    ``body`` is plaintext for the ``heading_text`` format and either JSONL
    text or a list of record dicts for the ``structured_records`` format.
    """

    filename: str
    body: str | list[dict]

    def __post_init__(self):
        if not self.filename:
            raise ParseError("RawDocument.filename must be non-empty")


@dataclass
class Section:
    level: int
    heading: str
    heading_path: list[str]
    text: str


@dataclass
class Document:
    doc_id: str
    filename: str
    sections: list[Section] = field(default_factory=list)
    release_tag: str | None = None


def parse_document(
    raw: RawDocument,
    format: str = "heading_text",
    *,
    doc_id: str | None = None,
    release_tag: str | None = None,
) -> Document:
    """Parse a raw document into a section tree (flat list with paths).

    Body text preceding the first heading becomes a level-1 section with an
    empty heading so no input text is lost.  Whole-line image/table/figure
    markers are dropped.  An empty body yields a document with no sections.

    Raises:
        ParseError: on a malformed structured record (the message names the
            offending record index).
    """
    if format == "heading_text":
        if not isinstance(raw.body, str):
            raise ParseError(f"{raw.filename}: heading_text input requires a str body")
        flat = _parse_heading_text(raw.body)
    elif format == "structured_records":
        flat = _parse_structured(raw)
    else:
        raise ParseError(f"unknown document format: {format!r}")

    sections = _attach_paths(flat)
    return Document(
        doc_id=doc_id if doc_id is not None else raw.filename,
        filename=raw.filename,
        sections=sections,
        release_tag=release_tag,
    )


def _parse_heading_text(body: str) -> list[tuple[int, str, str]]:
    """Split ``#``-marked plaintext into (level, heading, text) triples.

    Body lines keep their original line endings, so concatenating section
    texts reproduces the input byte-exactly minus heading lines, dropped
    markers, and a whitespace-only preamble.
    """
    sections: list[tuple[int, str, str]] = []
    level, heading = 1, ""
    lines: list[str] = []
    seen_heading = False

    def flush():
        text = "".join(lines)
        if seen_heading or text.strip():
            sections.append((level, heading, text))

    for line in body.splitlines(keepends=True):
        m = _HEADING_RE.match(line)
        if m:
            flush()
            level, heading = len(m.group(1)), m.group(2).strip()
            lines = []
            seen_heading = True
        elif _NONTEXT_RE.match(line.strip()):
            continue
        else:
            lines.append(line)
    flush()
    return sections


def _parse_structured(raw: RawDocument) -> list[tuple[int, str, str]]:
    if isinstance(raw.body, str):
        records = []
        for i, line in enumerate(raw.body.splitlines()):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ParseError(f"{raw.filename}: record {i}: invalid JSON ({exc})") from exc
    else:
        records = raw.body

    sections: list[tuple[int, str, str]] = []
    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise ParseError(f"{raw.filename}: record {i}: expected an object")
        if "level" not in rec or "heading" not in rec:
            raise ParseError(f"{raw.filename}: record {i}: missing level/heading")
        level, heading = rec["level"], rec["heading"]
        if not isinstance(level, int) or level < 1:
            raise ParseError(f"{raw.filename}: record {i}: level must be an integer >= 1")
        if not isinstance(heading, str):
            raise ParseError(f"{raw.filename}: record {i}: heading must be a string")
        text = rec.get("text", "")
        if not isinstance(text, str):
            raise ParseError(f"{raw.filename}: record {i}: text must be a string")
        lines = text.split("\n")
        kept = [line for line in lines if not _NONTEXT_RE.match(line.strip())]
        if len(kept) != len(lines):
            text = "\n".join(kept)
        heading = heading.replace("\r", " ").replace("\n", " ").strip()
        sections.append((level, heading, text))
    return sections


def _attach_paths(flat: list[tuple[int, str, str]]) -> list[Section]:
    """Compute heading paths: a level-L section is a child of the nearest
    preceding section with level < L (level jumps are accepted as-is)."""
    out: list[Section] = []
    stack: list[tuple[int, str]] = []
    for level, heading, text in flat:
        while stack and stack[-1][0] >= level:
            stack.pop()
        path = [h for _, h in stack] + [heading]
        stack.append((level, heading))
        out.append(Section(level=level, heading=heading, heading_path=path, text=text))
    return out


def normalize_heading(heading: str) -> str:
    """Lowercase and trim any leading section numbering ("3 References" -> "references")."""
    return _NUMBERING_RE.sub("", heading).strip().lower()


def heading_matches(heading: str, blocklist: frozenset[str] | set[str]) -> bool:
    norm = normalize_heading(heading)
    for pattern in blocklist:
        if pattern.endswith("*"):
            if norm.startswith(pattern[:-1]):
                return True
        elif norm == pattern:
            return True
    return False


def filter_sections(doc: Document, blocklist: frozenset[str] | set[str] = DEFAULT_BLOCKLIST) -> Document:
    """Drop every section whose heading matches the blocklist, with its subtree.

    A section's subtree is the contiguous run of following sections whose
    level is greater than its own.  Survivor order is preserved; idempotent.
    """
    survivors: list[Section] = []
    skip_level: int | None = None
    for sec in doc.sections:
        if skip_level is not None:
            if sec.level > skip_level:
                continue
            skip_level = None
        if heading_matches(sec.heading, blocklist):
            skip_level = sec.level
            continue
        survivors.append(sec)
    return Document(
        doc_id=doc.doc_id,
        filename=doc.filename,
        sections=survivors,
        release_tag=doc.release_tag,
    )
