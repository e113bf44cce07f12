"""Hierarchical + recursive chunking of parsed documents.

Every section yields chunks prefixed with the serialized heading path, so a
retrieved chunk always carries its provenance inside the text itself.
Section bodies that exceed the character budget are split recursively:
prefer breaking at blank lines, then newlines, then sentence boundaries,
then spaces, and finally hard cuts.  Split points consume the separator;
pieces that fit are greedily packed back together (separator included) so
chunks approach the budget instead of fragmenting at every separator.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .corpus import Document

DEFAULT_SEPARATORS = ["\n\n", "\n", ". ", " "]

HEADING_JOINER = " > "


@dataclass
class ChunkingConfig:
    max_chars: int = 1250
    separator_precedence: list[str] = field(default_factory=lambda: list(DEFAULT_SEPARATORS))
    overlap_chars: int = 0

    def __post_init__(self):
        if self.max_chars < 100:
            raise ValueError("max_chars must be >= 100")
        if self.overlap_chars != 0:
            raise ValueError("overlap_chars is fixed at 0")
        if any(not sep for sep in self.separator_precedence):
            raise ValueError("separators must be non-empty strings")


@dataclass
class Chunk:
    chunk_id: str
    doc_id: str
    filename: str
    heading_path: list[str]
    content: str
    char_start: int
    char_end: int
    section_index: int
    release_tag: str | None = None

    @property
    def header(self) -> str:
        return HEADING_JOINER.join(self.heading_path)

    @property
    def body(self) -> str:
        """The body slice without the heading-path header line."""
        return self.content.split("\n", 1)[1]


def recursive_split(text: str, cfg: ChunkingConfig) -> list[tuple[int, int]]:
    """Split ``text`` into (start, end) spans of at most ``cfg.max_chars``.

    Spans are disjoint, ordered, and jointly cover every character that is
    not part of a consumed separator occurrence.  Adjacent small pieces are
    packed into one span when the combined span (separators included) still
    fits the budget.  When no separator class applies, the text is hard-cut
    at the budget.
    """
    if not text:
        return []
    return _split(text, 0, len(text), cfg.separator_precedence, cfg.max_chars)


def _split(
    text: str, lo: int, hi: int, separators: list[str], max_chars: int
) -> list[tuple[int, int]]:
    if hi <= lo:
        return []
    if hi - lo <= max_chars:
        return [(lo, hi)]
    if not separators:
        return [(s, min(s + max_chars, hi)) for s in range(lo, hi, max_chars)]

    sep, rest = separators[0], separators[1:]
    pieces = _split_on(text, lo, hi, sep)
    if len(pieces) <= 1:
        return _split(text, lo, hi, rest, max_chars)

    spans: list[tuple[int, int]] = []
    buf: tuple[int, int] | None = None

    def flush():
        nonlocal buf
        if buf is not None:
            spans.append(buf)
            buf = None

    for ps, pe in pieces:
        if pe - ps > max_chars:
            flush()
            spans.extend(_split(text, ps, pe, rest, max_chars))
        elif buf is None:
            buf = (ps, pe)
        elif pe - buf[0] <= max_chars:
            buf = (buf[0], pe)
        else:
            flush()
            buf = (ps, pe)
    flush()
    return spans


def _split_on(text: str, lo: int, hi: int, sep: str) -> list[tuple[int, int]]:
    """Non-empty piece spans of text[lo:hi] between occurrences of ``sep``."""
    pieces: list[tuple[int, int]] = []
    pos = lo
    while pos < hi:
        found = text.find(sep, pos, hi)
        if found == -1:
            pieces.append((pos, hi))
            break
        if found > pos:
            pieces.append((pos, found))
        pos = found + len(sep)
    return pieces


def chunk_id_for(doc_id: str, section_index: int, char_start: int, char_end: int) -> str:
    """Stable id from (doc_id, section index, span); identical across rebuilds."""
    key = f"{doc_id}\x00{section_index}\x00{char_start}\x00{char_end}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


def hierarchical_chunk(doc: Document, cfg: ChunkingConfig | None = None) -> list[Chunk]:
    """Chunk every section of ``doc``, one chunk per split span.

    Each chunk's content is the " > "-joined heading path, a newline, then
    the body slice.  The budget applies to the body slice only.  Sections
    with empty (or whitespace-only) bodies yield no chunk.
    """
    cfg = cfg or ChunkingConfig()
    chunks: list[Chunk] = []
    for idx, sec in enumerate(doc.sections):
        if not sec.text.strip():
            continue
        header = HEADING_JOINER.join(sec.heading_path)
        for start, end in recursive_split(sec.text, cfg):
            chunks.append(
                Chunk(
                    chunk_id=chunk_id_for(doc.doc_id, idx, start, end),
                    doc_id=doc.doc_id,
                    filename=doc.filename,
                    heading_path=list(sec.heading_path),
                    content=header + "\n" + sec.text[start:end],
                    char_start=start,
                    char_end=end,
                    section_index=idx,
                    release_tag=doc.release_tag,
                )
            )
    return chunks
