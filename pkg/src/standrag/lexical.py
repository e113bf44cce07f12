"""Text analysis, inverted index, and Okapi BM25 scoring.

The analyzer lowercases and splits on non-alphanumerics, with one carve-out
for standards numbering: "." and "-" are kept when flanked by digits, so
"38.331" survives as a single searchable token.  Hyphenated technical terms
("NR-U") are split by default; set ``split_hyphenated=False`` to keep them
whole.  A standard English stop-word list ships as a data file and can be
overridden per index.

BM25 uses the smoothed IDF ``ln(1 + (N - n + 0.5) / (n + 0.5))`` so scores
are never negative, with the canonical defaults k1=1.2, b=0.75.  Scoring is
restricted to chunks that contain at least one query term (gathered from
the posting lists), term-at-a-time with an accumulator map.
"""

from __future__ import annotations

import heapq
import math
import re
from dataclasses import dataclass, field
from importlib import resources

from .chunker import Chunk
from .errors import BuildError, EmptyQueryError

RankedList = list[tuple[str, float]]

_TOKEN_RE = re.compile(r"[^\W_]+(?:[.\-][^\W_]+)*", re.UNICODE)


def load_default_stop_words() -> frozenset[str]:
    text = resources.files("standrag").joinpath("data/stopwords_en.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


@dataclass(frozen=True)
class Analyzer:
    lowercase: bool = True
    split_hyphenated: bool = True
    stop_words: frozenset[str] = field(default_factory=load_default_stop_words)

    def fingerprint(self) -> str:
        import hashlib

        key = "\x00".join(
            [str(self.lowercase), str(self.split_hyphenated), *sorted(self.stop_words)]
        )
        return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


def _resplit(token: str, split_hyphenated: bool):
    """Break a raw token at '.'/'-' joiners that are not digit-flanked."""
    start = 0
    for i in range(1, len(token) - 1):
        ch = token[i]
        if ch == "." or (ch == "-" and split_hyphenated):
            if not (token[i - 1].isdigit() and token[i + 1].isdigit()):
                if i > start:
                    yield token[start:i]
                start = i + 1
    if start < len(token):
        yield token[start:]


def analyze(text: str, analyzer: Analyzer | None = None) -> list[str]:
    """Tokenize, lowercase, and stop-filter ``text``; order preserved."""
    analyzer = analyzer or Analyzer()
    terms: list[str] = []
    for m in _TOKEN_RE.finditer(text):
        for tok in _resplit(m.group(), analyzer.split_hyphenated):
            if analyzer.lowercase:
                tok = tok.lower()
            if tok not in analyzer.stop_words:
                terms.append(tok)
    return terms


@dataclass
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0 <= self.b <= 1:
            raise ValueError("b must be in [0, 1]")


class InvertedIndex:
    """Term -> postings map with the corpus statistics BM25 needs.

    Postings are (chunk_id, tf) pairs sorted by chunk id.  ``doc_len`` maps
    every chunk id (including term-less ones) to its analyzed token count.
    A built index is immutable; concurrent searches are safe.
    """

    def __init__(
        self,
        postings: dict[str, list[tuple[str, int]]],
        doc_len: dict[str, int],
    ):
        self.postings = postings
        self.doc_len = doc_len
        self.N = len(doc_len)
        self.avgdl = (sum(doc_len.values()) / self.N) if self.N else 0.0

    def idf(self, term: str) -> float:
        n = len(self.postings.get(term, ()))
        return math.log(1.0 + (self.N - n + 0.5) / (n + 0.5))


def build_lexical_index(chunks: list[Chunk], analyzer: Analyzer | None = None) -> InvertedIndex:
    """Index chunk contents; chunks whose analyzed stream is empty get
    doc_len 0 and appear in no posting list.

    Raises:
        BuildError: on a duplicate chunk id.
    """
    analyzer = analyzer or Analyzer()
    doc_len: dict[str, int] = {}
    tf_maps: dict[str, dict[str, int]] = {}
    for chunk in chunks:
        if chunk.chunk_id in doc_len:
            raise BuildError(f"duplicate chunk id: {chunk.chunk_id}")
        terms = analyze(chunk.content, analyzer)
        doc_len[chunk.chunk_id] = len(terms)
        for term in terms:
            by_term = tf_maps.setdefault(term, {})
            by_term[chunk.chunk_id] = by_term.get(chunk.chunk_id, 0) + 1

    postings = {
        term: sorted(by_term.items()) for term, by_term in sorted(tf_maps.items())
    }
    return InvertedIndex(postings=postings, doc_len=doc_len)


def bm25_score(
    tf: int, doc_len: int, n_term: int, n_docs: int, avgdl: float, params: Bm25Params
) -> float:
    """Single (term, chunk) BM25 contribution; shared by search and tests."""
    idf = math.log(1.0 + (n_docs - n_term + 0.5) / (n_term + 0.5))
    denom = tf + params.k1 * (1.0 - params.b + params.b * doc_len / avgdl)
    return idf * tf * (params.k1 + 1.0) / denom


def bm25_search(
    index: InvertedIndex,
    query: str,
    k: int,
    params: Bm25Params | None = None,
    analyzer: Analyzer | None = None,
) -> RankedList:
    """Top-k chunks containing at least one query term, scored with BM25.

    Duplicate query terms contribute once per distinct term.  Ties are
    broken by chunk id ascending.  If k exceeds the candidate count, all
    candidates are returned.

    Raises:
        EmptyQueryError: when the query analyzes to zero terms.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    params = params or Bm25Params()
    terms = list(dict.fromkeys(analyze(query, analyzer)))
    if not terms:
        raise EmptyQueryError(f"query analyzed to zero terms: {query!r}")
    if index.N == 0 or index.avgdl == 0:
        return []

    scores: dict[str, float] = {}
    for term in terms:
        plist = index.postings.get(term)
        if not plist:
            continue
        n_term = len(plist)
        for chunk_id, tf in plist:
            contribution = bm25_score(
                tf, index.doc_len[chunk_id], n_term, index.N, index.avgdl, params
            )
            scores[chunk_id] = scores.get(chunk_id, 0.0) + contribution

    top = heapq.nsmallest(k, scores.items(), key=lambda item: (-item[1], item[0]))
    return [(chunk_id, score) for chunk_id, score in top]
