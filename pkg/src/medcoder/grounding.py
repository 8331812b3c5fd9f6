"""Anchoring generated text back into the source record.

Three pieces: sentence segmentation with exact character offsets, fuzzy
span matching for short diagnosis strings, and Okapi BM25 over the
record's sentences for longer evidence phrases.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

from .errors import EmptyQuery

DEFAULT_K1 = 1.5
DEFAULT_B = 0.75
DEFAULT_FUZZY_THRESHOLD = 0.7

# Trailing-period tokens that do not end a sentence.
_ABBREVIATIONS = frozenset(
    {
        "dr", "mr", "mrs", "ms", "st", "vs", "e.g", "i.e", "etc",
        "approx", "jr", "sr", "prof", "no", "fig", "dept",
    }
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_WORD_BOUNDARY_RE = re.compile(r"\S+")


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokens; no stemming, no stopwords."""
    return _TOKEN_RE.findall(text.lower())


def levenshtein(a: str, b: str) -> int:
    """Edit distance (insert/delete/substitute, unit costs)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


@dataclass(frozen=True)
class Sentence:
    start: int
    end: int
    text: str


@dataclass
class SentenceIndex:
    """BM25-ready view of one record's sentences.

    Offsets slice the original text exactly; the stretches between
    consecutive sentences are whitespace only.
    """

    record_text: str
    sentences: list[Sentence]
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    def __post_init__(self):
        self._tokens = [tokenize(s.text) for s in self.sentences]
        self._tf = [Counter(toks) for toks in self._tokens]
        self.df: Counter = Counter()
        for tf in self._tf:
            for term in tf:
                self.df[term] += 1
        lengths = [len(toks) for toks in self._tokens]
        self.avg_len = sum(lengths) / len(lengths) if lengths else 0.0
        self._lengths = lengths

    def score_sentence(self, query_terms: list[str], i: int) -> float:
        """Okapi BM25 score of sentence i against the query terms."""
        n = len(self.sentences)
        tf = self._tf[i]
        dl = self._lengths[i]
        norm = self.k1 * (1 - self.b + self.b * dl / self.avg_len) if self.avg_len else self.k1
        score = 0.0
        for term in query_terms:
            f = tf.get(term, 0)
            if f == 0:
                continue
            df = self.df[term]
            idf = math.log((n - df + 0.5) / (df + 0.5) + 1.0)
            score += idf * f * (self.k1 + 1) / (f + norm)
        return score


def _is_abbreviation(text: str, dot_pos: int) -> bool:
    # Word immediately preceding the period, lowercased, dots kept so
    # "e.g." matches on its final dot.
    start = dot_pos
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    word = text[start:dot_pos].lower()
    return word in _ABBREVIATIONS


def segment_sentences(record_text: str, k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> SentenceIndex:
    """Split on sentence terminators (. ! ?) and newline runs.

    A period after a known abbreviation does not terminate. Empty input
    yields an empty index.
    """
    boundaries: list[int] = []  # exclusive end positions of raw segments
    i = 0
    n = len(record_text)
    while i < n:
        ch = record_text[i]
        if ch in "!?":
            boundaries.append(i + 1)
        elif ch == ".":
            # a period mid-token ("e.g", "S80.01", "3.5") never terminates
            mid_token = i + 1 < n and not record_text[i + 1].isspace()
            if not mid_token and not _is_abbreviation(record_text, i):
                # swallow a run of closing periods/ellipses
                j = i
                while j + 1 < n and record_text[j + 1] == ".":
                    j += 1
                boundaries.append(j + 1)
                i = j
        elif ch == "\n":
            j = i
            while j + 1 < n and record_text[j + 1] in "\r\n":
                j += 1
            boundaries.append(j + 1)
            i = j
        i += 1
    if not boundaries or boundaries[-1] < n:
        boundaries.append(n)

    sentences: list[Sentence] = []
    seg_start = 0
    for end in boundaries:
        raw = record_text[seg_start:end]
        stripped = raw.strip()
        if stripped:
            lead = len(raw) - len(raw.lstrip())
            start = seg_start + lead
            sentences.append(Sentence(start=start, end=start + len(stripped), text=stripped))
        seg_start = end
    return SentenceIndex(record_text=record_text, sentences=sentences, k1=k1, b=b)


@dataclass(frozen=True)
class GroundedSpan:
    text: str
    start: int
    end: int
    score: float
    grounded: bool


def ungrounded_span(text: str) -> GroundedSpan:
    return GroundedSpan(text=text, start=-1, end=-1, score=0.0, grounded=False)


def fuzzy_ground(
    query: str,
    record_text: str,
    threshold: float = DEFAULT_FUZZY_THRESHOLD,
) -> GroundedSpan:
    """Locate the record substring most similar to the query.

    Similarity is 1 - levenshtein(lower(q), lower(w)) / max(|q|, |w|) over
    candidate windows aligned to word boundaries with length within ±50%
    of the query length. A verbatim case-insensitive occurrence wins with
    score 1.0. Ties break to the earliest start offset.
    """
    if not query:
        raise EmptyQuery("fuzzy_ground requires a non-empty query")
    lowered_record = record_text.lower()
    lowered_query = query.lower()

    # Fast path: verbatim occurrence.
    pos = lowered_record.find(lowered_query)
    if pos >= 0:
        end = pos + len(query)
        return GroundedSpan(
            text=record_text[pos:end], start=pos, end=end, score=1.0, grounded=True
        )

    words = list(_WORD_BOUNDARY_RE.finditer(record_text))
    if not words:
        return ungrounded_span(query)

    qlen = len(query)
    min_len = max(1, math.floor(qlen * 0.5))
    max_len = math.ceil(qlen * 1.5)

    best_score = -1.0
    best_span = (0, 0)
    starts = [m.start() for m in words]
    ends = [m.end() for m in words]
    for si, start in enumerate(starts):
        for end in ends[si:]:
            wlen = end - start
            if wlen < min_len:
                continue
            if wlen > max_len:
                break
            window = lowered_record[start:end]
            dist = levenshtein(lowered_query, window)
            sim = 1.0 - dist / max(qlen, wlen)
            if sim > best_score:
                best_score = sim
                best_span = (start, end)

    if best_score < 0:
        return ungrounded_span(query)
    start, end = best_span
    grounded = best_score >= threshold
    if not grounded:
        return GroundedSpan(
            text=query, start=start, end=end, score=best_score, grounded=False
        )
    return GroundedSpan(
        text=record_text[start:end], start=start, end=end, score=best_score, grounded=True
    )


def bm25_top_sentences(
    query: str, index: SentenceIndex, n: int
) -> list[tuple[Sentence, float]]:
    """Top-n sentences by BM25 score, descending; zero-score sentences
    excluded; ties break to the earlier sentence."""
    if n <= 0:
        return []
    terms = tokenize(query)
    if not terms:
        return []
    scored = []
    for i, sentence in enumerate(index.sentences):
        score = index.score_sentence(terms, i)
        if score > 0.0:
            scored.append((i, score))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return [(index.sentences[i], score) for i, score in scored[:n]]
