"""Fingerprint-based overlap detection between responses and a document index.

Texts are normalized (lowercase, punctuation stripped, whitespace collapsed),
hashed as overlapping character k-grams with a polynomial rolling hash, and
winnowed: each sliding window of w consecutive k-gram hashes contributes its
rightmost minimum. Any exact common normalized substring of length at least
w + k - 1 is then guaranteed to share a selected fingerprint, which the scan
extends to a maximal identical run and reports with source attribution.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

__all__ = [
    "DEFAULT_K",
    "DEFAULT_W",
    "DEFAULT_THRESHOLD",
    "Fingerprint",
    "IndexDocument",
    "DocumentIndex",
    "MatchSpan",
    "PlagiarismFlag",
    "normalize",
    "kgram_hash",
    "fingerprint",
    "index_build",
    "scan",
    "classify",
    "render_highlights",
    "index_to_json",
    "index_from_json",
    "load_index_corpus",
]

DEFAULT_K = 25
DEFAULT_W = 16
DEFAULT_THRESHOLD = 0.30

_MOD = (1 << 61) - 1
_BASE = 263


def normalize(text: str) -> tuple[str, tuple[int, ...]]:
    """Lowercase, strip punctuation, collapse whitespace.

    Returns the normalized string plus, per normalized character, the offset
    of the original character it came from (whitespace runs map to their
    first character).
    """
    chars: list[str] = []
    origins: list[int] = []
    for idx, ch in enumerate(text):
        if ch.isalnum():
            for low in ch.lower():
                chars.append(low)
                origins.append(idx)
        elif ch.isspace():
            if chars and chars[-1] != " ":
                chars.append(" ")
                origins.append(idx)
    while chars and chars[-1] == " ":
        chars.pop()
        origins.pop()
    return "".join(chars), tuple(origins)


def kgram_hash(kgram: str) -> int:
    """Polynomial hash mod 2^61-1 of a k-gram (pure function of its text)."""
    h = 0
    for ch in kgram:
        h = (h * _BASE + ord(ch)) % _MOD
    return h


def _rolling_hashes(text: str, k: int) -> list[int]:
    n = len(text)
    if n < k:
        return []
    hashes = [0] * (n - k + 1)
    h = 0
    for i in range(k):
        h = (h * _BASE + ord(text[i])) % _MOD
    hashes[0] = h
    top = pow(_BASE, k - 1, _MOD)
    for i in range(1, n - k + 1):
        h = ((h - ord(text[i - 1]) * top) * _BASE + ord(text[i + k - 1])) % _MOD
        hashes[i] = h
    return hashes


def _winnow(hashes: Sequence[int], w: int) -> list[int]:
    """Indices of selected hashes: rightmost minimum of each w-window."""
    if not hashes:
        return []
    if len(hashes) <= w:
        best = 0
        for i in range(1, len(hashes)):
            if hashes[i] <= hashes[best]:
                best = i
        return [best]
    selected: list[int] = []
    window: deque[int] = deque()  # indices, hashes increasing
    for i, h in enumerate(hashes):
        while window and hashes[window[-1]] >= h:
            window.pop()
        window.append(i)
        if window[0] <= i - w:
            window.popleft()
        if i >= w - 1:
            if not selected or selected[-1] != window[0]:
                selected.append(window[0])
    return selected


@dataclass(frozen=True)
class Fingerprint:
    hash: int
    position: int  # offset in the normalized text
    original_offset: int


def fingerprint(text: str, k: int = DEFAULT_K, w: int = DEFAULT_W) -> tuple[Fingerprint, ...]:
    """Winnowed fingerprints of the normalized text; empty if shorter than k."""
    if k < 2 or w < 1:
        raise ValueError("require k >= 2 and w >= 1")
    norm, origins = normalize(text)
    hashes = _rolling_hashes(norm, k)
    return tuple(
        Fingerprint(hash=hashes[i], position=i, original_offset=origins[i])
        for i in _winnow(hashes, w)
    )


@dataclass(frozen=True)
class IndexDocument:
    doc_id: str
    source_class: str  # "internet" | "historical"
    text: str
    session_id: str | None = None

    def __post_init__(self) -> None:
        if self.source_class not in ("internet", "historical"):
            raise ValueError(f"unknown source class {self.source_class!r}")


@dataclass(frozen=True)
class _IndexedDoc:
    document: IndexDocument
    norm: str
    origins: tuple[int, ...]


@dataclass(frozen=True)
class DocumentIndex:
    k: int
    w: int
    postings: Mapping[int, tuple[tuple[str, int], ...]]
    documents: Mapping[str, _IndexedDoc]


def index_build(corpus: Iterable[IndexDocument], k: int = DEFAULT_K, w: int = DEFAULT_W) -> DocumentIndex:
    """Fingerprint every document and build the hash → postings mapping."""
    postings: dict[int, list[tuple[str, int]]] = {}
    documents: dict[str, _IndexedDoc] = {}
    for doc in corpus:
        if doc.doc_id in documents:
            raise ValueError(f"duplicate doc_id {doc.doc_id!r}")
        norm, origins = normalize(doc.text)
        documents[doc.doc_id] = _IndexedDoc(doc, norm, origins)
        hashes = _rolling_hashes(norm, k)
        for i in _winnow(hashes, w):
            postings.setdefault(hashes[i], []).append((doc.doc_id, i))
    return DocumentIndex(
        k=k,
        w=w,
        postings={h: tuple(p) for h, p in postings.items()},
        documents=documents,
    )


@dataclass(frozen=True)
class MatchSpan:
    """A maximal identical normalized run between response and one document."""

    doc_id: str
    response_start: int  # original response offsets
    response_end: int
    source_start: int  # original document offsets
    source_end: int
    length: int  # normalized character length
    response_norm: tuple[int, int]
    source_norm: tuple[int, int]


def _orig_range(origins: Sequence[int], text_len: int, start: int, end: int) -> tuple[int, int]:
    last = origins[end - 1]
    return origins[start], last + 1 if last + 1 <= text_len else text_len


def scan(index: DocumentIndex, response_text: str, k: int | None = None, w: int | None = None) -> tuple[MatchSpan, ...]:
    """Find maximal shared runs between the response and indexed documents.

    Every winnowed response fingerprint present in the index is verified
    literally and extended left and right as far as the normalized texts
    agree; duplicate discoveries of the same run collapse. Spans are trimmed
    to start and end on non-space characters and must still span at least k
    normalized characters.
    """
    if k is not None and k != index.k or w is not None and w != index.w:
        raise ValueError(
            f"scan parameters (k={k}, w={w}) do not match index (k={index.k}, w={index.w})"
        )
    norm_r, origins_r = normalize(response_text)
    hashes = _rolling_hashes(norm_r, index.k)
    seen: set[tuple[str, int, int, int, int]] = set()
    spans: list[MatchSpan] = []
    for i in _winnow(hashes, index.w):
        for doc_id, j in index.postings.get(hashes[i], ()):
            indexed = index.documents[doc_id]
            norm_d = indexed.norm
            if norm_r[i : i + index.k] != norm_d[j : j + index.k]:
                continue  # hash collision
            a, b = i, i + index.k
            c, d = j, j + index.k
            while a > 0 and c > 0 and norm_r[a - 1] == norm_d[c - 1]:
                a -= 1
                c -= 1
            while b < len(norm_r) and d < len(norm_d) and norm_r[b] == norm_d[d]:
                b += 1
                d += 1
            while a < b and norm_r[a] == " ":
                a += 1
                c += 1
            while b > a and norm_r[b - 1] == " ":
                b -= 1
                d -= 1
            if b - a < index.k:
                continue
            key = (doc_id, a, b, c, d)
            if key in seen:
                continue
            seen.add(key)
            r_start, r_end = _orig_range(origins_r, len(response_text), a, b)
            s_start, s_end = _orig_range(
                indexed.origins, len(indexed.document.text), c, d
            )
            spans.append(
                MatchSpan(
                    doc_id=doc_id,
                    response_start=r_start,
                    response_end=r_end,
                    source_start=s_start,
                    source_end=s_end,
                    length=b - a,
                    response_norm=(a, b),
                    source_norm=(c, d),
                )
            )
    spans.sort(key=lambda s: (s.response_norm[0], -s.length, s.doc_id, s.source_norm[0]))
    return tuple(spans)


@dataclass(frozen=True)
class PlagiarismFlag:
    response_id: str
    spans: tuple[MatchSpan, ...]
    coverage: float
    classification: str  # "benign" | "suspect"
    threshold: float


def _merged_norm_ranges(spans: Iterable[MatchSpan]) -> list[tuple[int, int]]:
    ranges = sorted(s.response_norm for s in spans)
    merged: list[tuple[int, int]] = []
    for start, end in ranges:
        if merged and start <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def classify(
    response_id: str,
    response_text: str,
    spans: Sequence[MatchSpan],
    threshold: float = DEFAULT_THRESHOLD,
) -> PlagiarismFlag:
    """Coverage = matched fraction of the normalized response; flag at threshold."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    norm, _ = normalize(response_text)
    if norm:
        covered = sum(end - start for start, end in _merged_norm_ranges(spans))
        coverage = min(1.0, covered / len(norm))
    else:
        coverage = 0.0
    return PlagiarismFlag(
        response_id=response_id,
        spans=tuple(spans),
        coverage=coverage,
        classification="suspect" if coverage >= threshold else "benign",
        threshold=threshold,
    )


def render_highlights(flag: PlagiarismFlag, index: DocumentIndex) -> dict:
    """Per-source highlight payload: spans sorted longest-first within sources,
    sources sorted by total matched length; evicted documents are marked
    unavailable rather than dropped."""
    per_doc: dict[str, list[MatchSpan]] = {}
    for span in flag.spans:
        per_doc.setdefault(span.doc_id, []).append(span)

    sources = []
    for doc_id, spans in per_doc.items():
        spans = sorted(spans, key=lambda s: (-s.length, s.response_start))
        indexed = index.documents.get(doc_id)
        entry: dict = {
            "doc_id": doc_id,
            "total_length": sum(s.length for s in spans),
            "spans": [
                {
                    "response_range": [s.response_start, s.response_end],
                    "source_range": [s.source_start, s.source_end],
                    "length": s.length,
                }
                for s in spans
            ],
        }
        if indexed is None:
            entry["source_available"] = False
        else:
            entry["source_available"] = True
            entry["source_class"] = indexed.document.source_class
            if indexed.document.session_id is not None:
                entry["session_id"] = indexed.document.session_id
            for payload_span, span in zip(entry["spans"], spans):
                payload_span["source_excerpt"] = indexed.document.text[
                    span.source_start : span.source_end
                ]
        sources.append(entry)
    sources.sort(key=lambda e: (-e["total_length"], e["doc_id"]))
    return {
        "response_id": flag.response_id,
        "coverage": flag.coverage,
        "classification": flag.classification,
        "sources": sources,
    }


# ---------------------------------------------------------------------------
# persistence


def index_to_json(index: DocumentIndex) -> str:
    """Serialize the corpus and parameters; postings are rebuilt on load."""
    return json.dumps(
        {
            "version": 1,
            "k": index.k,
            "w": index.w,
            "documents": [
                {
                    "doc_id": d.document.doc_id,
                    "source_class": d.document.source_class,
                    "text": d.document.text,
                    "session_id": d.document.session_id,
                }
                for d in index.documents.values()
            ],
        }
    )


def index_from_json(text: str) -> DocumentIndex:
    doc = json.loads(text)
    if doc.get("version") != 1:
        raise ValueError(f"unsupported index version {doc.get('version')!r}")
    corpus = [
        IndexDocument(
            doc_id=d["doc_id"],
            source_class=d["source_class"],
            text=d["text"],
            session_id=d.get("session_id"),
        )
        for d in doc["documents"]
    ]
    return index_build(corpus, k=doc["k"], w=doc["w"])


def load_index_corpus(path: str | Path) -> list[IndexDocument]:
    """Load JSON-lines {"doc_id","source_class","text"} or a directory of .txt files."""
    path = Path(path)
    docs: list[IndexDocument] = []
    if path.is_dir():
        for file in sorted(path.glob("*.txt")):
            docs.append(
                IndexDocument(
                    doc_id=file.stem,
                    source_class="internet",
                    text=file.read_text(encoding="utf-8"),
                )
            )
        return docs
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            docs.append(
                IndexDocument(
                    doc_id=str(raw["doc_id"]),
                    source_class=str(raw["source_class"]),
                    text=str(raw["text"]),
                    session_id=raw.get("session_id"),
                )
            )
    return docs
