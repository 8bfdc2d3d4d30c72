"""Deterministic text primitives shared by the rest of the pipeline.

Everything here is a pure function of its inputs: tokenization, rule-based
sentence splitting, smoothed IDF tables, add-k n-gram language models, and
LSA-style embeddings built from a truncated SVD of the tf-idf term-document
matrix.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "TokenSequence",
    "IdfTable",
    "NGramModel",
    "EmbeddingSpace",
    "Document",
    "tokenize",
    "split_sentences",
    "build_idf",
    "train_ngram",
    "train_embeddings",
    "embed",
    "cosine",
    "load_corpus",
]

# Word tokens: runs of letters/digits, with internal apostrophes kept so
# contractions stay single tokens. Terminal punctuation is never matched.
_TOKEN_RE = re.compile(r"[^\W_]+(?:['’][^\W_]+)*", re.UNICODE)

# Words whose trailing period does not end a sentence.
DEFAULT_ABBREVIATIONS = frozenset(
    {
        "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "vs", "etc",
        "fig", "no", "al", "inc", "dept", "approx", "eg", "ie",
    }
)

_UNKNOWN = "<unk>"
_PAD = "<s>"


@dataclass(frozen=True)
class TokenSequence:
    """Lowercased word tokens plus their character offsets in the source."""

    tokens: tuple[str, ...]
    spans: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.spans):
            raise ValueError("tokens and spans must be the same length")
        prev_end = -1
        for token, (start, end) in zip(self.tokens, self.spans):
            if not token:
                raise ValueError("empty token")
            if start < 0 or end <= start or start < prev_end:
                raise ValueError("spans must be non-overlapping and increasing")
            prev_end = end

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def tokenize(text: str) -> TokenSequence:
    """Split ``text`` into lowercase word tokens with source spans."""
    tokens: list[str] = []
    spans: list[tuple[int, int]] = []
    for match in _TOKEN_RE.finditer(text):
        tokens.append(match.group(0).lower())
        spans.append((match.start(), match.end()))
    return TokenSequence(tuple(tokens), tuple(spans))


def split_sentences(
    text: str,
    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS,
    require_uppercase: bool = True,
) -> tuple[tuple[int, int], ...]:
    """Return (start, end) spans of sentences, partitioning the non-whitespace text.

    A boundary is a ``.``, ``?`` or ``!`` followed by whitespace and then a
    letter (uppercase only unless ``require_uppercase`` is False). Periods
    after a word in the abbreviation stop-list do not break. The lenient mode
    exists for callers that need case-insensitive behaviour.
    """
    n = len(text)
    breaks: list[int] = []  # index just past the terminator
    for i, ch in enumerate(text):
        if ch not in ".?!":
            continue
        j = i + 1
        if j >= n or not text[j].isspace():
            continue
        while j < n and text[j].isspace():
            j += 1
        if j >= n:
            continue
        nxt = text[j]
        if require_uppercase:
            if not (nxt.isalpha() and nxt.isupper()):
                continue
        elif not nxt.isalpha():
            continue
        if ch == ".":
            # Walk back over the word preceding the period.
            k = i
            while k > 0 and (text[k - 1].isalnum() or text[k - 1] in "'’"):
                k -= 1
            word = text[k:i].lower()
            if word in abbreviations:
                continue
        breaks.append(i + 1)

    spans: list[tuple[int, int]] = []
    cursor = 0
    for brk in breaks + [n]:
        segment = text[cursor:brk]
        offset = len(segment) - len(segment.lstrip())
        start = cursor + offset
        end = cursor + len(segment.rstrip())
        if end > start:
            spans.append((start, end))
        cursor = brk
    return tuple(spans)


@dataclass(frozen=True)
class Document:
    """A corpus document: id plus raw text."""

    doc_id: str
    text: str


def load_corpus(path: str | Path) -> list[Document]:
    """Load a corpus file: JSON-lines with {"id","text"} or one document per line."""
    path = Path(path)
    docs: list[Document] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            if path.suffix == ".jsonl":
                record = json.loads(line)
                docs.append(Document(str(record["id"]), str(record["text"])))
            else:
                docs.append(Document(f"doc-{lineno}", line))
    return docs


def _as_texts(corpus: Iterable[Document | str]) -> list[str]:
    return [d.text if isinstance(d, Document) else d for d in corpus]


@dataclass(frozen=True)
class IdfTable:
    """Smoothed inverse-document-frequency weights: ln((N+1)/(df+1)) + 1."""

    doc_count: int
    weights: Mapping[str, float]

    def __post_init__(self) -> None:
        if self.doc_count <= 0:
            raise ValueError("doc_count must be positive")

    @property
    def default_weight(self) -> float:
        """Weight for a token never seen in the corpus (df = 0)."""
        return math.log(self.doc_count + 1) + 1.0

    def weight(self, token: str) -> float:
        return self.weights.get(token, self.default_weight)


def build_idf(corpus: Iterable[Document | str]) -> IdfTable:
    """Build an IdfTable from a corpus of documents."""
    texts = _as_texts(corpus)
    if not texts:
        raise ValueError("corpus must be non-empty")
    df: dict[str, int] = {}
    for text in texts:
        for token in set(tokenize(text).tokens):
            df[token] = df.get(token, 0) + 1
    n = len(texts)
    weights = {t: math.log((n + 1) / (c + 1)) + 1.0 for t, c in df.items()}
    return IdfTable(doc_count=n, weights=weights)


@dataclass(frozen=True)
class NGramModel:
    """Add-k smoothed n-gram model over a closed vocabulary plus one unknown type.

    Conditional probabilities for a context sum to 1 over vocabulary + {unknown}:
    P(t | ctx) = (count(ctx, t) + k) / (total(ctx) + k * (V + 1)).
    """

    order: int
    counts: Mapping[tuple[str, ...], Mapping[str, int]]
    context_totals: Mapping[tuple[str, ...], int]
    vocabulary: frozenset[str]
    smoothing: float

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.smoothing <= 0:
            raise ValueError("smoothing must be positive")

    @property
    def vocabulary_size(self) -> int:
        return len(self.vocabulary)

    def _canon_context(self, context: Sequence[str]) -> tuple[str, ...]:
        ctx = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        return tuple(t if t in self.vocabulary or t == _PAD else _UNKNOWN for t in ctx)

    def cond_prob(self, token: str, context: Sequence[str] = ()) -> float:
        if not self.vocabulary:
            raise ValueError("model has an empty vocabulary")
        ctx = self._canon_context(context)
        total = self.context_totals.get(ctx, 0)
        count = self.counts.get(ctx, {}).get(token, 0) if token in self.vocabulary else 0
        k = self.smoothing
        return (count + k) / (total + k * (self.vocabulary_size + 1))

    def cond_logprob(self, token: str, context: Sequence[str] = ()) -> float:
        return math.log(self.cond_prob(token, context))

    def sequence_logprobs(self, tokens: Sequence[str]) -> list[float]:
        """Per-token conditional log probabilities with padded start context."""
        context: list[str] = [_PAD] * (self.order - 1)
        out: list[float] = []
        for token in tokens:
            out.append(self.cond_logprob(token, context))
            if self.order > 1:
                context = context[1:] + [token if token in self.vocabulary else _UNKNOWN]
        return out


def train_ngram(
    corpus: Iterable[Document | str] | Iterable[Sequence[str]],
    n: int,
    smoothing_k: float = 1.0,
) -> NGramModel:
    """Train an add-k n-gram model. Accepts raw documents or pre-tokenized sequences."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if smoothing_k <= 0:
        raise ValueError("smoothing_k must be positive")
    sequences: list[list[str]] = []
    for item in corpus:
        if isinstance(item, (Document, str)):
            text = item.text if isinstance(item, Document) else item
            sequences.append(list(tokenize(text).tokens))
        else:
            sequences.append([t.lower() for t in item])
    vocab = frozenset(t for seq in sequences for t in seq)
    counts: dict[tuple[str, ...], dict[str, int]] = {}
    totals: dict[tuple[str, ...], int] = {}
    for seq in sequences:
        context = [_PAD] * (n - 1)
        for token in seq:
            ctx = tuple(context)
            bucket = counts.setdefault(ctx, {})
            bucket[token] = bucket.get(token, 0) + 1
            totals[ctx] = totals.get(ctx, 0) + 1
            if n > 1:
                context = context[1:] + [token]
    return NGramModel(
        order=n,
        counts=counts,
        context_totals=totals,
        vocabulary=vocab,
        smoothing=float(smoothing_k),
    )


def ngram_logprob(model: NGramModel, tokens: Sequence[str]) -> float:
    """Log probability of a token sequence; the empty sequence scores 0."""
    return float(sum(model.sequence_logprobs(tokens)))


@dataclass(frozen=True)
class EmbeddingSpace:
    """Truncated-SVD embedding of a tf-idf term-document matrix.

    Term vectors are rows of U_d S_d; document vectors of the training corpus
    are rows of V_d S_d (at full rank their pairwise cosines equal the tf-idf
    document cosines exactly).
    """

    dimension: int
    term_vectors: Mapping[str, np.ndarray]
    metadata: Mapping[str, object] = field(default_factory=dict)
    document_vectors: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        for token, vec in self.term_vectors.items():
            if vec.shape != (self.dimension,):
                raise ValueError(f"term vector for {token!r} has wrong length")


def train_embeddings(
    corpus: Sequence[Document | str],
    d: int,
    corpus_id: str = "",
) -> EmbeddingSpace:
    """Fit an LSA space of dimension ``d`` on the corpus."""
    texts = _as_texts(corpus)
    if not texts:
        raise ValueError("corpus must be non-empty")
    if d > len(texts):
        raise ValueError(f"dimension {d} exceeds document count {len(texts)}")
    idf = build_idf(texts)
    vocab = sorted({t for text in texts for t in tokenize(text).tokens})
    if d > len(vocab):
        raise ValueError(f"dimension {d} exceeds term count {len(vocab)}")
    index = {t: i for i, t in enumerate(vocab)}
    matrix = np.zeros((len(vocab), len(texts)))
    for j, text in enumerate(texts):
        for token in tokenize(text).tokens:
            matrix[index[token], j] += idf.weight(token)
    u, s, vt = np.linalg.svd(matrix, full_matrices=False)
    # Deterministic sign convention: largest-magnitude entry of each left
    # singular vector is positive.
    for col in range(u.shape[1]):
        pivot = np.argmax(np.abs(u[:, col]))
        if u[pivot, col] < 0:
            u[:, col] = -u[:, col]
            vt[col, :] = -vt[col, :]
    term_matrix = u[:, :d] * s[:d]
    doc_matrix = vt[:d].T * s[:d]
    term_vectors = {t: term_matrix[i].copy() for t, i in index.items()}
    return EmbeddingSpace(
        dimension=d,
        term_vectors=term_vectors,
        metadata={"corpus_id": corpus_id, "dimension": d, "documents": len(texts)},
        document_vectors=doc_matrix,
    )


def embed(space: EmbeddingSpace, text: str) -> np.ndarray:
    """Average the term vectors of in-vocabulary tokens; zero vector if none."""
    vectors = [space.term_vectors[t] for t in tokenize(text).tokens if t in space.term_vectors]
    if not vectors:
        return np.zeros(space.dimension)
    return np.mean(vectors, axis=0)


def cosine(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; zero vectors compare as 0."""
    a = np.asarray(u, dtype=float)
    b = np.asarray(v, dtype=float)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))
