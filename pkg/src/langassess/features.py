"""Feature extraction for written responses.

Four feature families are computed from a prompt/response pair:

* content    — IDF-weighted bag-of-words cosine against the prompt
* coherence  — adjacent-sentence token overlap, cross-sentence reference
               proxy, adjacent-sentence embedding cosines
* lexis      — CEFR wordlist proportions and a differential-word-use
               log-odds score from a low/high proficiency model pair
* grammar    — sentence-depth statistics from a pluggable depth provider
               and rule-based error rates

All features are pure functions of the text and the loaded resources, so a
response extracted twice yields bit-identical vectors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .text import (
    EmbeddingSpace,
    IdfTable,
    NGramModel,
    cosine,
    embed,
    split_sentences,
    tokenize,
)

__all__ = [
    "WritingResponse",
    "FeatureVector",
    "GrammarRule",
    "FeatureResources",
    "SUBCONSTRUCTS",
    "content_features",
    "coherence_features",
    "lexis_features",
    "grammar_features",
    "extract_all",
    "heuristic_depth",
    "load_wordlist",
    "load_grammar_rules",
]

SUBCONSTRUCTS = ("content", "coherence", "lexis", "grammar")

CEFR_LEVELS = ("A1", "A2", "B1", "B2", "C1", "C2")

# Anaphoric pronouns used by the cross-sentence reference proxy.
PRONOUNS = frozenset(
    {
        "he", "she", "it", "they", "him", "her", "them", "his", "hers",
        "its", "their", "theirs", "this", "that", "these", "those",
        "himself", "herself", "itself", "themselves",
    }
)

# Function words excluded from "content token" comparisons.
STOPWORDS = PRONOUNS | frozenset(
    {
        "a", "an", "the", "and", "or", "but", "so", "nor", "yet",
        "in", "on", "at", "of", "to", "for", "with", "from", "by", "about",
        "as", "into", "over", "under", "out", "off", "up", "down",
        "is", "are", "was", "were", "be", "been", "being", "am",
        "do", "does", "did", "have", "has", "had",
        "will", "would", "can", "could", "may", "might", "must", "shall",
        "should", "not", "no", "there", "then", "than", "too", "very",
        "just", "also", "i", "you", "we", "me", "us", "my", "your", "our",
        "mine", "yours", "ours",
    }
)

# Markers counted by the built-in syntactic-depth heuristic.
SUBORDINATION_MARKERS = frozenset(
    {
        "because", "although", "though", "while", "when", "whenever",
        "where", "wherever", "if", "unless", "until", "since", "after",
        "before", "once", "that", "which", "who", "whom", "whose",
        "why", "whether",
    }
)

_VOWELS = frozenset("aeiou")


@dataclass(frozen=True)
class WritingResponse:
    """A written response to a timed prompt."""

    response_id: str
    prompt_id: str
    text: str
    prep_seconds: int = 0
    write_seconds: int = 0
    demographics: str | None = None

    def __post_init__(self) -> None:
        if self.prep_seconds < 0 or self.write_seconds < 0:
            raise ValueError("timing fields must be non-negative")


@dataclass(frozen=True)
class FeatureVector:
    """Named feature values plus the sub-construct each feature belongs to."""

    values: Mapping[str, float]
    grouping: Mapping[str, str]

    def __post_init__(self) -> None:
        for name, value in self.values.items():
            if not math.isfinite(value):
                raise ValueError(f"feature {name!r} is not finite")
        for name, group in self.grouping.items():
            if group not in SUBCONSTRUCTS:
                raise ValueError(f"unknown sub-construct {group!r} for {name!r}")
        if set(self.grouping) != set(self.values):
            raise ValueError("grouping must cover exactly the feature names")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.values)

    def as_list(self, schema: Sequence[str] | None = None) -> list[float]:
        names = schema if schema is not None else self.names
        return [float(self.values[n]) for n in names]


def _text_of(response: WritingResponse | str) -> str:
    return response.text if isinstance(response, WritingResponse) else response


def _partial(values: dict[str, float], group: str) -> FeatureVector:
    return FeatureVector(values=dict(values), grouping={n: group for n in values})


# ---------------------------------------------------------------------------
# content


def content_features(
    prompt_text: str, response: WritingResponse | str, idf: IdfTable
) -> FeatureVector:
    """Cosine between IDF-weighted token-count vectors of prompt and response."""

    def weighted_counts(text: str) -> dict[str, float]:
        counts: dict[str, float] = {}
        for tok in tokenize(text).tokens:
            counts[tok] = counts.get(tok, 0.0) + 1.0
        return {t: c * idf.weight(t) for t, c in counts.items()}

    pvec = weighted_counts(prompt_text)
    rvec = weighted_counts(_text_of(response))
    dot = sum(w * rvec.get(t, 0.0) for t, w in pvec.items())
    np_ = math.sqrt(sum(w * w for w in pvec.values()))
    nr = math.sqrt(sum(w * w for w in rvec.values()))
    sim = 0.0 if np_ == 0.0 or nr == 0.0 else min(1.0, dot / (np_ * nr))
    return _partial({"content_similarity": sim}, "content")


# ---------------------------------------------------------------------------
# coherence


def _sentence_tokens(text: str) -> list[tuple[str, ...]]:
    spans = split_sentences(text, require_uppercase=False)
    return [tokenize(text[a:b]).tokens for a, b in spans]


def _content_set(tokens: Sequence[str]) -> frozenset[str]:
    return frozenset(t for t in tokens if t not in STOPWORDS)


def coherence_features(
    response: WritingResponse | str, space: EmbeddingSpace
) -> FeatureVector:
    """Adjacent-sentence overlap and embedding cosines plus a reference proxy.

    The reference proxy counts pronouns appearing after the first sentence
    plus content-token types repeated from any earlier sentence — a cheap
    stand-in for cross-sentence coreference chains.
    """
    text = _text_of(response)
    sentences = _sentence_tokens(text)

    overlaps: list[float] = []
    cosines: list[float] = []
    for left, right in zip(sentences, sentences[1:]):
        ls, rs = _content_set(left), _content_set(right)
        union = ls | rs
        overlaps.append(len(ls & rs) / len(union) if union else 0.0)
        cosines.append(
            cosine(embed(space, " ".join(left)), embed(space, " ".join(right)))
        )

    references = 0
    seen: set[str] = set()
    for i, sent in enumerate(sentences):
        if i > 0:
            references += sum(1 for t in sent if t in PRONOUNS)
            references += len({t for t in _content_set(sent) if t in seen})
        seen.update(_content_set(sent))

    return _partial(
        {
            "sentence_overlap": sum(overlaps) / len(overlaps) if overlaps else 0.0,
            "reference_chain_count": float(references),
            "adjacent_similarity_mean": sum(cosines) / len(cosines) if cosines else 0.0,
            "adjacent_similarity_min": min(cosines) if cosines else 0.0,
        },
        "coherence",
    )


# ---------------------------------------------------------------------------
# lexis


def load_wordlist(path: str | Path) -> dict[str, str]:
    """Load a tab-separated token→CEFR-level wordlist."""
    wordlist: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'token<TAB>level'")
        token, level = parts[0].strip().lower(), parts[1].strip().upper()
        if level not in CEFR_LEVELS:
            raise ValueError(f"line {lineno}: unknown CEFR level {level!r}")
        wordlist[token] = level
    return wordlist


def lexis_features(
    response: WritingResponse | str,
    wordlist: Mapping[str, str],
    dwu: tuple[NGramModel, NGramModel],
) -> FeatureVector:
    """CEFR-level proportions plus a low/high proficiency log-odds score.

    ``dwu`` is a (low, high) pair of language models; the score is the mean
    per-token log P_high − log P_low, positive when the text looks more like
    high-proficiency writing.
    """
    tokens = tokenize(_text_of(response)).tokens
    values = {f"cefr_{lvl.lower()}": 0.0 for lvl in CEFR_LEVELS}
    values["cefr_unlisted"] = 0.0
    if tokens:
        for tok in tokens:
            level = wordlist.get(tok)
            key = f"cefr_{level.lower()}" if level else "cefr_unlisted"
            values[key] += 1.0
        for key in list(values):
            values[key] /= len(tokens)

    low, high = dwu
    if tokens:
        lp_low = low.sequence_logprobs(tokens)
        lp_high = high.sequence_logprobs(tokens)
        values["word_use_logodds"] = sum(
            h - l for h, l in zip(lp_high, lp_low)
        ) / len(tokens)
    else:
        values["word_use_logodds"] = 0.0
    return _partial(values, "lexis")


# ---------------------------------------------------------------------------
# grammar


def heuristic_depth(sentence: str) -> int:
    """1 + number of subordination markers in the sentence."""
    tokens = tokenize(sentence).tokens
    return 1 + sum(1 for t in tokens if t in SUBORDINATION_MARKERS)


@dataclass(frozen=True)
class GrammarRule:
    """A declarative matcher over adjacent token pairs (or any single pattern)."""

    rule_id: str
    error_type: str
    pattern: Mapping[str, object]

    def matches(self, tokens: Sequence[str]) -> list[tuple[int, int]]:
        """Return (start, end) token-index spans of every match."""
        kind = self.pattern.get("type")
        spans: list[tuple[int, int]] = []
        if kind == "token_pair":
            first = set(self.pattern.get("first", ()))
            second = self.pattern.get("second")
            second_class = self.pattern.get("second_class")
            for i in range(len(tokens) - 1):
                if tokens[i] not in first:
                    continue
                nxt = tokens[i + 1]
                if second is not None:
                    if nxt in set(second):
                        spans.append((i, i + 2))
                elif second_class == "vowel_initial":
                    if nxt[:1] in _VOWELS:
                        spans.append((i, i + 2))
                elif second_class == "consonant_initial":
                    if nxt[:1].isalpha() and nxt[:1] not in _VOWELS:
                        spans.append((i, i + 2))
        elif kind == "doubled":
            for i in range(len(tokens) - 1):
                if tokens[i] == tokens[i + 1]:
                    spans.append((i, i + 2))
        else:
            raise ValueError(f"rule {self.rule_id!r}: unknown pattern type {kind!r}")
        return spans


def load_grammar_rules(path: str | Path) -> list[GrammarRule]:
    """Load rules from a JSON file: {"rules": [{rule_id, error_type, pattern}]}."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    rules = []
    for raw in doc["rules"]:
        rules.append(
            GrammarRule(
                rule_id=str(raw["rule_id"]),
                error_type=str(raw["error_type"]),
                pattern=dict(raw["pattern"]),
            )
        )
    return rules


def grammar_features(
    response: WritingResponse | str,
    depth_provider: Callable[[str], int],
    rules: Sequence[GrammarRule],
) -> FeatureVector:
    """Sentence-depth mean/max plus one matches-per-token rate per error type."""
    text = _text_of(response)
    spans = split_sentences(text, require_uppercase=False)
    depths = [depth_provider(text[a:b]) for a, b in spans]
    if any(d < 1 for d in depths):
        raise ValueError("depth provider must return values >= 1")

    tokens = tokenize(text).tokens
    error_types: list[str] = []
    counts: dict[str, int] = {}
    for rule in rules:
        if rule.error_type not in counts:
            error_types.append(rule.error_type)
            counts[rule.error_type] = 0
        counts[rule.error_type] += len(rule.matches(tokens))

    values = {
        "depth_mean": sum(depths) / len(depths) if depths else 0.0,
        "depth_max": float(max(depths)) if depths else 0.0,
    }
    for etype in error_types:
        rate = counts[etype] / len(tokens) if tokens else 0.0
        values[f"error_rate_{etype}"] = min(1.0, rate)
    return _partial(values, "grammar")


# ---------------------------------------------------------------------------
# assembly


@dataclass(frozen=True)
class FeatureResources:
    """Everything extract_all needs, loaded once and shared."""

    idf: IdfTable
    space: EmbeddingSpace
    wordlist: Mapping[str, str]
    dwu_low: NGramModel
    dwu_high: NGramModel
    grammar_rules: Sequence[GrammarRule]
    depth_provider: Callable[[str], int] = field(default=heuristic_depth)


def extract_all(
    prompt_text: str,
    response: WritingResponse | str,
    resources: FeatureResources,
) -> FeatureVector:
    """Concatenate the four family vectors in a fixed schema order."""
    parts = (
        content_features(prompt_text, response, resources.idf),
        coherence_features(response, resources.space),
        lexis_features(response, resources.wordlist, (resources.dwu_low, resources.dwu_high)),
        grammar_features(response, resources.depth_provider, resources.grammar_rules),
    )
    values: dict[str, float] = {}
    grouping: dict[str, str] = {}
    for part in parts:
        for name in part.values:
            if name in values:
                raise ValueError(f"duplicate feature name {name!r}")
            values[name] = float(part.values[name])
            grouping[name] = part.grouping[name]
    return FeatureVector(values=values, grouping=grouping)
