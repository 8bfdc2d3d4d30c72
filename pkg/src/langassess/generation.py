"""Reading-item generation: prompt assembly, passage generation, item derivation.

The pipeline goes template -> prompt -> passage -> item drafts.  Passages come
from a pluggable text provider; the bundled mock provider is a seeded n-gram
sampler so that every pipeline run is reproducible byte for byte.  Drafts that
survive the quality filters are handed to the review workflow.
"""

from __future__ import annotations

import json
import math
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .features import STOPWORDS
from .text import (
    Document,
    EmbeddingSpace,
    NGramModel,
    cosine,
    embed,
    split_sentences,
    tokenize,
    train_ngram,
)

CATEGORIES = ("expository", "narrative")
ITEM_KINDS = (
    "vocabulary_in_context",
    "text_completion",
    "comprehension",
    "main_idea",
    "possible_title",
)

ENV_PROVIDER_URL = "LANGASSESS_PROVIDER_URL"
ENV_PROVIDER_KEY = "LANGASSESS_PROVIDER_KEY"

_RESOURCE_DIR = Path(__file__).resolve().parent / "resources"
_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


class GenerationError(Exception):
    """Raised when an item or passage cannot be produced as requested."""


class GenerationExhausted(GenerationError):
    """All regeneration attempts failed; carries the last rejected candidate."""

    def __init__(self, message: str, last_candidate: str | None = None):
        super().__init__(message)
        self.last_candidate = last_candidate


# ---------------------------------------------------------------------------
# Prompt templates


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    text: str


def _render(template_text: str, mapping: Mapping[str, str]) -> str:
    def repl(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in mapping:
            raise GenerationError(f"template placeholder {name!r} has no value")
        return str(mapping[name])

    return _PLACEHOLDER_RE.sub(repl, template_text)


def load_templates(directory: str | Path | None = None) -> dict[str, PromptTemplate]:
    """Load every ``*.txt`` template in a directory, keyed by file stem."""
    directory = Path(directory) if directory is not None else _RESOURCE_DIR / "templates"
    templates: dict[str, PromptTemplate] = {}
    for path in sorted(directory.glob("*.txt")):
        templates[path.stem] = PromptTemplate(path.stem, path.read_text(encoding="utf-8"))
    if not templates:
        raise GenerationError(f"no templates found in {directory}")
    return templates


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class TargetSpec:
    """Requested passage characteristics."""

    category: str
    topic: str
    target_words: int = 100

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"category must be one of {CATEGORIES}, got {self.category!r}")
        if self.target_words < 1:
            raise ValueError("target_words must be positive")


@dataclass(frozen=True)
class GenerationPrompt:
    """A rendered prompt plus the ingredients that went into it."""

    template_id: str
    exemplars: tuple[str, ...]
    category: str
    topic: str
    text: str

    def __post_init__(self) -> None:
        for exemplar in self.exemplars:
            if exemplar not in self.text:
                raise ValueError("rendered prompt must contain every exemplar verbatim")
        if self.category not in self.text or self.topic not in self.text:
            raise ValueError("rendered prompt must contain the target characteristics")


@dataclass(frozen=True)
class Provenance:
    provider: str
    prompt: str
    seed: int


@dataclass(frozen=True)
class Passage:
    passage_id: str
    text: str
    category: str
    topic: str
    provenance: Provenance

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"category must be one of {CATEGORIES}, got {self.category!r}")
        if not self.provenance.provider or not self.provenance.prompt:
            raise ValueError("provenance must name the provider and prompt")


@dataclass(frozen=True)
class Option:
    """One answer option with its screening diagnostics."""

    text: str
    correct: bool
    similarity: float | None = None
    logprob: float | None = None


@dataclass(frozen=True)
class GapSpec:
    """A cloze blank: token position, source span, and its own option set."""

    token_index: int
    char_start: int
    char_end: int
    options: tuple[Option, ...]

    def __post_init__(self) -> None:
        if sum(1 for o in self.options if o.correct) != 1:
            raise ValueError("each gap must have exactly one correct option")


@dataclass(frozen=True)
class ItemDraft:
    item_id: str
    passage_id: str
    kind: str
    stem: str
    options: tuple[Option, ...] = ()
    gaps: tuple[GapSpec, ...] = ()
    answer_span: tuple[int, int] | None = None
    diagnostics: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ITEM_KINDS:
            raise ValueError(f"kind must be one of {ITEM_KINDS}, got {self.kind!r}")
        if self.kind == "vocabulary_in_context":
            if not self.gaps:
                raise ValueError("vocabulary_in_context drafts need at least one gap")
            if self.options:
                raise ValueError("gap-based drafts carry options on their gaps")
        else:
            if self.gaps:
                raise ValueError(f"{self.kind} drafts must not define gaps")
            if sum(1 for o in self.options if o.correct) != 1:
                raise ValueError("draft must have exactly one correct option")
        if self.kind == "comprehension" and self.answer_span is None:
            raise ValueError("comprehension drafts must locate their answer in the passage")


def option_to_dict(option: Option) -> dict:
    return {
        "text": option.text,
        "correct": option.correct,
        "similarity": option.similarity,
        "logprob": option.logprob,
    }


def draft_to_dict(draft: ItemDraft) -> dict:
    """JSON-ready representation used for persistence and byte-level comparison."""
    return {
        "item_id": draft.item_id,
        "passage_id": draft.passage_id,
        "kind": draft.kind,
        "stem": draft.stem,
        "options": [option_to_dict(o) for o in draft.options],
        "gaps": [
            {
                "token_index": g.token_index,
                "char_start": g.char_start,
                "char_end": g.char_end,
                "options": [option_to_dict(o) for o in g.options],
            }
            for g in draft.gaps
        ],
        "answer_span": list(draft.answer_span) if draft.answer_span else None,
        "diagnostics": dict(draft.diagnostics),
    }


def drafts_to_json(drafts: Iterable[ItemDraft]) -> str:
    """Canonical serialization: stable key order, no incidental whitespace."""
    payload = [draft_to_dict(d) for d in drafts]
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def passage_to_dict(passage: Passage) -> dict:
    return {
        "passage_id": passage.passage_id,
        "text": passage.text,
        "category": passage.category,
        "topic": passage.topic,
        "provenance": {
            "provider": passage.provenance.provider,
            "prompt": passage.provenance.prompt,
            "seed": passage.provenance.seed,
        },
    }


def passage_from_dict(record: Mapping[str, object]) -> Passage:
    prov = record["provenance"]
    return Passage(
        passage_id=str(record["passage_id"]),
        text=str(record["text"]),
        category=str(record["category"]),
        topic=str(record["topic"]),
        provenance=Provenance(
            provider=str(prov["provider"]),
            prompt=str(prov["prompt"]),
            seed=int(prov["seed"]),
        ),
    )


# ---------------------------------------------------------------------------
# Providers


class LlmProvider(Protocol):
    provider_id: str

    def generate(self, prompt: str, seed: int, max_tokens: int = 512) -> str:
        ...

    def token_logprobs(self, text: str) -> list[tuple[str, float]]:
        ...


@dataclass(frozen=True)
class CorpusDocument:
    doc_id: str
    text: str
    category: str


def load_generation_corpus(path: str | Path) -> list[CorpusDocument]:
    """Read a JSON-lines corpus with ``id``, ``text`` and ``category`` fields."""
    docs: list[CorpusDocument] = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            docs.append(
                CorpusDocument(str(record["id"]), str(record["text"]), str(record["category"]))
            )
    return docs


def bundled_corpus_path() -> Path:
    return _RESOURCE_DIR / "corpus.jsonl"


def bundled_exemplars() -> list[Passage]:
    """Curated example passages shipped with the package, one pool per category."""
    out: list[Passage] = []
    with (_RESOURCE_DIR / "exemplars.jsonl").open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            out.append(
                Passage(
                    passage_id=str(record["id"]),
                    text=str(record["text"]),
                    category=str(record["category"]),
                    topic=str(record.get("topic", "")),
                    provenance=Provenance("curated", "exemplar", 0),
                )
            )
    return out


def _parse_field(prompt: str, name: str) -> str:
    match = re.search(rf"^{re.escape(name)}:[ \t]*(.*)$", prompt, re.MULTILINE)
    return match.group(1).strip() if match else ""


def _parse_passage_section(prompt: str) -> str:
    match = re.search(
        r"^Passage(?: with gap)?:\n(.*?)(?:\n\nWrite |\Z)", prompt, re.MULTILINE | re.DOTALL
    )
    return match.group(1).strip() if match else ""


class MockLlmProvider:
    """Deterministic stand-in for a hosted text model.

    Passages are sampled from per-category bigram chains trained on a small
    corpus; log probabilities come from the same n-gram machinery, so the
    whole generation pipeline runs offline and reproduces exactly for a seed.
    """

    provider_id = "mock"

    def __init__(
        self,
        corpus: Sequence[CorpusDocument],
        *,
        fixed_word_count: int | None = None,
    ):
        if not corpus:
            raise ValueError("mock provider needs a non-empty corpus")
        self.fixed_word_count = fixed_word_count
        texts = [doc.text for doc in corpus]
        self._lm = train_ngram(texts, n=2)
        self._chains: dict[str, NGramModel] = {}
        for category in sorted({doc.category for doc in corpus}):
            cat_texts = [doc.text for doc in corpus if doc.category == category]
            self._chains[category] = train_ngram(cat_texts, n=2)

    @property
    def language_model(self) -> NGramModel:
        return self._lm

    # -- generation -------------------------------------------------------

    def generate(self, prompt: str, seed: int, max_tokens: int = 512) -> str:
        task = _parse_field(prompt, "TASK")
        if task == "passage":
            return self._gen_passage(prompt, seed)
        if task == "alternative_sentence":
            return self._gen_sentence(prompt, seed)
        if task == "main_idea":
            return self._gen_summary(prompt, kind="idea")
        if task == "title":
            return self._gen_summary(prompt, kind="title")
        if task == "qa":
            return self._gen_qa(prompt, seed)
        raise GenerationError(f"mock provider cannot handle task {task!r}")

    def token_logprobs(self, text: str) -> list[tuple[str, float]]:
        tokens = list(tokenize(text).tokens)
        return list(zip(tokens, self._lm.sequence_logprobs(tokens)))

    # -- internals --------------------------------------------------------

    def _chain_for(self, category: str) -> NGramModel:
        return self._chains.get(category, self._lm)

    def _sample_words(self, chain: NGramModel, rng: np.random.Generator, count: int) -> list[str]:
        words: list[str] = []
        prev = "<s>"
        for _ in range(count):
            bucket = chain.counts.get((prev,)) or chain.counts[("<s>",)]
            tokens = sorted(bucket)
            weights = np.array([bucket[t] for t in tokens], dtype=float)
            cumulative = np.cumsum(weights / weights.sum())
            prev = tokens[int(np.searchsorted(cumulative, rng.random(), side="right"))]
            words.append(prev)
        return words

    @staticmethod
    def _to_sentences(words: list[str], rng: np.random.Generator) -> str:
        sentences: list[str] = []
        i = 0
        while i < len(words):
            length = int(rng.integers(7, 15))
            chunk = words[i : i + length]
            i += length
            sentence = chunk[0].capitalize()
            if len(chunk) > 1:
                sentence += " " + " ".join(chunk[1:])
            sentences.append(sentence + ".")
        return " ".join(sentences)

    def _gen_passage(self, prompt: str, seed: int) -> str:
        category = _parse_field(prompt, "Category")
        topic = _parse_field(prompt, "Topic")
        try:
            target = int(_parse_field(prompt, "Target words"))
        except ValueError:
            target = 100
        rng = np.random.default_rng(seed)
        if self.fixed_word_count is not None:
            n_words = self.fixed_word_count
        else:
            n_words = int(rng.integers(max(1, target - 8), target + 9))
        lead = list(tokenize(topic).tokens)[: max(0, n_words - 1)]
        sampled = self._sample_words(self._chain_for(category), rng, n_words - len(lead))
        return self._to_sentences(lead + sampled, rng)

    def _gen_sentence(self, prompt: str, seed: int) -> str:
        rng = np.random.default_rng(seed)
        length = int(rng.integers(9, 14))
        words = self._sample_words(self._lm, rng, length)
        return words[0].capitalize() + " " + " ".join(words[1:]) + "."

    @staticmethod
    def _top_content_words(text: str, count: int) -> list[str]:
        tally = Counter(t for t in tokenize(text).tokens if t not in STOPWORDS)
        ranked = sorted(tally.items(), key=lambda kv: (-kv[1], kv[0]))
        return [token for token, _ in ranked[:count]]

    def _gen_summary(self, prompt: str, kind: str) -> str:
        passage = _parse_passage_section(prompt)
        words = self._top_content_words(passage, 3)
        if not words:
            words = ["everyday", "life"]
        if kind == "title":
            return " ".join(w.capitalize() for w in words[:2])
        if len(words) == 1:
            return f"The text is mainly about {words[0]}."
        return (
            "The text is mainly about "
            + ", ".join(words[:-1])
            + f", and {words[-1]}."
        )

    def _gen_qa(self, prompt: str, seed: int) -> str:
        count = int(_parse_field(prompt, "Count") or "3")
        passage = _parse_passage_section(prompt)
        spans = split_sentences(passage, require_uppercase=False)
        if not spans:
            return ""
        rng = np.random.default_rng(seed)
        order = list(rng.permutation(len(spans)))
        picks = [order[i % len(order)] for i in range(count)]
        lines: list[str] = []
        for index in picks:
            start, end = spans[index]
            sentence = passage[start:end].strip()
            content = [t for t in tokenize(sentence).tokens if t not in STOPWORDS]
            subject = content[0] if content else "this"
            lines.append(f"Q: What does the text say about {subject}?")
            lines.append(f"A: {sentence}")
        return "\n".join(lines)


class HttpLlmProvider:
    """Bridge to a hosted model behind a JSON endpoint.

    The endpoint address comes from ``LANGASSESS_PROVIDER_URL`` and the
    credential from ``LANGASSESS_PROVIDER_KEY``; both are environment
    variables only, never configuration-file entries.  Requests POST
    ``{prompt, seed, max_tokens}`` and responses carry ``{text,
    token_logprobs}``.
    """

    provider_id = "http"

    def __init__(
        self,
        base_url: str | None = None,
        *,
        timeout: float = 30.0,
        transport=None,
    ):
        self.base_url = base_url or os.environ.get(ENV_PROVIDER_URL)
        if not self.base_url:
            raise GenerationError(
                f"provider URL not configured; set the {ENV_PROVIDER_URL} environment variable"
            )
        self._api_key = os.environ.get(ENV_PROVIDER_KEY)
        self._timeout = timeout
        self._transport = transport

    def _post(self, payload: dict) -> dict:
        import httpx

        headers = {}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        with httpx.Client(transport=self._transport, timeout=self._timeout) as client:
            response = client.post(self.base_url, json=payload, headers=headers)
            response.raise_for_status()
            return response.json()

    def generate(self, prompt: str, seed: int, max_tokens: int = 512) -> str:
        body = self._post({"prompt": prompt, "seed": seed, "max_tokens": max_tokens})
        return str(body["text"])

    def token_logprobs(self, text: str) -> list[tuple[str, float]]:
        body = self._post({"prompt": text, "seed": 0, "max_tokens": 0})
        return [(str(t), float(lp)) for t, lp in body["token_logprobs"]]


# ---------------------------------------------------------------------------
# Prompt assembly and passage generation


def assemble_prompt(
    template: PromptTemplate,
    exemplars: Sequence[Passage],
    target: TargetSpec,
) -> GenerationPrompt:
    """Render a passage prompt containing every exemplar and the target specs."""
    if not any(e.category == target.category for e in exemplars):
        raise GenerationError(f"missing exemplar for category {target.category!r}")
    block = "\n\n".join(e.text for e in exemplars)
    rendered = _render(
        template.text,
        {
            "category": target.category,
            "topic": target.topic,
            "target_words": str(target.target_words),
            "exemplars": block,
        },
    )
    return GenerationPrompt(
        template_id=template.template_id,
        exemplars=tuple(e.text for e in exemplars),
        category=target.category,
        topic=target.topic,
        text=rendered,
    )


@dataclass(frozen=True)
class PassageConstraints:
    min_words: int
    max_words: int
    category: str

    def __post_init__(self) -> None:
        if not 0 < self.min_words <= self.max_words:
            raise ValueError("need 0 < min_words <= max_words")
        if self.category not in CATEGORIES:
            raise ValueError(f"category must be one of {CATEGORIES}")


def generate_passage(
    provider: LlmProvider,
    prompt: GenerationPrompt,
    constraints: PassageConstraints,
    seed: int,
    *,
    max_attempts: int = 5,
    passage_id: str | None = None,
) -> Passage:
    """Call the provider until the word count lands in range, then wrap the text.

    Each retry advances the seed by one so the provider sees a fresh request;
    the provenance records the seed that actually produced the passage.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    last: str | None = None
    for attempt in range(max_attempts):
        attempt_seed = seed + attempt
        text = provider.generate(prompt.text, seed=attempt_seed)
        last = text
        count = len(tokenize(text))
        if constraints.min_words <= count <= constraints.max_words:
            return Passage(
                passage_id=passage_id or f"psg-{seed:08d}",
                text=text,
                category=prompt.category,
                topic=prompt.topic,
                provenance=Provenance(provider.provider_id, prompt.template_id, attempt_seed),
            )
    raise GenerationExhausted(
        f"generation exhausted after {max_attempts} attempts", last_candidate=last
    )


# ---------------------------------------------------------------------------
# Cloze (vocabulary in context)


@dataclass(frozen=True)
class ClozeParams:
    n_blanks: int = 9
    min_gap: int = 5
    band_low: float = 30.0
    band_high: float = 70.0
    min_tokens: int = 40
    n_distractors: int = 3
    semantic_weight: float = 0.5
    space: EmbeddingSpace | None = None

    def __post_init__(self) -> None:
        if self.n_blanks < 1 or self.min_gap < 1 or self.n_distractors < 1:
            raise ValueError("n_blanks, min_gap and n_distractors must be positive")
        if not 0.0 <= self.band_low < self.band_high <= 100.0:
            raise ValueError("need 0 <= band_low < band_high <= 100")
        if not 0.0 <= self.semantic_weight <= 1.0:
            raise ValueError("semantic_weight must be in [0, 1]")


def _percentile_ranks(values: Sequence[float]) -> list[float]:
    """Mean-rank percentiles in [0, 100]; ties share the average of their ranks."""
    n = len(values)
    if n < 2:
        return [50.0] * n
    arr = np.asarray(values, dtype=float)
    out: list[float] = []
    for v in arr:
        below = int(np.sum(arr < v))
        equal = int(np.sum(arr == v))
        mean_rank = below + (equal + 1) / 2.0
        out.append(100.0 * (mean_rank - 1.0) / (n - 1.0))
    return out


def deletion_scores(
    passage: Passage, lm: NGramModel, params: ClozeParams
) -> tuple[list[int], dict[int, float], list[float]]:
    """Candidate blank positions, their composite scores, and all token logprobs.

    A position qualifies when its token is a content word and its in-context
    log-likelihood percentile falls inside the target band.  The score blends
    closeness to the band centre with embedding distance from the topic.
    """
    tokens = tokenize(passage.text)
    logprobs = lm.sequence_logprobs(list(tokens.tokens))
    percentiles = _percentile_ranks(logprobs)
    centre = (params.band_low + params.band_high) / 2.0
    half = (params.band_high - params.band_low) / 2.0
    topic_vec = embed(params.space, passage.topic) if params.space is not None else None

    candidates: list[int] = []
    scores: dict[int, float] = {}
    for i, token in enumerate(tokens.tokens):
        if token in STOPWORDS:
            continue
        if not params.band_low <= percentiles[i] <= params.band_high:
            continue
        band_score = 1.0 - abs(percentiles[i] - centre) / half if half > 0 else 1.0
        if topic_vec is not None:
            distance = (1.0 - cosine(embed(params.space, token), topic_vec)) / 2.0
        else:
            distance = 0.0
        candidates.append(i)
        scores[i] = (1.0 - params.semantic_weight) * band_score + params.semantic_weight * distance
    return candidates, scores, logprobs


def build_cloze(
    passage: Passage,
    lm: NGramModel,
    params: ClozeParams | None = None,
    *,
    item_id: str | None = None,
) -> ItemDraft:
    """Derive a multi-blank vocabulary item from a passage.

    Blanks are picked greedily by composite score subject to a minimum token
    gap; each blank's distractors are vocabulary tokens whose in-context
    likelihood sits strictly below the key's.
    """
    params = params or ClozeParams()
    tokens = tokenize(passage.text)
    if len(tokens) < params.min_tokens:
        raise GenerationError(
            f"passage too short for cloze: {len(tokens)} tokens < {params.min_tokens}"
        )
    candidates, scores, logprobs = deletion_scores(passage, lm, params)
    ranked = sorted(candidates, key=lambda i: (-scores[i], i))
    chosen: list[int] = []
    for index in ranked:
        if all(abs(index - other) >= params.min_gap for other in chosen):
            chosen.append(index)
        if len(chosen) == params.n_blanks:
            break
    if not chosen:
        raise GenerationError("no viable deletion positions in passage")
    chosen.sort()

    vocabulary = sorted(t for t in lm.vocabulary if not t.startswith("<"))
    order = lm.order
    topic_vec = embed(params.space, passage.topic) if params.space is not None else None

    def _sim(word: str) -> float | None:
        if topic_vec is None:
            return None
        return cosine(embed(params.space, word), topic_vec)

    gaps: list[GapSpec] = []
    for index in chosen:
        token = tokens.tokens[index]
        start, end = tokens.spans[index]
        context = ("<s>",) * max(0, order - 1 - index) + tuple(
            tokens.tokens[max(0, index - (order - 1)) : index]
        )
        key_lp = logprobs[index]
        pool = [
            (lm.cond_logprob(candidate, context), candidate)
            for candidate in vocabulary
            if candidate != token
        ]
        below = sorted(
            ((lp, cand) for lp, cand in pool if lp < key_lp),
            key=lambda pair: (-pair[0], pair[1]),
        )
        distractors = below[: params.n_distractors]
        if not distractors:
            raise GenerationError(f"no distractors below key likelihood for {token!r}")
        options = [Option(token, True, similarity=_sim(token), logprob=key_lp)]
        options.extend(
            Option(cand, False, similarity=_sim(cand), logprob=lp) for lp, cand in distractors
        )
        options.sort(key=lambda o: o.text)
        gaps.append(GapSpec(index, start, end, tuple(options)))

    stem = passage.text
    for gap in reversed(gaps):
        stem = stem[: gap.char_start] + "_____" + stem[gap.char_end :]

    diagnostics = {
        "requested_blanks": params.n_blanks,
        "actual_blanks": len(gaps),
        "reduced": len(gaps) < params.n_blanks,
        "band": [params.band_low, params.band_high],
        "min_gap": params.min_gap,
    }
    return ItemDraft(
        item_id=item_id or f"{passage.passage_id}-vic",
        passage_id=passage.passage_id,
        kind="vocabulary_in_context",
        stem=stem,
        gaps=tuple(gaps),
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# Text completion


@dataclass(frozen=True)
class CompletionParams:
    sim_floor: float = 0.10
    sim_ceiling: float = 0.90
    n_distractors: int = 3
    max_candidates: int = 12
    seed: int = 0


def sentence_mean_logprobs(text: str, lm: NGramModel) -> list[float]:
    """Mean per-token log-likelihood for each sentence, tokens scored in context."""
    spans = split_sentences(text)
    tokens = tokenize(text)
    logprobs = lm.sequence_logprobs(list(tokens.tokens))
    means: list[float] = []
    for start, end in spans:
        values = [
            lp
            for lp, (ts, _te) in zip(logprobs, tokens.spans)
            if start <= ts < end
        ]
        means.append(sum(values) / len(values) if values else -math.inf)
    return means


def build_text_completion(
    passage: Passage,
    lm: NGramModel,
    provider: LlmProvider,
    space: EmbeddingSpace,
    templates: Mapping[str, PromptTemplate] | None = None,
    params: CompletionParams | None = None,
    *,
    item_id: str | None = None,
) -> ItemDraft:
    """Blank out the most predictable sentence and offer it among generated foils."""
    params = params or CompletionParams()
    templates = templates or load_templates()
    spans = split_sentences(passage.text)
    if len(spans) < 3:
        raise GenerationError(f"passage has {len(spans)} sentences; need at least 3")
    means = sentence_mean_logprobs(passage.text, lm)
    target = int(np.argmax(means))
    start, end = spans[target]
    span_text = passage.text[start:end]
    removed = span_text.strip()
    lead = len(span_text) - len(span_text.lstrip())
    stem = passage.text[: start + lead] + "_____" + passage.text[start + lead + len(removed) :]

    template = templates["alternative_sentence"]
    rendered = _render(template.text, {"topic": passage.topic, "stem": stem})
    removed_vec = embed(space, removed)

    def _mean_lp(text: str) -> float:
        pairs = provider.token_logprobs(text)
        return sum(lp for _t, lp in pairs) / len(pairs) if pairs else 0.0

    distractors: list[Option] = []
    seen = {removed}
    for i in range(params.max_candidates):
        candidate = provider.generate(rendered, seed=params.seed + i).strip()
        if candidate in seen:
            continue
        similarity = cosine(embed(space, candidate), removed_vec)
        if not params.sim_floor <= similarity <= params.sim_ceiling:
            continue
        seen.add(candidate)
        distractors.append(Option(candidate, False, similarity=similarity, logprob=_mean_lp(candidate)))
        if len(distractors) == params.n_distractors:
            break
    if len(distractors) < params.n_distractors:
        raise GenerationError(
            f"insufficient completion distractors: {len(distractors)} of {params.n_distractors}"
        )

    options = [Option(removed, True, similarity=1.0, logprob=_mean_lp(removed)), *distractors]
    options.sort(key=lambda o: o.text)
    return ItemDraft(
        item_id=item_id or f"{passage.passage_id}-tc",
        passage_id=passage.passage_id,
        kind="text_completion",
        stem=stem,
        options=tuple(options),
        diagnostics={
            "target_sentence": target,
            "sentence_mean_logprobs": [float(m) for m in means],
        },
    )


# ---------------------------------------------------------------------------
# Main idea / possible title


@dataclass(frozen=True)
class ChoiceParams:
    sim_floor: float = 0.05
    sim_ceiling: float = 0.90
    n_distractors: int = 3
    seed: int = 0


_CHOICE_STEMS = {
    "main_idea": "What is the main idea of the passage?",
    "possible_title": "Which of these would make the best title for the passage?",
}
_CHOICE_TEMPLATES = {"main_idea": "main_idea", "possible_title": "title"}


def build_choice_items(
    provider: LlmProvider,
    passage: Passage,
    alternatives: Sequence[Passage],
    space: EmbeddingSpace,
    templates: Mapping[str, PromptTemplate] | None = None,
    params: ChoiceParams | None = None,
) -> tuple[ItemDraft, ItemDraft]:
    """Build the main-idea and possible-title drafts for a passage.

    The key is the provider's summary of the passage itself; distractors are
    summaries of alternative passages whose similarity to the passage falls in
    a plausible-but-wrong band.
    """
    params = params or ChoiceParams()
    templates = templates or load_templates()
    if len(alternatives) < 3:
        raise GenerationError(f"need at least 3 alternative passages, got {len(alternatives)}")
    passage_vec = embed(space, passage.text)

    def _mean_lp(text: str) -> float:
        pairs = provider.token_logprobs(text)
        return sum(lp for _t, lp in pairs) / len(pairs) if pairs else 0.0

    drafts: list[ItemDraft] = []
    for kind in ("main_idea", "possible_title"):
        template = templates[_CHOICE_TEMPLATES[kind]]
        key_text = provider.generate(
            _render(template.text, {"passage": passage.text}), seed=params.seed
        ).strip()
        key = Option(
            key_text,
            True,
            similarity=cosine(embed(space, key_text), passage_vec),
            logprob=_mean_lp(key_text),
        )
        candidates: list[Option] = []
        for alt in alternatives:
            text = provider.generate(
                _render(template.text, {"passage": alt.text}), seed=params.seed
            ).strip()
            candidates.append(
                Option(
                    text,
                    False,
                    similarity=cosine(embed(space, text), passage_vec),
                    logprob=_mean_lp(text),
                )
            )
        eligible = [
            c
            for c in candidates
            if params.sim_floor <= (c.similarity or 0.0) <= params.sim_ceiling
            and c.text != key_text
        ]
        deduped: list[Option] = []
        seen: set[str] = set()
        for option in sorted(eligible, key=lambda o: (-(o.similarity or 0.0), o.text)):
            if option.text not in seen:
                seen.add(option.text)
                deduped.append(option)
        if len(deduped) < params.n_distractors:
            raise GenerationError(
                f"insufficient {kind} distractors inside similarity band: "
                f"{len(deduped)} of {params.n_distractors}"
            )
        options = [key, *deduped[: params.n_distractors]]
        options.sort(key=lambda o: o.text)
        drafts.append(
            ItemDraft(
                item_id=f"{passage.passage_id}-{'mi' if kind == 'main_idea' else 'pt'}",
                passage_id=passage.passage_id,
                kind=kind,
                stem=_CHOICE_STEMS[kind],
                options=tuple(options),
            )
        )
    return drafts[0], drafts[1]


# ---------------------------------------------------------------------------
# Quality filters


@dataclass(frozen=True)
class FilterThresholds:
    stem_min_tokens: int = 3
    stem_max_tokens: int = 250
    option_min_tokens: int = 1
    option_max_tokens: int = 40
    min_alignment: float | None = None


@dataclass(frozen=True)
class FilterResult:
    accepted: bool
    reason: str | None = None


def filter_item(
    draft: ItemDraft,
    thresholds: FilterThresholds,
    *,
    passage_text: str | None = None,
    space: EmbeddingSpace | None = None,
) -> FilterResult:
    """Screen a draft against length, duplication, and alignment rules.

    Rules run in a fixed order and the first violation becomes the reject
    reason.  Alignment (cosine of the keyed option against the passage) is
    only checked when a minimum, the passage text, and a space are all given.
    """
    stem_len = len(tokenize(draft.stem))
    if stem_len < thresholds.stem_min_tokens:
        return FilterResult(False, "stem-too-short")
    if stem_len > thresholds.stem_max_tokens:
        return FilterResult(False, "stem-too-long")

    option_groups = [draft.options] if draft.options else []
    option_groups.extend(gap.options for gap in draft.gaps)
    for group in option_groups:
        for option in group:
            length = len(tokenize(option.text))
            if length < thresholds.option_min_tokens:
                return FilterResult(False, "option-too-short")
            if length > thresholds.option_max_tokens:
                return FilterResult(False, "option-too-long")
    for group in option_groups:
        texts = [o.text for o in group]
        if len(set(texts)) != len(texts):
            return FilterResult(False, "duplicate-option")

    if thresholds.min_alignment is not None and passage_text is not None and space is not None:
        keys = [o for group in option_groups for o in group if o.correct]
        passage_vec = embed(space, passage_text)
        for key in keys:
            if cosine(embed(space, key.text), passage_vec) < thresholds.min_alignment:
                return FilterResult(False, "poor-alignment")
    return FilterResult(True, None)


# ---------------------------------------------------------------------------
# Comprehension


@dataclass(frozen=True)
class ComprehensionParams:
    count: int = 5
    seed: int = 0


_QA_LINE_RE = re.compile(r"^(Q|A):\s*(.*)$")


def parse_qa_pairs(raw: str) -> list[tuple[str, str]]:
    """Extract (question, answer) pairs from alternating ``Q:``/``A:`` lines."""
    pairs: list[tuple[str, str]] = []
    question: str | None = None
    for line in raw.splitlines():
        match = _QA_LINE_RE.match(line.strip())
        if not match:
            continue
        tag, body = match.groups()
        if tag == "Q":
            question = body.strip()
        elif question is not None:
            pairs.append((question, body.strip()))
            question = None
    return pairs


def build_comprehension(
    provider: LlmProvider,
    passage: Passage,
    thresholds: FilterThresholds | None = None,
    templates: Mapping[str, PromptTemplate] | None = None,
    params: ComprehensionParams | None = None,
) -> list[ItemDraft]:
    """Generate highlight-answer questions whose answers are passage spans.

    Candidates whose answer is not a verbatim contiguous span of the passage
    are rejected outright; the rest run through ``filter_item``.
    """
    thresholds = thresholds or FilterThresholds()
    templates = templates or load_templates()
    params = params or ComprehensionParams()
    rendered = _render(
        templates["qa"].text, {"count": str(params.count), "passage": passage.text}
    )
    raw = provider.generate(rendered, seed=params.seed)
    candidates = parse_qa_pairs(raw)
    if not candidates:
        raise GenerationError("no viable items: provider returned no candidates")

    survivors: list[ItemDraft] = []
    rejections: list[tuple[str, str]] = []
    for i, (question, answer) in enumerate(candidates):
        position = passage.text.find(answer) if answer else -1
        if position < 0:
            rejections.append((question, "answer-not-in-passage"))
            continue
        draft = ItemDraft(
            item_id=f"{passage.passage_id}-rc{i}",
            passage_id=passage.passage_id,
            kind="comprehension",
            stem=question,
            options=(Option(answer, True),),
            answer_span=(position, position + len(answer)),
        )
        verdict = filter_item(draft, thresholds)
        if verdict.accepted:
            survivors.append(draft)
        else:
            rejections.append((question, verdict.reason or "rejected"))
    if not survivors:
        raise GenerationError("no viable items: every candidate was filtered out")
    return survivors
