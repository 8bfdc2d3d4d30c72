"""Composition root: shared artifacts, domain operations, persistence wiring.

The runtime owns one :class:`~langassess.store.Store` and one in-memory review
queue rebuilt from it, trains the corpus artifacts (n-gram model, embedding
space, feature resources) once, and exposes every operation the HTTP API and
the CLI need.  All mutations write through to the store, so two runtimes
driven through the same operation sequence produce identical stores.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .config import Config
from .features import (
    STOPWORDS,
    FeatureResources,
    extract_all,
    load_grammar_rules,
    load_wordlist,
)
from .fairness import (
    DemographicRecord,
    DifRecord,
    DifResult,
    DrfResult,
    LogisticDifResult,
    RepresentationReport,
    dif_logistic,
    dif_mantel_haenszel,
    drf_analysis,
    representation_report,
    route_flags,
)
from .generation import (
    ChoiceParams,
    ClozeParams,
    CompletionParams,
    ComprehensionParams,
    FilterThresholds,
    GenerationError,
    HttpLlmProvider,
    MockLlmProvider,
    Passage,
    PassageConstraints,
    TargetSpec,
    assemble_prompt,
    build_choice_items,
    build_cloze,
    build_comprehension,
    build_text_completion,
    bundled_corpus_path,
    bundled_exemplars,
    draft_to_dict,
    filter_item,
    generate_passage,
    load_generation_corpus,
    load_templates,
    passage_from_dict,
    passage_to_dict,
)
from .monitor import (
    AlertRule,
    SessionRecord,
    compute_window,
    evaluate_alerts,
    report_to_dict,
    with_alerts,
)
from .plagiarism import (
    IndexDocument,
    classify,
    index_build,
    render_highlights,
    scan,
)
from .review import (
    EcpRecord,
    ReviewDecision,
    ReviewEntry,
    ReviewError,
    ReviewQueue,
    ReviewSubject,
    adjudicate_flag,
    approve_ecp,
    enqueue_flag,
    feedback_report,
    launch,
    record_ecp,
    subject_from_draft,
    subject_from_fairness_flag,
)
from .scoring import (
    Hyperparams,
    TrainedScorer,
    explain,
    predict,
    scorer_from_json,
    scorer_to_json,
    to_band,
    train_scorer,
)
from .store import NotFoundError, Store
from .text import build_idf, split_sentences, tokenize, train_embeddings, train_ngram

# Entity kinds this runtime persists.
KIND_PASSAGE = "passage"
KIND_DRAFT = "item_draft"
KIND_REVIEW = "review_entry"
KIND_RESPONSE = "response"
KIND_FLAG = "plagiarism_flag"
KIND_SOURCE = "source_doc"
KIND_SESSION = "session"
KIND_REPORT = "monitor_report"
KIND_ECP = "ecp"
KIND_MODEL = "scoring_model"
KIND_POINTER = "pointer"

ACTIVE_MODEL_ID = "active-scorer"
BASELINE_ID = "monitor-baseline"

_TEMPLATE_BY_KIND = {
    "vocabulary_in_context": "passage",
    "text_completion": "alternative_sentence",
    "main_idea": "main_idea",
    "possible_title": "title",
    "comprehension": "qa",
}


# ---------------------------------------------------------------------------
# Serialization of review-side types


def decision_to_dict(decision: ReviewDecision) -> dict:
    return {
        "reviewer_id": decision.reviewer_id,
        "verdict": decision.verdict,
        "reason_codes": list(decision.reason_codes),
        "note": decision.note,
        "timestamp": decision.timestamp,
    }


def decision_from_dict(record: dict) -> ReviewDecision:
    return ReviewDecision(
        reviewer_id=str(record["reviewer_id"]),
        verdict=str(record["verdict"]),
        reason_codes=tuple(record.get("reason_codes", ())),
        note=str(record.get("note", "")),
        timestamp=record.get("timestamp"),
    )


def subject_to_dict(subject: ReviewSubject) -> dict:
    return {
        "subject_type": subject.subject_type,
        "subject_id": subject.subject_id,
        "payload": dict(subject.payload),
    }


def subject_from_dict(record: dict) -> ReviewSubject:
    return ReviewSubject(
        subject_type=str(record["subject_type"]),
        subject_id=str(record["subject_id"]),
        payload=dict(record.get("payload", {})),
    )


def entry_to_dict(entry: ReviewEntry) -> dict:
    return {
        "entry_id": entry.entry_id,
        "subject": subject_to_dict(entry.subject),
        "state": entry.state,
        "history": [decision_to_dict(d) for d in entry.history],
        "author": entry.author,
    }


def entry_from_dict(record: dict) -> ReviewEntry:
    return ReviewEntry(
        entry_id=str(record["entry_id"]),
        subject=subject_from_dict(record["subject"]),
        state=str(record["state"]),
        history=tuple(decision_from_dict(d) for d in record.get("history", ())),
        author=str(record.get("author", "")),
    )


def ecp_to_dict(record: EcpRecord) -> dict:
    return {
        "ecp_id": record.ecp_id,
        "description": record.description,
        "evidence": list(record.evidence),
        "required_roles": list(record.required_roles),
        "approvals": [[role, approver] for role, approver in record.approvals],
        "status": record.status,
        "artifact": record.artifact,
    }


def ecp_from_dict(record: dict) -> EcpRecord:
    return EcpRecord(
        ecp_id=str(record["ecp_id"]),
        description=str(record["description"]),
        evidence=tuple(record.get("evidence", ())),
        required_roles=tuple(record["required_roles"]),
        approvals=tuple((r, a) for r, a in record.get("approvals", ())),
        status=str(record.get("status", "draft")),
        artifact=record.get("artifact"),
    )


def session_to_dict(session: SessionRecord) -> dict:
    return {
        "session_id": session.session_id,
        "week": session.week,
        "score": session.score,
        "demographics": dict(session.demographics),
        "item_exposures": list(session.item_exposures),
        "repeat": session.repeat,
        "prior_score": session.prior_score,
    }


def session_from_dict(record: dict) -> SessionRecord:
    return SessionRecord(
        session_id=str(record["session_id"]),
        week=int(record["week"]),
        score=float(record["score"]),
        demographics={str(k): str(v) for k, v in dict(record.get("demographics", {})).items()},
        item_exposures=tuple(record.get("item_exposures", ())),
        repeat=bool(record.get("repeat", False)),
        prior_score=(
            float(record["prior_score"]) if record.get("prior_score") is not None else None
        ),
    )


def dif_result_to_dict(result: DifResult) -> dict:
    return {
        "item_id": result.item_id,
        "status": result.status,
        "mh_chi_square": result.mh_chi_square,
        "common_odds_ratio": result.common_odds_ratio,
        "delta_mh": result.delta_mh,
        "p_value": result.p_value,
        "classification": result.classification,
        "n_strata": result.n_strata,
    }


def logistic_result_to_dict(result: LogisticDifResult) -> dict:
    out = {"item_id": result.item_id, "status": result.status}
    for name in ("uniform_p", "nonuniform_p", "group_coefficient", "interaction_coefficient"):
        if hasattr(result, name):
            out[name] = getattr(result, name)
    return out


def drf_result_to_dict(result: DrfResult) -> dict:
    return {
        "scope": result.scope,
        "status": result.status,
        "reference_group": result.reference_group,
        "consensus_coefficient": result.consensus_coefficient,
        "effects": [
            {
                "group": e.group,
                "coefficient": e.coefficient,
                "std_error": e.std_error,
                "p_value": e.p_value,
                "flagged": e.flagged,
            }
            for e in result.effects
        ],
        "flagged_groups": list(result.flagged_groups),
    }


def representation_to_dict(report: RepresentationReport) -> dict:
    def cell(key: tuple[str, str]) -> str:
        return f"{key[0]}:{key[1]}"

    return {
        "total": report.total,
        "counts": {cell(k): v for k, v in report.counts.items()},
        "proportions": {cell(k): v for k, v in report.proportions.items()},
        "targets": {cell(k): v for k, v in report.targets.items()},
        "deviations": {cell(k): v for k, v in report.deviations.items()},
        "tolerance": report.tolerance,
        "failing_cells": [list(c) for c in report.failing_cells],
        "passed": report.passed,
    }


# ---------------------------------------------------------------------------
# Runtime


class Runtime:
    """One deployment's worth of artifacts, queue state, and operations."""

    def __init__(self, config: Config | None = None, store: Store | None = None):
        self.config = config or Config()
        self.store = (
            store
            if store is not None
            else Store(self.config.store_path, deterministic=self.config.deterministic_ids)
        )

        resource_dir = bundled_corpus_path().parent
        self.corpus = load_generation_corpus(bundled_corpus_path())
        texts = [d.text for d in self.corpus]
        self.language_model = train_ngram(texts, n=self.config.ngram_order)
        self.space = train_embeddings(texts, self.config.embedding_dim, corpus_id="bundled")
        # Content-word space for semantic screens on short formulaic texts,
        # where shared function words would otherwise dominate the cosine.
        stripped = [
            " ".join(t for t in tokenize(text).tokens if t not in STOPWORDS)
            for text in texts
        ]
        self.content_space = train_embeddings(
            stripped, self.config.embedding_dim, corpus_id="bundled-content"
        )
        self.templates = load_templates()
        self.exemplars = bundled_exemplars()
        self.feature_resources = FeatureResources(
            idf=build_idf(texts),
            space=self.space,
            wordlist=load_wordlist(resource_dir / "cefr_wordlist.tsv"),
            dwu_low=train_ngram(
                [d.text for d in self.corpus if d.category == "narrative"], 2
            ),
            dwu_high=train_ngram(
                [d.text for d in self.corpus if d.category == "expository"], 2
            ),
            grammar_rules=load_grammar_rules(resource_dir / "grammar_rules.json"),
        )
        self.prompts = self._load_prompts(resource_dir / "writing_prompts.jsonl")

        if self.config.provider == "http":
            self.provider = HttpLlmProvider(timeout=self.config.provider_timeout)
        else:
            self.provider = MockLlmProvider(self.corpus)

        clock = self.store.next_timestamp if self.store.deterministic else None
        self.queue = ReviewQueue(clock=clock)
        for envelope in self.store.list(KIND_REVIEW):
            self.queue.restore(entry_from_dict(envelope.payload))

        self._index = None
        self._scorer: TrainedScorer | None = None

    @staticmethod
    def _load_prompts(path) -> dict[str, dict]:
        prompts: dict[str, dict] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    record = json.loads(line)
                    prompts[record["id"]] = record
        return prompts

    def _upsert(self, kind: str, entity_id: str, payload) -> None:
        if self.store.exists(entity_id):
            self.store.update(entity_id, payload)
        else:
            self.store.put(kind, payload, entity_id=entity_id)

    # -- generation -------------------------------------------------------

    def create_passage(
        self,
        category: str,
        topic: str,
        seed: int,
        min_words: int | None = None,
        max_words: int | None = None,
    ) -> dict:
        target = TargetSpec(category, topic, self.config.passage_target_words)
        prompt = assemble_prompt(self.templates["passage"], self.exemplars, target)
        constraints = PassageConstraints(
            min_words if min_words is not None else self.config.passage_min_words,
            max_words if max_words is not None else self.config.passage_max_words,
            category,
        )
        passage = generate_passage(
            self.provider,
            prompt,
            constraints,
            seed,
            max_attempts=self.config.generation_retries,
        )
        payload = passage_to_dict(passage)
        self.store.put(KIND_PASSAGE, payload, entity_id=passage.passage_id)
        return payload

    def get_passage(self, passage_id: str) -> Passage:
        return passage_from_dict(self.store.get(passage_id).payload)

    def _topic_of(self, text: str) -> str:
        counts: dict[str, int] = {}
        for token in tokenize(text).tokens:
            if token not in STOPWORDS:
                counts[token] = counts.get(token, 0) + 1
        ranked = sorted(counts, key=lambda t: (-counts[t], t))
        return " ".join(ranked[:2]) if ranked else "everyday life"

    def _alternatives(self, passage: Passage, seed: int) -> list[Passage]:
        """Sibling passages for choice-item distractors: stored ones first,
        topped up with ephemeral passages on other topics from the corpus."""
        others = [
            passage_from_dict(env.payload)
            for env in self.store.list(KIND_PASSAGE)
            if env.entity_id != passage.passage_id
            and env.payload.get("category") == passage.category
        ][:8]
        needed = 6 - len(others)
        template = self.templates["passage"]
        constraints = PassageConstraints(
            self.config.passage_min_words, self.config.passage_max_words, passage.category
        )
        topics = [
            self._topic_of(d.text)
            for d in self.corpus
            if d.category == passage.category
        ]
        for i in range(max(0, needed)):
            target = TargetSpec(
                passage.category,
                topics[i % len(topics)] if topics else passage.topic,
                self.config.passage_target_words,
            )
            prompt = assemble_prompt(template, self.exemplars, target)
            others.append(
                generate_passage(
                    self.provider,
                    prompt,
                    constraints,
                    seed + 1000 + 37 * i,
                    max_attempts=self.config.generation_retries,
                    passage_id=f"{passage.passage_id}-alt{i}",
                )
            )
        return others

    def _thresholds(self) -> FilterThresholds:
        return FilterThresholds(
            stem_min_tokens=self.config.filter_stem_min_tokens,
            stem_max_tokens=self.config.filter_stem_max_tokens,
            option_min_tokens=self.config.filter_option_min_tokens,
            option_max_tokens=self.config.filter_option_max_tokens,
        )

    def build_items(self, passage_id: str, seed: int = 0) -> dict:
        """Derive the full item set for a passage and queue survivors for review.

        Every draft runs the screening filters before it is stored or queued:
        a draft that violates a threshold is reported in ``rejected`` and never
        reaches the review queue.
        """
        passage = self.get_passage(passage_id)
        cfg = self.config
        thresholds = self._thresholds()
        drafts = []
        rejected: list[dict] = []

        try:
            drafts.append(
                build_cloze(
                    passage,
                    self.language_model,
                    ClozeParams(
                        n_blanks=cfg.cloze_blanks,
                        min_gap=cfg.cloze_min_gap,
                        band_low=cfg.cloze_band_low,
                        band_high=cfg.cloze_band_high,
                        min_tokens=cfg.cloze_min_tokens,
                        n_distractors=cfg.cloze_distractors,
                        semantic_weight=cfg.cloze_semantic_weight,
                        space=self.space,
                    ),
                )
            )
        except GenerationError as exc:
            rejected.append({"kind": "vocabulary_in_context", "reason": str(exc)})

        try:
            drafts.append(
                build_text_completion(
                    passage,
                    self.language_model,
                    self.provider,
                    self.space,
                    self.templates,
                    CompletionParams(
                        sim_floor=cfg.completion_sim_floor,
                        sim_ceiling=cfg.completion_sim_ceiling,
                        seed=seed,
                    ),
                )
            )
        except GenerationError as exc:
            rejected.append({"kind": "text_completion", "reason": str(exc)})

        try:
            main_idea, title = build_choice_items(
                self.provider,
                passage,
                self._alternatives(passage, seed),
                self.content_space,
                self.templates,
                ChoiceParams(
                    sim_floor=cfg.choice_sim_floor,
                    sim_ceiling=cfg.choice_sim_ceiling,
                    seed=seed,
                ),
            )
            drafts.extend([main_idea, title])
        except GenerationError as exc:
            rejected.append({"kind": "main_idea/possible_title", "reason": str(exc)})

        try:
            drafts.extend(
                build_comprehension(
                    self.provider,
                    passage,
                    thresholds,
                    self.templates,
                    ComprehensionParams(count=cfg.comprehension_count, seed=seed),
                )
            )
        except GenerationError as exc:
            rejected.append({"kind": "comprehension", "reason": str(exc)})

        accepted = []
        for draft in drafts:
            verdict = filter_item(
                draft, thresholds, passage_text=passage.text, space=self.space
            )
            if verdict.accepted:
                accepted.append(draft)
            else:
                rejected.append(
                    {"kind": draft.kind, "item_id": draft.item_id, "reason": verdict.reason}
                )

        enqueued = []
        for draft in accepted:
            self.store.put(KIND_DRAFT, draft_to_dict(draft), entity_id=draft.item_id)
            entry = self.queue.enqueue(
                subject_from_draft(draft, template=_TEMPLATE_BY_KIND[draft.kind]),
                author=self.provider.provider_id,
            )
            self._save_entry(entry, new=True)
            enqueued.append(entry.entry_id)

        return {
            "passage_id": passage_id,
            "drafts": [draft_to_dict(d) for d in accepted],
            "enqueued": enqueued,
            "rejected": rejected,
        }

    # -- review -----------------------------------------------------------

    def _save_entry(self, entry: ReviewEntry, new: bool = False) -> None:
        payload = entry_to_dict(entry)
        if new:
            self.store.put(KIND_REVIEW, payload, entity_id=entry.entry_id)
        else:
            self.store.update(entry.entry_id, payload)

    def get_entry(self, entry_id: str) -> ReviewEntry:
        try:
            return self.queue.get(entry_id)
        except ReviewError as exc:
            raise NotFoundError(str(exc)) from exc

    def list_queue(self, stage: str | None = None, subject_type: str | None = None) -> list[dict]:
        entries = sorted(self.queue.entries(), key=lambda e: e.entry_id)
        return [
            entry_to_dict(e)
            for e in entries
            if (stage is None or e.state == stage)
            and (subject_type is None or e.subject.subject_type == subject_type)
        ]

    def enqueue_subject(self, subject: dict, author: str = "") -> dict:
        entry = self.queue.enqueue(subject_from_dict(subject), author=author)
        self._save_entry(entry, new=True)
        return entry_to_dict(entry)

    def claim_next(self, reviewer: str, stage: str) -> dict | None:
        entry = self.queue.next_for(reviewer, stage)
        return entry_to_dict(entry) if entry is not None else None

    def decide(
        self,
        entry_id: str,
        reviewer_id: str,
        verdict: str,
        reason_codes: tuple[str, ...] = (),
        note: str = "",
    ) -> dict:
        entry = self.get_entry(entry_id)
        unknown = set(reason_codes) - self.queue.reason_codes
        if unknown:
            raise ValueError(f"unknown reason codes: {sorted(unknown)}")
        decision = ReviewDecision(reviewer_id, verdict, tuple(reason_codes), note)
        if entry.subject.subject_type == "plagiarism_flag":
            updated = adjudicate_flag(self.queue, entry_id, decision)
        else:
            updated = self.queue.decide(entry_id, decision)
        self._save_entry(updated)
        return entry_to_dict(updated)

    def resubmit(self, entry_id: str, subject: dict | None = None) -> dict:
        self.get_entry(entry_id)
        updated = self.queue.resubmit(
            entry_id, subject_from_dict(subject) if subject else None
        )
        self._save_entry(updated)
        return entry_to_dict(updated)

    def feedback(self, start: float, end: float) -> dict:
        report = feedback_report(
            self.queue.entries(), (start, end), self.config.attention_threshold
        )
        return {
            "window": list(report.window),
            "code_frequencies": {k: dict(v) for k, v in report.code_frequencies.items()},
            "rejection_rate_by_kind": dict(report.rejection_rate_by_kind),
            "total_rejections": report.total_rejections,
            "attention": list(report.attention),
            "surveys": list(report.surveys),
        }

    # -- scoring ----------------------------------------------------------

    def _hyperparams(self) -> Hyperparams:
        cfg = self.config
        return Hyperparams(
            n_trees=cfg.scorer_trees,
            max_depth=cfg.scorer_depth,
            learning_rate=cfg.scorer_learning_rate,
            min_leaf=cfg.scorer_min_leaf,
            seed=cfg.scorer_seed,
        )

    def _training_variants(self) -> list[str]:
        variants: list[str] = []
        for doc in self.corpus:
            variants.append(doc.text)
            spans = split_sentences(doc.text)
            if len(spans) >= 4:
                half = spans[: len(spans) // 2]
                variants.append(doc.text[half[0][0] : half[-1][1]])
        return variants

    def _train_default_scorer(self) -> TrainedScorer:
        """Deterministic bootstrap scorer fit on length/sophistication proxies."""
        texts = self._training_variants()
        prompt_text = next(iter(self.prompts.values()))["text"] if self.prompts else ""
        vectors = [extract_all(prompt_text, t, self.feature_resources) for t in texts]
        schema = vectors[0].names
        grouping = dict(vectors[0].grouping)
        X = np.array([fv.as_list(schema) for fv in vectors])

        def proxy(text: str) -> float:
            tokens = tokenize(text).tokens
            if not tokens:
                return 0.0
            mean_len = sum(len(t) for t in tokens) / len(tokens)
            long_frac = sum(1 for t in tokens if len(t) > 6) / len(tokens)
            return mean_len + 2.0 * long_frac + 0.5 * math.log(len(tokens))

        raw = np.array([proxy(t) for t in texts])
        edges = np.quantile(raw, [1 / 6, 2 / 6, 3 / 6, 4 / 6, 5 / 6])
        y = np.digitize(raw, edges) + 1.0
        return train_scorer(X, y, schema, self._hyperparams(), grouping=grouping)

    def ensure_scorer(self) -> TrainedScorer:
        """Active scorer, loading it from the store or bootstrapping one.

        Bootstrapping registers the model entity and activates it through a
        launched change proposal, so every operational model version traces to
        exactly one launched proposal.
        """
        if self._scorer is not None:
            return self._scorer
        if self.store.exists(ACTIVE_MODEL_ID):
            model_id = self.store.get(ACTIVE_MODEL_ID).payload["model_id"]
            doc = self.store.get(model_id).payload
            self._scorer = scorer_from_json(json.dumps(doc))
            return self._scorer

        scorer = self._train_default_scorer()
        model_id = f"model-{len(self.store.list(KIND_MODEL)) + 1:04d}"
        self.store.put(
            KIND_MODEL, json.loads(scorer_to_json(scorer)), entity_id=model_id
        )
        ecp = self.create_ecp(
            description=f"Activate baseline writing scorer {model_id}",
            evidence=("deterministic training on bundled corpus variants",),
            required_roles=("psychometrics",),
            artifact=model_id,
        )
        self.approve_ecp(ecp["ecp_id"], approver="bootstrap", role="psychometrics")
        self.launch_ecp(ecp["ecp_id"])
        self._scorer = scorer
        return scorer

    def score_text(
        self,
        text: str,
        prompt_id: str | None = None,
        response_id: str | None = None,
    ) -> dict:
        if prompt_id is not None and prompt_id not in self.prompts:
            raise NotFoundError(f"no writing prompt {prompt_id!r}")
        scorer = self.ensure_scorer()
        prompt_text = self.prompts[prompt_id]["text"] if prompt_id else ""
        fv = extract_all(prompt_text, text, self.feature_resources)
        raw = predict(scorer, fv)
        band, label = to_band(raw)
        explanation = explain(scorer, fv)
        result = {
            "raw": raw,
            "band": band,
            "band_label": label,
            "explanation": {
                "base_value": explanation.base_value,
                "contributions": dict(explanation.contributions),
                "subconstruct_totals": dict(explanation.subconstruct_totals),
            },
        }
        if response_id is not None:
            self._upsert(
                KIND_RESPONSE,
                response_id,
                {
                    "response_id": response_id,
                    "prompt_id": prompt_id,
                    "text": text,
                    "raw": raw,
                    "band": band,
                },
            )
            result["response_id"] = response_id
        return result

    # -- plagiarism -------------------------------------------------------

    @property
    def index(self):
        if self._index is None:
            sources = [
                IndexDocument(d.doc_id, "internet", d.text) for d in self.corpus
            ]
            for env in self.store.list(KIND_SOURCE):
                p = env.payload
                sources.append(
                    IndexDocument(
                        p["doc_id"], p["source_class"], p["text"], p.get("session_id")
                    )
                )
            self._index = index_build(
                sources, k=self.config.fingerprint_k, w=self.config.fingerprint_window
            )
        return self._index

    def add_source(
        self,
        doc_id: str,
        text: str,
        source_class: str = "internet",
        session_id: str | None = None,
    ) -> dict:
        IndexDocument(doc_id, source_class, text, session_id)  # validate early
        payload = {
            "doc_id": doc_id,
            "source_class": source_class,
            "text": text,
            "session_id": session_id,
        }
        self.store.put(KIND_SOURCE, payload, entity_id=doc_id)
        self._index = None
        return payload

    def scan_response(self, response_id: str, text: str) -> dict:
        spans = scan(self.index, text)
        flag = classify(response_id, text, spans, self.config.plagiarism_threshold)
        highlights = render_highlights(flag, self.index)
        payload = {
            "response_id": response_id,
            "classification": flag.classification,
            "coverage": flag.coverage,
            "threshold": flag.threshold,
            "highlights": highlights,
        }
        self._upsert(KIND_FLAG, f"flag-{response_id}", payload)
        entry = enqueue_flag(self.queue, flag, author="scanner")
        if entry is not None:
            self._save_entry(entry, new=True)
        return {
            "flag": payload,
            "entry_id": entry.entry_id if entry is not None else None,
        }

    # -- fairness audits --------------------------------------------------

    def _route(self, dif_results=(), drf_results=()) -> list[str]:
        entry_ids = []
        for flag in route_flags(dif_results=dif_results, drf_results=drf_results):
            entry = self.queue.enqueue(subject_from_fairness_flag(flag), author="auditor")
            self._save_entry(entry, new=True)
            entry_ids.append(entry.entry_id)
        return entry_ids

    def audit_dif(self, records: list[dict]) -> dict:
        by_item: dict[str, list[DifRecord]] = {}
        for i, rec in enumerate(records):
            try:
                by_item.setdefault(str(rec["item_id"]), []).append(
                    DifRecord(
                        correct=bool(rec["correct"]),
                        group=str(rec["group"]),
                        ability=float(rec["ability"]),
                    )
                )
            except KeyError as exc:
                raise ValueError(f"records[{i}] is missing field {exc}") from exc
        if not by_item:
            raise ValueError("no records to audit")
        results = [
            dif_mantel_haenszel(item_id, recs, n_strata=self.config.dif_strata)
            for item_id, recs in sorted(by_item.items())
        ]
        logistic = [
            dif_logistic(item_id, recs) for item_id, recs in sorted(by_item.items())
        ]
        entries = self._route(dif_results=results)
        return {
            "results": [dif_result_to_dict(r) for r in results],
            "logistic": [logistic_result_to_dict(r) for r in logistic],
            "flagged": [r.item_id for r in results if r.classification == "C"],
            "entries": entries,
        }

    def audit_drf(
        self,
        machine: list[float],
        consensus: list[float],
        groups: list[str],
        scope: str = "score",
    ) -> dict:
        result = drf_analysis(
            machine,
            consensus,
            groups,
            scope=scope,
            flag_threshold=self.config.drf_threshold,
        )
        entries = self._route(drf_results=[result])
        return {"result": drf_result_to_dict(result), "entries": entries}

    def audit_representation(
        self, records: list[dict], targets: dict[str, float], tolerance: float
    ) -> dict:
        demo = [
            DemographicRecord(gender=str(r["gender"]), l1=str(r["l1"])) for r in records
        ]
        parsed_targets: dict[tuple[str, str], float] = {}
        for key, value in targets.items():
            gender, _, l1 = key.partition(":")
            if not l1:
                raise ValueError(f"target key {key!r} must look like 'gender:l1'")
            parsed_targets[(gender, l1)] = float(value)
        report = representation_report(demo, parsed_targets, tolerance)
        return representation_to_dict(report)

    # -- monitoring -------------------------------------------------------

    def ingest_sessions(self, sessions: list[dict]) -> int:
        parsed = [session_from_dict(s) for s in sessions]
        for session in parsed:
            self.store.put(
                KIND_SESSION, session_to_dict(session), entity_id=session.session_id
            )
        return len(parsed)

    def set_baseline(self, mix: dict) -> dict:
        baseline = {
            str(dim): {str(cat): float(p) for cat, p in cats.items()}
            for dim, cats in mix.items()
        }
        self._upsert(KIND_POINTER, BASELINE_ID, baseline)
        return baseline

    def _sessions(self) -> list[SessionRecord]:
        return [
            session_from_dict(env.payload) for env in self.store.list(KIND_SESSION)
        ]

    def run_monitor(self, week: int) -> dict:
        baseline = (
            self.store.get(BASELINE_ID).payload
            if self.store.exists(BASELINE_ID)
            else None
        )
        report = compute_window(
            self._sessions(), week, baseline=baseline, top_n=self.config.monitor_top_n
        )
        rules = [
            AlertRule(r.name, r.metric, r.threshold, r.direction, r.open_review)
            for r in self.config.alert_rules
        ]
        before = {e.entry_id for e in self.queue.entries()}
        alerts = evaluate_alerts(report, rules, review_queue=self.queue)
        for entry in self.queue.entries():
            if entry.entry_id not in before:
                self._save_entry(entry, new=True)
        full = with_alerts(report, alerts)
        payload = report_to_dict(full)
        self._upsert(KIND_REPORT, f"week-{week:04d}", payload)
        return payload

    def get_report(self, week: int, compute: bool = True) -> dict:
        report_id = f"week-{week:04d}"
        if self.store.exists(report_id):
            return self.store.get(report_id).payload
        if not compute:
            raise NotFoundError(f"no monitor report for week {week}")
        return self.run_monitor(week)

    # -- change proposals -------------------------------------------------

    def create_ecp(
        self,
        description: str,
        evidence: tuple[str, ...] = (),
        required_roles: tuple[str, ...] = (),
        artifact: str | None = None,
    ) -> dict:
        ecp_id = f"ecp-{len(self.store.list(KIND_ECP)) + 1:04d}"
        record = record_ecp(
            description,
            tuple(evidence),
            tuple(required_roles),
            ecp_id=ecp_id,
            artifact=artifact,
        )
        payload = ecp_to_dict(record)
        self.store.put(KIND_ECP, payload, entity_id=ecp_id)
        return payload

    def get_ecp(self, ecp_id: str) -> dict:
        envelope = self.store.get(ecp_id)
        if envelope.kind != KIND_ECP:
            raise NotFoundError(f"no change proposal {ecp_id!r}")
        return envelope.payload

    def approve_ecp(self, ecp_id: str, approver: str, role: str) -> dict:
        record = ecp_from_dict(self.get_ecp(ecp_id))
        updated = approve_ecp(record, approver, role)
        payload = ecp_to_dict(updated)
        self.store.update(ecp_id, payload)
        return payload

    def launch_ecp(self, ecp_id: str) -> dict:
        record = ecp_from_dict(self.get_ecp(ecp_id))
        updated = launch(record)
        payload = ecp_to_dict(updated)
        self.store.update(ecp_id, payload)
        if updated.artifact and self.store.exists(updated.artifact):
            if self.store.get(updated.artifact).kind == KIND_MODEL:
                self._upsert(
                    KIND_POINTER,
                    ACTIVE_MODEL_ID,
                    {"model_id": updated.artifact, "ecp_id": ecp_id},
                )
                self._scorer = None
        return payload
