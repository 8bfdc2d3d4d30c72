"""Human review workflow: FAB/IQR queues, flag adjudication, feedback, ECPs.

Item drafts pass two review stages in sequence — fairness-and-bias (FAB)
first, then item quality review (IQR) — while fairness and plagiarism flags
get a single confirm/dismiss stage.  Every decision is appended to the
entry's history, and an entry's state is always exactly what replaying that
history through the transition table yields.
"""

from __future__ import annotations

import re
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

from .fairness import ReviewFlag
from .generation import ItemDraft, draft_to_dict
from .plagiarism import PlagiarismFlag

STATES = ("pending_fab", "pending_iqr", "approved", "rejected", "revise")
PENDING_STATES = ("pending_fab", "pending_iqr")
VERDICTS = ("approve", "reject", "revise")
SUBJECT_TYPES = ("item_draft", "dif_flag", "drf_flag", "plagiarism_flag", "monitor_alert")

REASON_CODES = frozenset(
    {
        "sensitive-content",
        "factual-error",
        "hallucination",
        "construct-misalignment",
        "low-quality-distractor",
        "accessibility-barrier",
        "other",
    }
)

ECP_STATUSES = ("draft", "approved", "launched")


class ReviewError(Exception):
    """An operation that the review state machine does not allow."""


# ---------------------------------------------------------------------------
# Core types


@dataclass(frozen=True)
class ReviewSubject:
    subject_type: str
    subject_id: str
    payload: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.subject_type not in SUBJECT_TYPES:
            raise ValueError(f"subject_type must be one of {SUBJECT_TYPES}")


@dataclass(frozen=True)
class ReviewDecision:
    reviewer_id: str
    verdict: str
    reason_codes: tuple[str, ...] = ()
    note: str = ""
    timestamp: float | None = None

    def __post_init__(self) -> None:
        if not self.reviewer_id:
            raise ValueError("reviewer_id must be non-empty")
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}, got {self.verdict!r}")
        if self.verdict in ("reject", "revise") and not self.reason_codes:
            raise ValueError(f"a {self.verdict} decision requires at least one reason code")


def subject_from_draft(draft: ItemDraft, template: str = "") -> ReviewSubject:
    """Wrap an item draft for review, keeping the template for feedback reports."""
    return ReviewSubject(
        subject_type="item_draft",
        subject_id=draft.item_id,
        payload={"kind": draft.kind, "template": template, "draft": draft_to_dict(draft)},
    )


def subject_from_fairness_flag(flag: ReviewFlag) -> ReviewSubject:
    return ReviewSubject(
        subject_type=f"{flag.source}_flag",
        subject_id=flag.target_id,
        payload={"reason": flag.reason, "statistics": dict(flag.statistics)},
    )


def subject_from_plagiarism_flag(flag: PlagiarismFlag) -> ReviewSubject:
    return ReviewSubject(
        subject_type="plagiarism_flag",
        subject_id=flag.response_id,
        payload={
            "response_id": flag.response_id,
            "classification": flag.classification,
            "coverage": flag.coverage,
            "spans": len(flag.spans),
        },
    )


def _is_single_stage(subject_type: str) -> bool:
    return subject_type != "item_draft"


def replay_history(subject_type: str, history: Sequence[ReviewDecision]) -> str:
    """State produced by running a decision history through the transition table.

    A decision that follows a ``revise`` outcome implies the subject was
    revised and resubmitted, so replay resumes from ``pending_fab``.
    """
    state = "pending_fab"
    single = _is_single_stage(subject_type)
    for decision in history:
        if state == "revise":
            state = "pending_fab"
        if state not in PENDING_STATES:
            raise ReviewError(f"history applies a decision to terminal state {state!r}")
        if single:
            if decision.verdict == "approve":
                state = "approved"
            elif decision.verdict == "reject":
                state = "rejected"
            else:
                raise ReviewError("flags accept only approve (confirm) or reject (dismiss)")
        else:
            if decision.verdict == "approve":
                state = "pending_iqr" if state == "pending_fab" else "approved"
            elif decision.verdict == "reject":
                state = "rejected"
            else:
                state = "revise"
    return state


@dataclass(frozen=True)
class ReviewEntry:
    entry_id: str
    subject: ReviewSubject
    state: str
    history: tuple[ReviewDecision, ...] = ()
    author: str = ""

    def __post_init__(self) -> None:
        if self.state not in STATES:
            raise ValueError(f"state must be one of {STATES}")
        replayed = replay_history(self.subject.subject_type, self.history)
        resubmitted = self.state == "pending_fab" and replayed == "revise"
        if self.state != replayed and not resubmitted:
            raise ValueError(
                f"state {self.state!r} does not match history replay {replayed!r}"
            )

    def fab_approver(self) -> str | None:
        """Reviewer who gave the most recent FAB-stage approval, if any."""
        state = "pending_fab"
        approver: str | None = None
        for decision in self.history:
            if state == "revise":
                state = "pending_fab"
            if state == "pending_fab" and decision.verdict == "approve":
                approver = decision.reviewer_id
                state = "pending_iqr"
            elif decision.verdict == "reject":
                state = "rejected"
            elif decision.verdict == "revise":
                state = "revise"
            else:
                state = "approved"
        return approver if state == "pending_iqr" else None


# ---------------------------------------------------------------------------
# Queue


class ReviewQueue:
    """In-memory review queue with claim-based hand-out and serialized decides."""

    def __init__(
        self,
        reason_codes: frozenset[str] = REASON_CODES,
        clock: Callable[[], float] | None = None,
    ):
        self.reason_codes = reason_codes
        self._clock = clock or time.time
        self._entries: dict[str, ReviewEntry] = {}
        self._claims: dict[str, str] = {}
        self._next_seq = 1
        self._lock = threading.Lock()
        self.confirmed_sessions: set[str] = set()

    # -- access ----------------------------------------------------------

    def get(self, entry_id: str) -> ReviewEntry:
        try:
            return self._entries[entry_id]
        except KeyError:
            raise ReviewError(f"no review entry {entry_id!r}") from None

    def entries(self) -> list[ReviewEntry]:
        return list(self._entries.values())

    # -- operations ------------------------------------------------------

    def enqueue(self, subject: ReviewSubject, author: str = "", entry_id: str | None = None) -> ReviewEntry:
        with self._lock:
            if entry_id is None:
                entry_id = f"rev-{self._next_seq:06d}"
                self._next_seq += 1
            if entry_id in self._entries:
                raise ReviewError(f"duplicate entry id {entry_id!r}")
            entry = ReviewEntry(entry_id, subject, "pending_fab", (), author)
            self._entries[entry_id] = entry
            return entry

    def restore(self, entry: ReviewEntry) -> None:
        """Re-seat a previously persisted entry, keeping generated ids unique."""
        with self._lock:
            self._entries[entry.entry_id] = entry
            match = re.fullmatch(r"rev-(\d+)", entry.entry_id)
            if match:
                self._next_seq = max(self._next_seq, int(match.group(1)) + 1)
            if (
                entry.subject.subject_type == "plagiarism_flag"
                and entry.state == "approved"
            ):
                self.confirmed_sessions.add(str(entry.subject.payload.get("response_id")))

    def next_for(self, reviewer: str, stage: str) -> ReviewEntry | None:
        """Oldest entry pending at ``stage`` that this reviewer may decide.

        The entry is claimed for the reviewer until they decide it; other
        reviewers will not be handed the same entry meanwhile.
        """
        if stage not in PENDING_STATES:
            raise ReviewError(f"stage must be one of {PENDING_STATES}")
        with self._lock:
            for entry in self._entries.values():
                if entry.state != stage:
                    continue
                claimant = self._claims.get(entry.entry_id)
                if claimant is not None and claimant != reviewer:
                    continue
                if entry.author and entry.author == reviewer:
                    continue
                if stage == "pending_iqr" and entry.fab_approver() == reviewer:
                    continue
                self._claims[entry.entry_id] = reviewer
                return entry
            return None

    def decide(self, entry_id: str, decision: ReviewDecision) -> ReviewEntry:
        with self._lock:
            entry = self.get(entry_id)
            if entry.state not in PENDING_STATES:
                raise ReviewError(
                    f"cannot decide entry {entry_id!r} in terminal state {entry.state!r}"
                )
            if entry.author and decision.reviewer_id == entry.author:
                raise ReviewError("a reviewer may not decide an entry they authored")
            unknown = set(decision.reason_codes) - self.reason_codes
            if unknown:
                raise ReviewError(f"unknown reason codes: {sorted(unknown)}")
            single = _is_single_stage(entry.subject.subject_type)
            if single and decision.verdict == "revise":
                raise ReviewError(
                    f"cannot revise a {entry.subject.subject_type} in state {entry.state!r}; "
                    "flags accept only confirm or dismiss"
                )
            if entry.state == "pending_iqr" and entry.fab_approver() == decision.reviewer_id:
                raise ReviewError("FAB and IQR decisions must come from distinct reviewers")
            if decision.timestamp is None:
                decision = replace(decision, timestamp=float(self._clock()))
            history = entry.history + (decision,)
            state = replay_history(entry.subject.subject_type, history)
            updated = replace(entry, state=state, history=history)
            self._entries[entry_id] = updated
            self._claims.pop(entry_id, None)
            return updated

    def resubmit(self, entry_id: str, subject: ReviewSubject | None = None) -> ReviewEntry:
        """Return a revised subject to the start of the pipeline."""
        with self._lock:
            entry = self.get(entry_id)
            if entry.state != "revise":
                raise ReviewError(
                    f"only entries in state 'revise' can be resubmitted; "
                    f"{entry_id!r} is {entry.state!r}"
                )
            updated = replace(entry, state="pending_fab", subject=subject or entry.subject)
            self._entries[entry_id] = updated
            return updated


# ---------------------------------------------------------------------------
# Plagiarism flag adjudication


def enqueue_flag(queue: ReviewQueue, flag: PlagiarismFlag, author: str = "") -> ReviewEntry | None:
    """Queue a suspect plagiarism flag for proctor review; benign flags never enter."""
    if flag.classification != "suspect":
        return None
    return queue.enqueue(subject_from_plagiarism_flag(flag), author=author)


def adjudicate_flag(queue: ReviewQueue, entry_id: str, decision: ReviewDecision) -> ReviewEntry:
    """Confirm or dismiss a suspect plagiarism flag.

    A confirmation marks the flagged response session on the queue's
    ``confirmed_sessions`` set; a dismissal closes the entry with no mark.
    """
    entry = queue.get(entry_id)
    if entry.subject.subject_type != "plagiarism_flag":
        raise ReviewError(f"entry {entry_id!r} is not a plagiarism flag")
    if entry.subject.payload.get("classification") != "suspect":
        raise ReviewError("cannot adjudicate a benign plagiarism flag")
    updated = queue.decide(entry_id, decision)
    if updated.state == "approved":
        queue.confirmed_sessions.add(str(entry.subject.payload["response_id"]))
    return updated


# ---------------------------------------------------------------------------
# Feedback loop


@dataclass(frozen=True)
class FeedbackReport:
    window: tuple[float, float]
    code_frequencies: Mapping[str, Mapping[str, int]]
    rejection_rate_by_kind: Mapping[str, float]
    total_rejections: int
    attention: tuple[str, ...]
    surveys: tuple[str, ...] = ()


def feedback_report(
    entries: Iterable[ReviewEntry],
    window: tuple[float, float],
    attention_threshold: float = 0.5,
    surveys: Sequence[str] = (),
) -> FeedbackReport:
    """Summarize rejection patterns for item drafts decided inside a time window.

    The window is half-open ``[start, end)``.  A rejection with several reason
    codes counts each code once but contributes a single rejection to the
    total.  Templates whose rejection rate exceeds the threshold land on the
    recommended-attention list.
    """
    start, end = window
    frequencies: dict[str, dict[str, int]] = {}
    decisions_by_kind: dict[str, int] = {}
    rejections_by_kind: dict[str, int] = {}
    decisions_by_template: dict[str, int] = {}
    rejections_by_template: dict[str, int] = {}
    total_rejections = 0
    for entry in entries:
        if entry.subject.subject_type != "item_draft":
            continue
        kind = str(entry.subject.payload.get("kind", ""))
        template = str(entry.subject.payload.get("template", ""))
        for decision in entry.history:
            stamp = decision.timestamp
            if stamp is None or not start <= stamp < end:
                continue
            decisions_by_kind[kind] = decisions_by_kind.get(kind, 0) + 1
            decisions_by_template[template] = decisions_by_template.get(template, 0) + 1
            if decision.verdict != "reject":
                continue
            total_rejections += 1
            rejections_by_kind[kind] = rejections_by_kind.get(kind, 0) + 1
            rejections_by_template[template] = rejections_by_template.get(template, 0) + 1
            bucket = frequencies.setdefault(template, {})
            for code in decision.reason_codes:
                bucket[code] = bucket.get(code, 0) + 1
    rates = {
        kind: rejections_by_kind.get(kind, 0) / count
        for kind, count in decisions_by_kind.items()
    }
    attention = tuple(
        sorted(
            template
            for template, count in decisions_by_template.items()
            if rejections_by_template.get(template, 0) / count > attention_threshold
        )
    )
    return FeedbackReport(
        window=(float(start), float(end)),
        code_frequencies={t: dict(v) for t, v in frequencies.items()},
        rejection_rate_by_kind=rates,
        total_rejections=total_rejections,
        attention=attention,
        surveys=tuple(surveys),
    )


# ---------------------------------------------------------------------------
# Exam change proposals


@dataclass(frozen=True)
class EcpRecord:
    """A change proposal that must collect one approval per required role."""

    ecp_id: str
    description: str
    evidence: tuple[str, ...]
    required_roles: tuple[str, ...]
    approvals: tuple[tuple[str, str], ...] = ()  # (role, approver)
    status: str = "draft"
    artifact: str | None = None

    def __post_init__(self) -> None:
        if self.status not in ECP_STATUSES:
            raise ValueError(f"status must be one of {ECP_STATUSES}")
        if not self.required_roles:
            raise ValueError("an ECP needs at least one required approver role")
        approved_roles = {role for role, _ in self.approvals}
        if self.status in ("approved", "launched") and not set(self.required_roles) <= approved_roles:
            missing = sorted(set(self.required_roles) - approved_roles)
            raise ValueError(f"status {self.status!r} requires approvals from roles {missing}")

    def missing_roles(self) -> tuple[str, ...]:
        approved = {role for role, _ in self.approvals}
        return tuple(sorted(set(self.required_roles) - approved))


def record_ecp(
    description: str,
    evidence: Sequence[str],
    required_roles: Sequence[str],
    *,
    ecp_id: str = "ecp-1",
    artifact: str | None = None,
) -> EcpRecord:
    return EcpRecord(
        ecp_id=ecp_id,
        description=description,
        evidence=tuple(evidence),
        required_roles=tuple(dict.fromkeys(required_roles)),
        artifact=artifact,
    )


def approve_ecp(record: EcpRecord, approver: str, role: str) -> EcpRecord:
    """Record one role's approval; repeat approvals for a role are idempotent."""
    if record.status == "launched":
        raise ReviewError("cannot approve an already-launched ECP")
    if role not in record.required_roles:
        raise ReviewError(f"role {role!r} is not required for this ECP")
    if any(r == role for r, _ in record.approvals):
        updated_approvals = record.approvals
    else:
        updated_approvals = record.approvals + ((role, approver),)
    approved_roles = {r for r, _ in updated_approvals}
    status = "approved" if set(record.required_roles) <= approved_roles else "draft"
    return replace(record, approvals=updated_approvals, status=status)


def launch(record: EcpRecord) -> EcpRecord:
    if record.status == "launched":
        return record
    if record.status != "approved":
        missing = record.missing_roles()
        raise ReviewError(f"cannot launch: missing approvals for roles {list(missing)}")
    return replace(record, status="launched")
