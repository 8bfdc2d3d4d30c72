"""HTTP interface: a thin FastAPI layer over :class:`~langassess.runtime.Runtime`.

Error contract: malformed bodies map to 400 with field-level messages,
unknown ids to 404, and operations the domain state machines refuse
(illegal review transitions, version conflicts, id collisions) to 409.
Reviewer identity arrives in the ``X-Reviewer-Id`` header; there is no
further authentication.
"""

from __future__ import annotations

from fastapi import FastAPI, Header, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import Config, ConfigError
from .generation import GenerationError
from .review import ReviewError
from .runtime import KIND_DRAFT, KIND_FLAG, Runtime, entry_to_dict
from .store import ConflictError, IdCollisionError, NotFoundError


# ---------------------------------------------------------------------------
# Request bodies


class ScoreRequest(BaseModel):
    text: str
    prompt_id: str | None = None
    response_id: str | None = None


class ScanRequest(BaseModel):
    response_id: str
    text: str


class SourceRequest(BaseModel):
    doc_id: str
    text: str
    source_class: str = "internet"
    session_id: str | None = None


class EnqueueRequest(BaseModel):
    subject_type: str
    subject_id: str
    payload: dict = Field(default_factory=dict)
    author: str = ""


class DecisionRequest(BaseModel):
    verdict: str
    reason_codes: list[str] = Field(default_factory=list)
    note: str = ""


class ResubmitRequest(BaseModel):
    subject: dict | None = None


class PassageRequest(BaseModel):
    category: str
    topic: str
    seed: int = 0
    min_words: int | None = None
    max_words: int | None = None


class ItemsRequest(BaseModel):
    passage_id: str
    seed: int = 0


class DifRow(BaseModel):
    item_id: str
    group: str
    ability: float
    correct: bool


class DifAuditRequest(BaseModel):
    records: list[DifRow]


class DrfAuditRequest(BaseModel):
    machine: list[float]
    consensus: list[float]
    groups: list[str]
    scope: str = "score"


class DemoRow(BaseModel):
    gender: str
    l1: str


class RepresentationRequest(BaseModel):
    records: list[DemoRow]
    targets: dict[str, float]
    tolerance: float


class SessionsRequest(BaseModel):
    sessions: list[dict]


class BaselineRequest(BaseModel):
    mix: dict[str, dict[str, float]]


class EcpCreateRequest(BaseModel):
    description: str
    evidence: list[str] = Field(default_factory=list)
    required_roles: list[str]
    artifact: str | None = None


class EcpApproveRequest(BaseModel):
    approver: str
    role: str


# ---------------------------------------------------------------------------
# App factory


def create_app(runtime: Runtime | None = None, config: Config | None = None) -> FastAPI:
    runtime = runtime if runtime is not None else Runtime(config or Config())
    app = FastAPI(title="langassess", docs_url=None, redoc_url=None)
    app.state.runtime = runtime

    @app.exception_handler(RequestValidationError)
    async def _validation(_request: Request, exc: RequestValidationError):
        errors = [
            {
                "field": ".".join(str(part) for part in err.get("loc", ()) if part != "body"),
                "message": err.get("msg", "invalid value"),
            }
            for err in exc.errors()
        ]
        return JSONResponse(
            status_code=400, content={"detail": "invalid request body", "errors": errors}
        )

    @app.exception_handler(NotFoundError)
    async def _not_found(_request: Request, exc: NotFoundError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(ReviewError)
    async def _review_conflict(_request: Request, exc: ReviewError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(ConflictError)
    async def _version_conflict(_request: Request, exc: ConflictError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(IdCollisionError)
    async def _collision(_request: Request, exc: IdCollisionError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(GenerationError)
    async def _generation(_request: Request, exc: GenerationError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(ConfigError)
    async def _config(_request: Request, exc: ConfigError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(ValueError)
    async def _value(_request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    # -- health -----------------------------------------------------------

    @app.get("/v1/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    # -- responses --------------------------------------------------------

    @app.post("/v1/responses/score")
    def score(body: ScoreRequest) -> dict:
        return runtime.score_text(body.text, body.prompt_id, body.response_id)

    @app.post("/v1/responses/scan")
    def scan(body: ScanRequest) -> dict:
        return runtime.scan_response(body.response_id, body.text)

    @app.get("/v1/responses/{response_id}/flag")
    def get_flag(response_id: str) -> dict:
        envelope = runtime.store.get(f"flag-{response_id}")
        if envelope.kind != KIND_FLAG:
            raise NotFoundError(f"no scan flag for response {response_id!r}")
        return envelope.payload

    @app.post("/v1/sources")
    def add_source(body: SourceRequest) -> dict:
        return runtime.add_source(
            body.doc_id, body.text, body.source_class, body.session_id
        )

    # -- review -----------------------------------------------------------

    @app.get("/v1/review/queue")
    def queue(
        stage: str | None = Query(default=None),
        subject_type: str | None = Query(default=None),
        claim: bool = Query(default=False),
        x_reviewer_id: str | None = Header(default=None),
    ):
        if claim:
            if not x_reviewer_id:
                raise ValueError("claiming requires the X-Reviewer-Id header")
            entry = runtime.claim_next(x_reviewer_id, stage or "pending_fab")
            return {"entry": entry}
        return {"entries": runtime.list_queue(stage=stage, subject_type=subject_type)}

    @app.post("/v1/review/queue")
    def enqueue(body: EnqueueRequest) -> dict:
        return runtime.enqueue_subject(
            {
                "subject_type": body.subject_type,
                "subject_id": body.subject_id,
                "payload": body.payload,
            },
            author=body.author,
        )

    @app.get("/v1/review/{entry_id}")
    def get_entry(entry_id: str) -> dict:
        return entry_to_dict(runtime.get_entry(entry_id))

    @app.post("/v1/review/{entry_id}/decision")
    def decide(
        entry_id: str,
        body: DecisionRequest,
        x_reviewer_id: str | None = Header(default=None),
    ) -> dict:
        if not x_reviewer_id:
            raise ValueError("decisions require the X-Reviewer-Id header")
        return runtime.decide(
            entry_id,
            x_reviewer_id,
            body.verdict,
            tuple(body.reason_codes),
            body.note,
        )

    @app.post("/v1/review/{entry_id}/resubmit")
    def resubmit(entry_id: str, body: ResubmitRequest) -> dict:
        return runtime.resubmit(entry_id, body.subject)

    @app.get("/v1/review/feedback/report")
    def feedback(start: float = Query(...), end: float = Query(...)) -> dict:
        return runtime.feedback(start, end)

    # -- generation -------------------------------------------------------

    @app.post("/v1/generate/passage")
    def generate(body: PassageRequest) -> dict:
        return runtime.create_passage(
            body.category, body.topic, body.seed, body.min_words, body.max_words
        )

    @app.post("/v1/generate/items")
    def items(body: ItemsRequest) -> dict:
        return runtime.build_items(body.passage_id, body.seed)

    @app.get("/v1/passages/{passage_id}")
    def get_passage(passage_id: str) -> dict:
        return runtime.store.get(passage_id).payload

    @app.get("/v1/items/{item_id}")
    def get_item(item_id: str) -> dict:
        envelope = runtime.store.get(item_id)
        if envelope.kind != KIND_DRAFT:
            raise NotFoundError(f"no item draft {item_id!r}")
        return envelope.payload

    # -- audits -----------------------------------------------------------

    @app.post("/v1/audit/dif")
    def audit_dif(body: DifAuditRequest) -> dict:
        return runtime.audit_dif([row.model_dump() for row in body.records])

    @app.post("/v1/audit/drf")
    def audit_drf(body: DrfAuditRequest) -> dict:
        return runtime.audit_drf(body.machine, body.consensus, body.groups, body.scope)

    @app.post("/v1/audit/representation")
    def audit_representation(body: RepresentationRequest) -> dict:
        return runtime.audit_representation(
            [row.model_dump() for row in body.records], body.targets, body.tolerance
        )

    # -- monitoring -------------------------------------------------------

    @app.post("/v1/monitor/sessions")
    def ingest(body: SessionsRequest) -> dict:
        return {"ingested": runtime.ingest_sessions(body.sessions)}

    @app.post("/v1/monitor/baseline")
    def baseline(body: BaselineRequest) -> dict:
        return runtime.set_baseline(body.mix)

    @app.get("/v1/monitor/reports/{week}")
    def report(week: int) -> dict:
        return runtime.get_report(week)

    # -- change proposals -------------------------------------------------

    @app.post("/v1/ecp")
    def create_ecp(body: EcpCreateRequest) -> dict:
        return runtime.create_ecp(
            body.description,
            tuple(body.evidence),
            tuple(body.required_roles),
            body.artifact,
        )

    @app.get("/v1/ecp/{ecp_id}")
    def get_ecp(ecp_id: str) -> dict:
        return runtime.get_ecp(ecp_id)

    @app.post("/v1/ecp/{ecp_id}/approve")
    def approve(ecp_id: str, body: EcpApproveRequest) -> dict:
        return runtime.approve_ecp(ecp_id, body.approver, body.role)

    @app.post("/v1/ecp/{ecp_id}/launch")
    def launch(ecp_id: str) -> dict:
        return runtime.launch_ecp(ecp_id)

    return app


def serve(config: Config | None = None, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Run the API under uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(create_app(config=config), host=host, port=port)
