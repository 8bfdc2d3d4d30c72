#!/usr/bin/env python3
"""Record real API payloads into tests/fixtures/.

Drives a deterministic engine instance through the HTTP interface and writes
every response body the UI contract tests replay. Rerun after any payload
shape change:

    python3 scripts/record_fixtures.py
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from langassess.api import create_app
from langassess.config import Config
from langassess.plagiarism import (
    IndexDocument,
    classify,
    index_build,
    render_highlights,
    scan,
)
from langassess.runtime import Runtime

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

WEB_SOURCE = (
    "Glaciers are slow rivers of ice that carve wide valleys over thousands "
    "of years. When a glacier melts it leaves behind ridges of rock and "
    "gravel that mark how far the ice once reached."
)
HIST_SOURCE = (
    "My grandmother kept a small garden behind the house where she grew "
    "beans and tomatoes every summer, and she watered them each morning "
    "before the sun climbed too high."
)


def save(name: str, payload: object) -> None:
    path = FIXTURES / name
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path.relative_to(FIXTURES.parent.parent)}")


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    runtime = Runtime(Config(deterministic_ids=True))
    client = TestClient(create_app(runtime))

    def get(url: str, **kwargs) -> dict:
        response = client.get(url, **kwargs)
        assert response.status_code == 200, response.text
        return response.json()

    def post(url: str, body: dict, expect: int = 200, **kwargs):
        response = client.post(url, json=body, **kwargs)
        assert response.status_code == expect, response.text
        return response.json()

    # -- a populated review queue ----------------------------------------
    post("/v1/generate/passage", {"category": "expository", "topic": "rivers and water", "seed": 11})
    post("/v1/generate/items", {"passage_id": "psg-00000011", "seed": 3})

    def decide(entry_id, reviewer, verdict, codes=(), expect=200):
        return post(
            f"/v1/review/{entry_id}/decision",
            {"verdict": verdict, "reason_codes": list(codes), "note": ""},
            expect=expect,
            headers={"X-Reviewer-Id": reviewer},
        )

    decide("rev-000001", "alice", "approve")  # now awaiting the second stage
    decide("rev-000002", "ben", "reject", ["low-quality-distractor", "construct-misalignment"])
    decide("rev-000003", "cara", "revise", ["factual-error"])

    # a fairness flag: one stratum-balanced item with a clear focal deficit
    dif_rows = []
    for stratum in range(5):
        ability = float(stratum)
        dif_rows += [
            {"item_id": "itm-demo", "correct": True, "group": "reference", "ability": ability}
        ] * 30
        dif_rows += [
            {"item_id": "itm-demo", "correct": False, "group": "reference", "ability": ability}
        ] * 10
        dif_rows += [
            {"item_id": "itm-demo", "correct": True, "group": "focal", "ability": ability}
        ] * 10
        dif_rows += [
            {"item_id": "itm-demo", "correct": False, "group": "focal", "ability": ability}
        ] * 30
    post("/v1/audit/dif", {"records": dif_rows})

    # a plagiarism flag stitched from three known sources
    post("/v1/sources", {"doc_id": "src-web-001", "text": WEB_SOURCE, "source_class": "internet"})
    post(
        "/v1/sources",
        {
            "doc_id": "src-hist-042",
            "text": HIST_SOURCE,
            "source_class": "historical",
            "session_id": "sess-0042",
        },
    )
    chunk_corpus = runtime.corpus[0].text[:180]
    chunk_web = WEB_SOURCE[:110]
    chunk_hist = HIST_SOURCE[:105]
    response_text = (
        f"I think that {chunk_corpus} Later in my essay, {chunk_web} "
        f"And to finish, {chunk_hist} That is my view."
    )
    scanned = post("/v1/responses/scan", {"response_id": "resp-plag", "text": response_text})
    assert scanned["flag"]["classification"] == "suspect"
    assert len(scanned["flag"]["highlights"]["sources"]) == 3

    # -- recorded payloads ------------------------------------------------
    save("queue.json", get("/v1/review/queue"))
    save("queue-fab.json", get("/v1/review/queue", params={"stage": "pending_fab"}))

    entries = get("/v1/review/queue")["entries"]
    pending_item = next(
        e
        for e in entries
        if e["state"] == "pending_fab"
        and e["subject"]["subject_type"] == "item_draft"
        and e["subject"]["payload"]["kind"] == "comprehension"
    )
    save("entry-item.json", get(f"/v1/review/{pending_item['entry_id']}"))
    save("entry-cloze.json", get("/v1/review/rev-000001"))
    save("passage.json", get("/v1/passages/psg-00000011"))

    save("feedback.json", get("/v1/review/feedback/report", params={"start": 0, "end": 1e9}))
    save(
        "feedback-empty.json",
        get("/v1/review/feedback/report", params={"start": 5e8, "end": 5e8 + 1}),
    )

    flag = get("/v1/responses/resp-plag/flag")
    save("flag3.json", flag)
    save("flag3-response.json", {"response_id": "resp-plag", "text": response_text})
    save(
        "flag3-entry.json",
        get(f"/v1/review/{scanned['entry_id']}"),
    )

    # same flag rendered against an index that has evicted one source
    docs = [IndexDocument(d.doc_id, "internet", d.text) for d in runtime.corpus]
    docs.append(IndexDocument("src-hist-042", "historical", HIST_SOURCE, "sess-0042"))
    reduced = index_build(docs, k=runtime.config.fingerprint_k, w=runtime.config.fingerprint_window)
    spans = scan(runtime.index, response_text)
    raw_flag = classify("resp-plag", response_text, spans, runtime.config.plagiarism_threshold)
    save("flag-unavailable.json", render_highlights(raw_flag, reduced))

    # a successful decision and the conflict its duplicate earns
    save("decision-ok.json", decide("rev-000001", "bob", "approve"))
    save("decision-conflict.json", decide("rev-000001", "bob", "approve", expect=409))

    # a malformed body, for the client's error-shape handling
    save(
        "decision-invalid.json",
        post(
            "/v1/review/rev-000004/decision",
            {"verdict": "maybe", "reason_codes": [], "note": ""},
            expect=400,
            headers={"X-Reviewer-Id": "bob"},
        ),
    )


if __name__ == "__main__":
    main()
