"""HTTP API: endpoint behavior, error mapping, and concurrency guarantees."""

import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from langassess.api import create_app
from langassess.config import AlertRuleConfig, Config
from langassess.generation import FilterThresholds, draft_to_dict
from langassess.runtime import Runtime
from langassess.store import Store


@pytest.fixture()
def runtime():
    return Runtime(Config(deterministic_ids=True))


@pytest.fixture()
def client(runtime):
    return TestClient(create_app(runtime))


def make_passage(client, seed=11, topic="rivers and water", category="expository"):
    response = client.post(
        "/v1/generate/passage",
        json={"category": category, "topic": topic, "seed": seed},
    )
    assert response.status_code == 200
    return response.json()


def make_items(client, passage_id, seed=3):
    response = client.post(
        "/v1/generate/items", json={"passage_id": passage_id, "seed": seed}
    )
    assert response.status_code == 200
    return response.json()


# ---------------------------------------------------------------------------
# health and validation


def test_healthz(client):
    response = client.get("/v1/healthz")
    assert response.status_code == 200
    assert response.json() == {"status": "ok"}


def test_malformed_body_gives_400_with_field_messages(client):
    response = client.post("/v1/responses/score", json={"prompt_id": 3})
    assert response.status_code == 400
    body = response.json()
    assert body["detail"] == "invalid request body"
    fields = {e["field"] for e in body["errors"]}
    assert "text" in fields and "prompt_id" in fields
    for error in body["errors"]:
        assert error["message"]


def test_unknown_entity_gives_404(client):
    assert client.get("/v1/passages/ghost").status_code == 404
    assert client.get("/v1/review/ghost").status_code == 404
    assert client.get("/v1/ecp/ghost").status_code == 404
    assert client.get("/v1/items/ghost").status_code == 404
    assert client.get("/v1/responses/ghost/flag").status_code == 404


# ---------------------------------------------------------------------------
# scoring


def test_score_returns_band_and_explanation(client):
    text = (
        "I prefer to live in a small town because the streets are quiet "
        "and people know each other. A big city has more jobs, but the "
        "crowds and the noise make everyday life harder for me."
    )
    response = client.post(
        "/v1/responses/score", json={"text": text, "prompt_id": "wp-001"}
    )
    assert response.status_code == 200
    body = response.json()
    assert 1 <= body["band"] <= 6
    assert body["band_label"] in ("A1", "A2", "B1", "B2", "C1", "C2")
    explanation = body["explanation"]
    assert len(explanation["contributions"]) == 18
    assert set(explanation["subconstruct_totals"]) == {
        "content",
        "coherence",
        "lexis",
        "grammar",
    }
    # Shapley efficiency: contributions bridge base value to the raw score
    total = sum(explanation["contributions"].values())
    assert explanation["base_value"] + total == pytest.approx(body["raw"], abs=1e-6)


def test_score_empty_text_is_graceful(client):
    response = client.post("/v1/responses/score", json={"text": ""})
    assert response.status_code == 200
    assert 1 <= response.json()["band"] <= 6


def test_score_unknown_prompt_404(client):
    response = client.post(
        "/v1/responses/score", json={"text": "hello", "prompt_id": "wp-404"}
    )
    assert response.status_code == 404


def test_score_persists_response_entity(runtime, client):
    client.post(
        "/v1/responses/score",
        json={"text": "Short answer.", "response_id": "resp-9"},
    )
    assert runtime.store.get("resp-9").payload["response_id"] == "resp-9"


def test_scoring_model_is_referenced_by_a_launched_ecp(runtime, client):
    client.post("/v1/responses/score", json={"text": "anything"})
    pointers = [e for e in runtime.store.list("pointer") if e.entity_id == "active-scorer"]
    assert len(pointers) == 1
    ecp = runtime.store.get(pointers[0].payload["ecp_id"]).payload
    assert ecp["status"] == "launched"
    assert ecp["artifact"] == pointers[0].payload["model_id"]


# ---------------------------------------------------------------------------
# generation


def test_generate_passage_contract(client):
    passage = make_passage(client)
    assert passage["passage_id"] == "psg-00000011"
    assert passage["category"] == "expository"
    words = len(passage["text"].split())
    assert 80 <= words <= 120
    assert passage["provenance"]["provider"] == "mock"


def test_generate_items_stores_drafts_and_queues_review(client):
    passage = make_passage(client)
    result = make_items(client, passage["passage_id"])
    assert result["drafts"]
    kinds = {d["kind"] for d in result["drafts"]}
    assert "vocabulary_in_context" in kinds
    assert len(result["enqueued"]) == len(result["drafts"])
    item_id = result["drafts"][0]["item_id"]
    assert client.get(f"/v1/items/{item_id}").json()["item_id"] == item_id
    queue = client.get("/v1/review/queue", params={"stage": "pending_fab"}).json()
    assert len(queue["entries"]) == len(result["enqueued"])


def test_no_threshold_violating_draft_reaches_review(runtime, client):
    """Every queued draft re-passes the screening filters."""
    from langassess.generation import ItemDraft, Option, GapSpec, filter_item

    passage = make_passage(client)
    make_items(client, passage["passage_id"])
    thresholds = FilterThresholds(
        stem_min_tokens=runtime.config.filter_stem_min_tokens,
        stem_max_tokens=runtime.config.filter_stem_max_tokens,
        option_min_tokens=runtime.config.filter_option_min_tokens,
        option_max_tokens=runtime.config.filter_option_max_tokens,
    )
    queued = runtime.list_queue(subject_type="item_draft")
    assert queued
    for entry in queued:
        record = entry["subject"]["payload"]["draft"]
        draft = ItemDraft(
            item_id=record["item_id"],
            passage_id=record["passage_id"],
            kind=record["kind"],
            stem=record["stem"],
            options=tuple(
                Option(o["text"], o["correct"], o["similarity"], o["logprob"])
                for o in record["options"]
            ),
            gaps=tuple(
                GapSpec(
                    g["token_index"],
                    g["char_start"],
                    g["char_end"],
                    tuple(
                        Option(o["text"], o["correct"], o["similarity"], o["logprob"])
                        for o in g["options"]
                    ),
                )
                for g in record["gaps"]
            ),
            answer_span=tuple(record["answer_span"]) if record["answer_span"] else None,
            diagnostics=record["diagnostics"],
        )
        assert filter_item(draft, thresholds).accepted


def test_generate_items_unknown_passage_404(client):
    response = client.post(
        "/v1/generate/items", json={"passage_id": "ghost", "seed": 0}
    )
    assert response.status_code == 404


def test_rebuilding_items_for_same_passage_conflicts(client):
    passage = make_passage(client)
    make_items(client, passage["passage_id"])
    response = client.post(
        "/v1/generate/items", json={"passage_id": passage["passage_id"], "seed": 3}
    )
    assert response.status_code == 409


# ---------------------------------------------------------------------------
# review workflow over HTTP


def decide(client, entry_id, reviewer, verdict, codes=(), note=""):
    return client.post(
        f"/v1/review/{entry_id}/decision",
        json={"verdict": verdict, "reason_codes": list(codes), "note": note},
        headers={"X-Reviewer-Id": reviewer},
    )


def test_two_stage_decision_flow(client):
    passage = make_passage(client)
    entry_id = make_items(client, passage["passage_id"])["enqueued"][0]
    assert decide(client, entry_id, "alice", "approve").json()["state"] == "pending_iqr"
    assert decide(client, entry_id, "bob", "approve").json()["state"] == "approved"
    response = decide(client, entry_id, "cara", "approve")
    assert response.status_code == 409
    assert "terminal" in response.json()["detail"]


def test_decision_requires_reviewer_header(client):
    passage = make_passage(client)
    entry_id = make_items(client, passage["passage_id"])["enqueued"][0]
    response = client.post(
        f"/v1/review/{entry_id}/decision", json={"verdict": "approve"}
    )
    assert response.status_code == 400
    assert "X-Reviewer-Id" in response.json()["detail"]


def test_same_reviewer_cannot_take_both_stages(client):
    passage = make_passage(client)
    entry_id = make_items(client, passage["passage_id"])["enqueued"][0]
    decide(client, entry_id, "alice", "approve")
    response = decide(client, entry_id, "alice", "approve")
    assert response.status_code == 409
    assert "distinct" in response.json()["detail"]


def test_reject_requires_reason_codes(client):
    passage = make_passage(client)
    entry_id = make_items(client, passage["passage_id"])["enqueued"][0]
    assert decide(client, entry_id, "alice", "reject").status_code == 400
    response = decide(client, entry_id, "alice", "reject", codes=["not-a-code"])
    assert response.status_code == 400
    ok = decide(client, entry_id, "alice", "reject", codes=["factual-error"])
    assert ok.json()["state"] == "rejected"


def test_revise_and_resubmit_cycle(client):
    passage = make_passage(client)
    entry_id = make_items(client, passage["passage_id"])["enqueued"][0]
    revised = decide(client, entry_id, "alice", "revise", codes=["low-quality-distractor"])
    assert revised.json()["state"] == "revise"
    response = client.post(f"/v1/review/{entry_id}/resubmit", json={})
    assert response.json()["state"] == "pending_fab"
    again = client.post(f"/v1/review/{entry_id}/resubmit", json={})
    assert again.status_code == 409


def test_claim_hand_out(client):
    passage = make_passage(client)
    entries = make_items(client, passage["passage_id"])["enqueued"]
    claimed = client.get(
        "/v1/review/queue",
        params={"claim": "true", "stage": "pending_fab"},
        headers={"X-Reviewer-Id": "alice"},
    ).json()["entry"]
    assert claimed["entry_id"] == entries[0]
    other = client.get(
        "/v1/review/queue",
        params={"claim": "true", "stage": "pending_fab"},
        headers={"X-Reviewer-Id": "bob"},
    ).json()["entry"]
    assert other["entry_id"] == entries[1]
    missing = client.get("/v1/review/queue", params={"claim": "true"})
    assert missing.status_code == 400


def test_enqueue_custom_subject(client):
    response = client.post(
        "/v1/review/queue",
        json={"subject_type": "item_draft", "subject_id": "itm-x", "payload": {"kind": "main_idea"}},
    )
    assert response.status_code == 200
    assert response.json()["state"] == "pending_fab"
    bad = client.post(
        "/v1/review/queue", json={"subject_type": "mystery", "subject_id": "s"}
    )
    assert bad.status_code == 400


def test_decisions_survive_restart(runtime, client):
    """Queue state rebuilt from the store matches the live queue."""
    passage = make_passage(client)
    entry_id = make_items(client, passage["passage_id"])["enqueued"][0]
    decide(client, entry_id, "alice", "approve")
    reopened = Runtime(runtime.config, store=runtime.store)
    assert reopened.queue.get(entry_id).state == "pending_iqr"
    assert reopened.queue.get(entry_id).history[0].reviewer_id == "alice"


# ---------------------------------------------------------------------------
# plagiarism scan


def test_scan_benign_and_suspect(runtime, client):
    benign = client.post(
        "/v1/responses/scan",
        json={"response_id": "r-benign", "text": "A wholly original two line answer."},
    ).json()
    assert benign["flag"]["classification"] == "benign"
    assert benign["entry_id"] is None

    copied = runtime.corpus[0].text
    suspect = client.post(
        "/v1/responses/scan", json={"response_id": "r-copy", "text": copied}
    ).json()
    assert suspect["flag"]["classification"] == "suspect"
    assert suspect["flag"]["coverage"] > 0.9
    assert suspect["entry_id"] is not None

    stored = client.get("/v1/responses/r-copy/flag").json()
    assert stored["highlights"]["sources"]
    top = stored["highlights"]["sources"][0]
    assert top["source_available"] is True
    assert top["spans"][0]["length"] >= 25


def test_suspect_flag_adjudication_marks_session(runtime, client):
    copied = runtime.corpus[1].text
    entry_id = client.post(
        "/v1/responses/scan", json={"response_id": "sess-77", "text": copied}
    ).json()["entry_id"]
    confirmed = decide(client, entry_id, "proctor-1", "approve")
    assert confirmed.json()["state"] == "approved"
    assert "sess-77" in runtime.queue.confirmed_sessions


def test_added_source_is_scanned(client):
    client.post(
        "/v1/sources",
        json={
            "doc_id": "ext-1",
            "text": "Bespoke source paragraph that exists nowhere in the bundled corpus, "
            "with enough length to fingerprint and match precisely.",
            "source_class": "historical",
            "session_id": "old-sess",
        },
    )
    result = client.post(
        "/v1/responses/scan",
        json={
            "response_id": "r-ext",
            "text": "Bespoke source paragraph that exists nowhere in the bundled corpus, "
            "with enough length to fingerprint and match precisely.",
        },
    ).json()
    assert result["flag"]["classification"] == "suspect"
    source = result["flag"]["highlights"]["sources"][0]
    assert source["doc_id"] == "ext-1"
    assert source["source_class"] == "historical"
    assert source["session_id"] == "old-sess"


# ---------------------------------------------------------------------------
# fairness audits


def dif_records():
    records = []
    for stratum, ability in enumerate([-2.0, -1.0, 0.0, 1.0, 2.0]):
        for group, correct, count in (
            ("reference", True, 30),
            ("reference", False, 10),
            ("focal", True, 10),
            ("focal", False, 30),
        ):
            for i in range(count):
                records.append(
                    {
                        "item_id": "item-biased",
                        "group": group,
                        "ability": ability + i * 1e-4,
                        "correct": correct,
                    }
                )
    return records


def test_audit_dif_flags_class_c_and_queues(runtime, client):
    response = client.post("/v1/audit/dif", json={"records": dif_records()})
    assert response.status_code == 200
    body = response.json()
    result = body["results"][0]
    assert result["classification"] == "C"
    assert body["flagged"] == ["item-biased"]
    assert len(body["entries"]) == 1
    entry = runtime.queue.get(body["entries"][0])
    assert entry.subject.subject_type == "dif_flag"
    assert entry.subject.subject_id == "item-biased"


def test_audit_dif_empty_records_400(client):
    assert client.post("/v1/audit/dif", json={"records": []}).status_code == 400


def test_audit_drf_flags_offset_group(runtime, client):
    rng = np.random.default_rng(5)
    n = 121
    groups = ["a" if i % 2 == 0 else "b" for i in range(n)]
    consensus = rng.uniform(1, 6, size=n)
    machine = consensus + np.where(np.array(groups) == "b", 0.4, 0.0)
    machine = machine + rng.normal(0, 0.05, size=n)
    response = client.post(
        "/v1/audit/drf",
        json={
            "machine": machine.tolist(),
            "consensus": consensus.tolist(),
            "groups": groups,
        },
    )
    assert response.status_code == 200
    body = response.json()
    assert body["result"]["flagged_groups"] == ["b"]
    assert len(body["entries"]) == 1
    assert runtime.queue.get(body["entries"][0]).subject.subject_type == "drf_flag"


def test_audit_representation(client):
    records = [{"gender": "female", "l1": "Spanish"}] * 5 + [
        {"gender": "male", "l1": "Spanish"}
    ] * 5
    targets = {"female:Spanish": 0.5, "male:Spanish": 0.5}
    response = client.post(
        "/v1/audit/representation",
        json={"records": records, "targets": targets, "tolerance": 0.05},
    )
    assert response.status_code == 200
    assert response.json()["passed"] is True

    bad = client.post(
        "/v1/audit/representation",
        json={"records": records, "targets": {"female": 1.0}, "tolerance": 0.05},
    )
    assert bad.status_code == 400


# ---------------------------------------------------------------------------
# monitoring


def monitor_runtime():
    config = Config(
        deterministic_ids=True,
        alert_rules=(
            AlertRuleConfig("low-volume", "volume", 3, "below"),
            AlertRuleConfig("psi-gender", "psi.gender", 0.2, "above", open_review=True),
        ),
    )
    return Runtime(config)


def test_monitor_report_with_alerts_and_review():
    runtime = monitor_runtime()
    client = TestClient(create_app(runtime))
    sessions = [
        {
            "session_id": f"s-{i}",
            "week": 1,
            "score": 3.0 + (i % 3),
            "demographics": {"gender": "female" if i < 9 else "male"},
            "item_exposures": ["i-1"] if i % 2 == 0 else [],
        }
        for i in range(10)
    ]
    assert (
        client.post("/v1/monitor/sessions", json={"sessions": sessions}).json()["ingested"]
        == 10
    )
    client.post(
        "/v1/monitor/baseline", json={"mix": {"gender": {"female": 0.5, "male": 0.5}}}
    )
    report = client.get("/v1/monitor/reports/1").json()
    assert report["volume"] == 10
    assert report["psi"]["gender"] > 0.2
    names = {a["rule_name"] for a in report["alerts"]}
    assert names == {"psi-gender"}
    alerts = [e for e in runtime.list_queue(subject_type="monitor_alert")]
    assert len(alerts) == 1
    assert alerts[0]["subject"]["subject_id"] == "week-1:psi.gender"
    # the computed report was persisted; the second read returns it unchanged
    assert client.get("/v1/monitor/reports/1").json() == report


def test_monitor_empty_week_low_volume_alert():
    runtime = monitor_runtime()
    client = TestClient(create_app(runtime))
    report = client.get("/v1/monitor/reports/7").json()
    assert report["volume"] == 0
    assert {a["rule_name"] for a in report["alerts"]} == {"low-volume"}


def test_duplicate_session_id_conflicts(client):
    session = {"session_id": "dup", "week": 0, "score": 3.0}
    assert (
        client.post("/v1/monitor/sessions", json={"sessions": [session]}).status_code
        == 200
    )
    assert (
        client.post("/v1/monitor/sessions", json={"sessions": [session]}).status_code
        == 409
    )


# ---------------------------------------------------------------------------
# change proposals


def test_ecp_lifecycle(client):
    created = client.post(
        "/v1/ecp",
        json={
            "description": "Adjust gap-fill difficulty band",
            "evidence": ["pilot study"],
            "required_roles": ["psychometrics", "fairness"],
        },
    ).json()
    ecp_id = created["ecp_id"]
    assert created["status"] == "draft"

    premature = client.post(f"/v1/ecp/{ecp_id}/launch")
    assert premature.status_code == 409
    assert "fairness" in premature.json()["detail"]

    wrong_role = client.post(
        f"/v1/ecp/{ecp_id}/approve", json={"approver": "zed", "role": "marketing"}
    )
    assert wrong_role.status_code == 409

    client.post(f"/v1/ecp/{ecp_id}/approve", json={"approver": "ana", "role": "psychometrics"})
    approved = client.post(
        f"/v1/ecp/{ecp_id}/approve", json={"approver": "raj", "role": "fairness"}
    ).json()
    assert approved["status"] == "approved"

    launched = client.post(f"/v1/ecp/{ecp_id}/launch").json()
    assert launched["status"] == "launched"
    assert client.get(f"/v1/ecp/{ecp_id}").json()["status"] == "launched"


def test_ecp_requires_roles(client):
    response = client.post(
        "/v1/ecp", json={"description": "x", "required_roles": []}
    )
    assert response.status_code == 400


# ---------------------------------------------------------------------------
# concurrency


def test_hundred_concurrent_decisions_apply_once(runtime):
    """One decision wins; the other 99 clients see a clean 409."""
    app = create_app(runtime)
    copied = runtime.corpus[2].text
    with TestClient(app) as setup:
        entry_id = setup.post(
            "/v1/responses/scan", json={"response_id": "race-sess", "text": copied}
        ).json()["entry_id"]
    assert entry_id is not None

    statuses: list[int] = []
    lock = threading.Lock()

    def attempt(reviewer: str):
        with TestClient(app) as own_client:
            response = own_client.post(
                f"/v1/review/{entry_id}/decision",
                json={"verdict": "approve"},
                headers={"X-Reviewer-Id": reviewer},
            )
        with lock:
            statuses.append(response.status_code)

    threads = [threading.Thread(target=attempt, args=(f"rev-{i}",)) for i in range(100)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    assert len(statuses) == 100
    assert statuses.count(200) == 1
    assert statuses.count(409) == 99
    entry = runtime.queue.get(entry_id)
    assert entry.state == "approved"
    assert len(entry.history) == 1
    # the store saw exactly one update on top of the original enqueue
    assert runtime.store.get(entry_id).version == 2
