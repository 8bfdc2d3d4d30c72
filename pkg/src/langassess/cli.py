"""Command-line interface over the same runtime the HTTP API uses.

Machine-readable JSON goes to stdout; errors go to stderr as one JSON object.
Exit codes: 0 success, 1 domain or I/O failure, 2 usage error (argparse).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import Config, ConfigError, load_config
from .generation import GenerationError
from .review import ReviewError
from .runtime import Runtime
from .store import StoreError


def _runtime(args: argparse.Namespace) -> Runtime:
    config = load_config(args.config)
    overrides: dict = {}
    if args.store is not None:
        overrides["store_path"] = args.store
    if args.deterministic:
        overrides["deterministic_ids"] = True
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return Runtime(config)


def _emit(payload) -> int:
    print(json.dumps(payload, sort_keys=True))
    return 0


def _read_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _read_jsonl(path: str) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    return records


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


# ---------------------------------------------------------------------------
# Command handlers


def _cmd_generate_passage(args) -> int:
    rt = _runtime(args)
    return _emit(
        rt.create_passage(args.category, args.topic, args.seed, args.min_words, args.max_words)
    )


def _cmd_generate_items(args) -> int:
    rt = _runtime(args)
    return _emit(rt.build_items(args.passage, args.seed))


def _cmd_review_list(args) -> int:
    rt = _runtime(args)
    return _emit({"entries": rt.list_queue(stage=args.stage, subject_type=args.type)})


def _cmd_review_next(args) -> int:
    rt = _runtime(args)
    return _emit({"entry": rt.claim_next(args.reviewer, args.stage)})


def _cmd_review_decide(args) -> int:
    rt = _runtime(args)
    codes = tuple(c for c in (args.codes or "").split(",") if c)
    return _emit(rt.decide(args.entry, args.reviewer, args.verdict, codes, args.note))


def _cmd_review_resubmit(args) -> int:
    rt = _runtime(args)
    return _emit(rt.resubmit(args.entry))


def _cmd_review_feedback(args) -> int:
    rt = _runtime(args)
    return _emit(rt.feedback(args.start, args.end))


def _cmd_score(args) -> int:
    rt = _runtime(args)
    if args.response is not None:
        doc = _read_json(args.response)
        text = doc["text"]
        prompt_id = doc.get("prompt_id", args.prompt)
        response_id = doc.get("response_id", args.response_id)
    elif args.file is not None:
        text = _read_text(args.file)
        prompt_id, response_id = args.prompt, args.response_id
    elif args.text is not None:
        text = args.text
        prompt_id, response_id = args.prompt, args.response_id
    else:
        raise ValueError("provide --text, --file, or --response")
    return _emit(rt.score_text(text, prompt_id, response_id))


def _cmd_scan(args) -> int:
    rt = _runtime(args)
    text = _read_text(args.file) if args.file is not None else args.text
    if text is None:
        raise ValueError("provide --text or --file")
    return _emit(rt.scan_response(args.response_id, text))


def _cmd_scan_source(args) -> int:
    rt = _runtime(args)
    return _emit(
        rt.add_source(
            args.doc_id, _read_text(args.file), args.source_class, args.session
        )
    )


def _cmd_audit_dif(args) -> int:
    rt = _runtime(args)
    return _emit(rt.audit_dif(_read_jsonl(args.records)))


def _cmd_audit_drf(args) -> int:
    rt = _runtime(args)
    doc = _read_json(args.file)
    return _emit(
        rt.audit_drf(
            doc["machine"], doc["consensus"], doc["groups"], doc.get("scope", "score")
        )
    )


def _cmd_audit_representation(args) -> int:
    rt = _runtime(args)
    doc = _read_json(args.file)
    return _emit(
        rt.audit_representation(doc["records"], doc["targets"], doc["tolerance"])
    )


def _cmd_monitor_ingest(args) -> int:
    rt = _runtime(args)
    return _emit({"ingested": rt.ingest_sessions(_read_jsonl(args.file))})


def _cmd_monitor_baseline(args) -> int:
    rt = _runtime(args)
    return _emit(rt.set_baseline(_read_json(args.file)))


def _cmd_monitor_run(args) -> int:
    rt = _runtime(args)
    return _emit(rt.run_monitor(args.week))


def _cmd_monitor_report(args) -> int:
    rt = _runtime(args)
    return _emit(rt.get_report(args.week, compute=False))


def _cmd_ecp_create(args) -> int:
    rt = _runtime(args)
    roles = tuple(r for r in args.roles.split(",") if r)
    evidence = tuple(args.evidence or ())
    return _emit(rt.create_ecp(args.description, evidence, roles, args.artifact))


def _cmd_ecp_show(args) -> int:
    rt = _runtime(args)
    return _emit(rt.get_ecp(args.id))


def _cmd_ecp_approve(args) -> int:
    rt = _runtime(args)
    return _emit(rt.approve_ecp(args.id, args.approver, args.role))


def _cmd_ecp_launch(args) -> int:
    rt = _runtime(args)
    return _emit(rt.launch_ecp(args.id))


def _cmd_serve(args) -> int:
    from .api import serve

    config = load_config(args.config)
    if args.store is not None:
        config = dataclasses.replace(config, store_path=args.store)
    serve(config, host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="langassess",
        description="Assessment content pipeline: generate, review, score, audit, monitor.",
    )
    parser.add_argument("--config", default=None, help="path to a TOML or JSON config file")
    parser.add_argument("--store", default=None, help="store directory (overrides config)")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="use counter-based ids and logical timestamps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    generate = sub.add_parser("generate", help="create passages and derive items")
    gsub = generate.add_subparsers(dest="subcommand", required=True)
    gp = gsub.add_parser("passage", help="generate one passage")
    gp.add_argument("--category", required=True)
    gp.add_argument("--topic", required=True)
    gp.add_argument("--seed", type=int, default=0)
    gp.add_argument("--min-words", type=int, default=None)
    gp.add_argument("--max-words", type=int, default=None)
    gp.set_defaults(func=_cmd_generate_passage)
    gi = gsub.add_parser("items", help="derive the item set for a stored passage")
    gi.add_argument("--passage", required=True)
    gi.add_argument("--seed", type=int, default=0)
    gi.set_defaults(func=_cmd_generate_items)

    review = sub.add_parser("review", help="work the review queue")
    rsub = review.add_subparsers(dest="subcommand", required=True)
    rl = rsub.add_parser("list")
    rl.add_argument("--stage", default=None)
    rl.add_argument("--type", default=None)
    rl.set_defaults(func=_cmd_review_list)
    rn = rsub.add_parser("next")
    rn.add_argument("--reviewer", required=True)
    rn.add_argument("--stage", default="pending_fab")
    rn.set_defaults(func=_cmd_review_next)
    rd = rsub.add_parser("decide")
    rd.add_argument("--entry", required=True)
    rd.add_argument("--reviewer", required=True)
    rd.add_argument("--verdict", required=True)
    rd.add_argument("--codes", default="")
    rd.add_argument("--note", default="")
    rd.set_defaults(func=_cmd_review_decide)
    rr = rsub.add_parser("resubmit")
    rr.add_argument("--entry", required=True)
    rr.set_defaults(func=_cmd_review_resubmit)
    rf = rsub.add_parser("feedback")
    rf.add_argument("--start", type=float, required=True)
    rf.add_argument("--end", type=float, required=True)
    rf.set_defaults(func=_cmd_review_feedback)

    score = sub.add_parser("score", help="score a writing response with explanation")
    score.add_argument("--text", default=None)
    score.add_argument("--file", default=None, help="plain-text response file")
    score.add_argument("--response", default=None, help="JSON response document")
    score.add_argument("--prompt", default=None, help="writing prompt id")
    score.add_argument("--response-id", default=None)
    score.set_defaults(func=_cmd_score)

    audit = sub.add_parser("audit", help="run fairness audits")
    asub = audit.add_subparsers(dest="subcommand", required=True)
    ad = asub.add_parser("dif")
    ad.add_argument("--records", required=True, help="JSONL of item response records")
    ad.set_defaults(func=_cmd_audit_dif)
    adr = asub.add_parser("drf")
    adr.add_argument("--file", required=True, help="JSON with machine/consensus/groups")
    adr.set_defaults(func=_cmd_audit_drf)
    ar = asub.add_parser("representation")
    ar.add_argument("--file", required=True, help="JSON with records/targets/tolerance")
    ar.set_defaults(func=_cmd_audit_representation)

    scan = sub.add_parser("scan", help="fingerprint-scan a response for reuse")
    scan.add_argument("--response-id", default=None)
    scan.add_argument("--text", default=None)
    scan.add_argument("--file", default=None)
    ssub = scan.add_subparsers(dest="subcommand")
    ss = ssub.add_parser("add-source", help="add a source document to the index")
    ss.add_argument("--doc-id", required=True)
    ss.add_argument("--file", required=True)
    ss.add_argument("--source-class", default="internet")
    ss.add_argument("--session", default=None)
    ss.set_defaults(func=_cmd_scan_source)
    scan.set_defaults(func=_cmd_scan)

    monitor = sub.add_parser("monitor", help="ingest sessions and compute weekly reports")
    msub = monitor.add_subparsers(dest="subcommand", required=True)
    mi = msub.add_parser("ingest")
    mi.add_argument("--file", required=True, help="JSONL of session records")
    mi.set_defaults(func=_cmd_monitor_ingest)
    mb = msub.add_parser("baseline")
    mb.add_argument("--file", required=True, help="JSON demographic mix")
    mb.set_defaults(func=_cmd_monitor_baseline)
    mr = msub.add_parser("run")
    mr.add_argument("--week", type=int, required=True)
    mr.set_defaults(func=_cmd_monitor_run)
    mg = msub.add_parser("report")
    mg.add_argument("--week", type=int, required=True)
    mg.set_defaults(func=_cmd_monitor_report)

    ecp = sub.add_parser("ecp", help="manage exam change proposals")
    esub = ecp.add_subparsers(dest="subcommand", required=True)
    ec = esub.add_parser("create")
    ec.add_argument("--description", required=True)
    ec.add_argument("--evidence", nargs="*", default=[])
    ec.add_argument("--roles", required=True, help="comma-separated required roles")
    ec.add_argument("--artifact", default=None)
    ec.set_defaults(func=_cmd_ecp_create)
    es = esub.add_parser("show")
    es.add_argument("--id", required=True)
    es.set_defaults(func=_cmd_ecp_show)
    ea = esub.add_parser("approve")
    ea.add_argument("--id", required=True)
    ea.add_argument("--approver", required=True)
    ea.add_argument("--role", required=True)
    ea.set_defaults(func=_cmd_ecp_approve)
    el = esub.add_parser("launch")
    el.add_argument("--id", required=True)
    el.set_defaults(func=_cmd_ecp_launch)

    serve_parser = sub.add_parser("serve", help="run the HTTP API")
    serve_parser.add_argument("--host", default="127.0.0.1")
    serve_parser.add_argument("--port", type=int, default=8000)
    serve_parser.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        ReviewError,
        StoreError,
        GenerationError,
        ConfigError,
        ValueError,
        KeyError,
        OSError,
    ) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
