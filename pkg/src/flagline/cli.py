"""Command-line entry point wiring all pipeline stages and services."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .canonical import canonical_json, read_jsonl


def _load_config(args) -> "PipelineConfig":
    from .pipeline import PipelineConfig

    config = PipelineConfig.load(args.config)
    if args.workers:
        config.workers = args.workers
    if getattr(args, "session", None):
        config.session_id = args.session
    return config


def cmd_synth(args) -> int:
    from .synth import generate_session

    out = generate_session(
        args.out,
        session_id=args.session or "synth001",
        duration=args.duration,
        seed=args.seed,
    )
    print(f"synthetic session written to {out}")
    print(f"config: {out / 'config.json'}")
    return 0


def cmd_stage(args, stages: list[str]) -> int:
    from .pipeline import StageFailed, run_pipeline

    config = _load_config(args)
    try:
        results = run_pipeline(config, stages=stages, force=args.force)
    except StageFailed as exc:
        print(f"FAILED: {exc}", file=sys.stderr)
        return 2
    for r in results:
        summary = r.get("summary", "")
        print(f"{r['stage']}: {r['state']} {summary}")
    return 0


def cmd_serve(args) -> int:
    from .server import serve_forever

    serve_forever(args.root, host=args.host, port=args.port)
    return 0


def cmd_export(args) -> int:
    from .ingest import read_ledger
    from .media import MediaBundle
    from .redaction import ProvenanceBundle, export_session
    from . import BUILD_ID

    config = _load_config(args)
    session_dir = Path(config.session_dir)
    ledger = read_ledger(session_dir / "ledger.json")
    policy = json.loads((session_dir / "policy.json").read_text(encoding="utf-8"))
    state_path = session_dir / "review" / "review_state.json"
    reviewers = ["unreviewed"]
    if state_path.exists():
        state = json.loads(state_path.read_text(encoding="utf-8"))
        reviewers = sorted(
            {v.get("reviewer_id", "") for v in state.get("overrides", {}).values() if v.get("reviewer_id")}
        ) or ["reviewer"]
    provenance = ProvenanceBundle(
        model_versions={"detector_suite": BUILD_ID},
        thresholds=policy.get("thresholds", {}),
        reviewer_ids=reviewers,
        software_build=BUILD_ID,
        ledger_digest=ledger["ledger_digest"],
    )
    media = MediaBundle.open(session_dir / "views" / args.view, session_dir / "audio.wav")
    out = export_session(session_dir, media, provenance)
    print(f"deliverable written to {out}")
    return 0


def cmd_report(args) -> int:
    from .metrics import (
        DEFAULT_FACTORS,
        ReviewLogEntry,
        bootstrap_mean_ci,
        format_savings_table,
        fp_burden,
        rtr,
        savings_model,
        session_report,
    )

    factors = DEFAULT_FACTORS
    if args.factors:
        values = [float(f) for f in args.factors.split(",")]
        factors = values
    result = savings_model(factors)
    print(format_savings_table(result))

    report = {"savings_model": {k: v for k, v in result.items()}}

    if args.config:
        from .pipeline import PipelineConfig

        config = PipelineConfig.load(args.config)
        session_dir = Path(config.session_dir)
        log_path = session_dir / "review" / "review_log.jsonl"
        if log_path.exists():
            entries = [ReviewLogEntry.from_json(row) for row in read_jsonl(log_path)]
            labels_path = session_dir / "final_labels.jsonl"
            reviewed = list(read_jsonl(labels_path)) if labels_path.exists() else []
            clips_path = session_dir / "clips.jsonl"
            duration = max((r["t_end"] for r in read_jsonl(clips_path)), default=0.0) if clips_path.exists() else 0.0
            if duration > 0:
                sr = session_report(config.session_id, entries, duration, reviewed_items=reviewed)
                report["session"] = sr.to_json()
                print(f"\nsession {config.session_id}: T_watch_all={sr.t_watch_all:.1f}s "
                      f"T_HITL={sr.t_hitl:.1f}s RTR={sr.rtr:.4f} "
                      f"FP={sr.fp_minutes_per_hour:.2f} min/h ({sr.fp_occurrence_rate:.0%})")
        if args.rtr_samples:
            samples = [float(x) for x in args.rtr_samples.split(",")]
            mean, lo, hi = bootstrap_mean_ci(samples, level=args.level, resamples=args.resamples, seed=args.seed)
            report["rtr_bootstrap"] = {"mean": mean, "lo": lo, "hi": hi}
            print(f"RTR mean {mean:.4f}  {args.level:.0%} CI [{lo:.4f}, {hi:.4f}]")

    if args.out:
        Path(args.out).write_text(canonical_json(report), encoding="utf-8")
        print(f"report written to {args.out}")
    return 0


def cmd_validate(args) -> int:
    from .schemas import validate_artifacts

    if args.config:
        from .pipeline import PipelineConfig

        session_dir = Path(PipelineConfig.load(args.config).session_dir)
    else:
        session_dir = Path(args.session_dir)
    result = validate_artifacts(session_dir)
    for v in result["violations"]:
        line = f":{v['line']}" if v["line"] else ""
        print(f"{v['file']}{line}: {v['message']}")
    print(f"checked {len(result['checked'])} artifacts, {len(result['violations'])} violations")
    return 1 if result["violations"] else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flagline",
        description="governance-first video pre-annotation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_pipeline_flags(p):
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--workers", type=int, default=0, help="override worker count")
        p.add_argument("--session", default=None, help="override session id")
        p.add_argument("--force", action="store_true", help="rerun even if inputs unchanged")

    p_synth = sub.add_parser("synth", help="generate a synthetic session")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--duration", type=float, default=180.0)
    p_synth.add_argument("--seed", type=int, default=1)
    p_synth.add_argument("--session", default=None)
    p_synth.set_defaults(fn=cmd_synth)

    for name, stages in [
        ("ingest", ["ingest"]),
        ("project", ["project"]),
        ("segment", ["segment"]),
        ("detect", ["detect"]),
        ("fuse", ["fuse"]),
        ("run", ["ingest", "project", "segment", "detect", "fuse"]),
    ]:
        p = sub.add_parser(name, help=f"run the {name} stage(s)")
        add_pipeline_flags(p)
        p.set_defaults(fn=lambda args, stages=stages: cmd_stage(args, stages))

    p_serve = sub.add_parser("serve", help="serve the review API")
    p_serve.add_argument("--root", required=True, help="directory containing session dirs")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.set_defaults(fn=cmd_serve)

    p_export = sub.add_parser("export", help="render the governance-filtered deliverable")
    add_pipeline_flags(p_export)
    p_export.add_argument("--view", default="erp", help="view stream to export")
    p_export.set_defaults(fn=cmd_export)

    p_report = sub.add_parser("report", help="savings model and session metrics")
    p_report.add_argument("--config", default=None)
    p_report.add_argument("--factors", default=None, help="comma-separated fractions")
    p_report.add_argument("--rtr-samples", default=None, help="comma-separated RTR values")
    p_report.add_argument("--seed", type=int, default=1234)
    p_report.add_argument("--resamples", type=int, default=10000)
    p_report.add_argument("--level", type=float, default=0.95)
    p_report.add_argument("--out", default=None, help="write report.json here")
    p_report.set_defaults(fn=cmd_report)

    p_val = sub.add_parser("validate", help="schema-check session artifacts")
    p_val.add_argument("--config", default=None)
    p_val.add_argument("--session-dir", default=None)
    p_val.set_defaults(fn=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
