"""Schema conformance checks for every session artifact.

``validate_artifacts`` walks a session directory, checks each JSONL row
against its schema, recomputes the ledger digest and the audit hash
chain, and returns a violation report (file, line, message). The CLI
``validate`` subcommand exits nonzero when the report is non-empty.
"""

from __future__ import annotations

import json
from pathlib import Path

from .detectors.contract import EVIDENCE_CLASSES, SUGGESTED_ACTIONS, EvidenceItem
from .ingest import read_ledger, verify_ledger
from .review import verify_audit_chain

VIEWS = ("erp", "front", "right", "back", "left")
SKIP_REASONS = ("idle", "black", "silent")
STATUSES = ("pending", "accepted", "adjusted", "overridden", "adjudication")


def _jsonl_rows(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line), None
            except json.JSONDecodeError as exc:
                yield lineno, None, str(exc)


def _require_fields(row: dict, fields: tuple[str, ...]) -> str | None:
    missing = [f for f in fields if f not in row]
    if missing:
        return f"missing fields {missing}"
    return None


def check_clip_row(row: dict) -> str | None:
    err = _require_fields(row, ("clip_id", "view", "t_start", "t_end", "fps", "resolution", "lens", "descriptors"))
    if err:
        return err
    if row["view"] not in VIEWS:
        return f"bad view {row['view']!r}"
    if row["t_end"] <= row["t_start"]:
        return "t_end must exceed t_start"
    if row["lens"] not in ("rectilinear", "fisheye"):
        return f"bad lens {row['lens']!r}"
    d = row["descriptors"]
    if "black_ratio" in d and not (0.0 <= d["black_ratio"] <= 1.0):
        return f"black_ratio {d['black_ratio']} outside [0,1]"
    if "motion_energy" in d and not (0.0 <= d["motion_energy"] <= 1.0):
        return f"motion_energy {d['motion_energy']} outside [0,1]"
    return None


def check_evidence_row(row: dict) -> str | None:
    try:
        EvidenceItem.from_json(row)
    except Exception as exc:
        return str(exc)
    return None


def check_timeline_row(row: dict) -> str | None:
    err = _require_fields(
        row,
        ("timeline_id", "class", "t_start", "t_end", "confidence", "evidence_refs", "views", "suggested_action", "priority_rank", "status"),
    )
    if err:
        return err
    if row["class"] not in EVIDENCE_CLASSES:
        return f"bad class {row['class']!r}"
    if row["t_end"] < row["t_start"]:
        return "span inverted"
    if not row["evidence_refs"]:
        return "evidence_refs empty"
    if row["suggested_action"] not in SUGGESTED_ACTIONS:
        return f"bad action {row['suggested_action']!r}"
    if row["status"] not in STATUSES:
        return f"bad status {row['status']!r}"
    return None


def check_skip_row(row: dict) -> str | None:
    err = _require_fields(row, ("t_start", "t_end", "reason"))
    if err:
        return err
    if row["reason"] not in SKIP_REASONS:
        return f"bad reason {row['reason']!r}"
    if row["t_end"] <= row["t_start"]:
        return "span inverted"
    return None


def check_final_label_row(row: dict) -> str | None:
    err = _require_fields(row, ("timeline_id", "class", "t_start", "t_end", "action", "disposition"))
    if err:
        return err
    if row["disposition"] not in ("accepted", "adjusted", "overridden"):
        return f"bad disposition {row['disposition']!r}"
    if row["action"] not in SUGGESTED_ACTIONS:
        return f"bad action {row['action']!r}"
    return None


def check_review_log_row(row: dict) -> str | None:
    err = _require_fields(row, ("session_id", "reviewer_id", "event", "t_wall"))
    if err:
        return err
    if row["event"] not in ("play", "pause", "seek", "idle", "action"):
        return f"bad event {row['event']!r}"
    return None


EVIDENCE_FILE_NAMES = (
    "caption.jsonl",
    "tags.jsonl",
    "nsfw.jsonl",
    "age.jsonl",
    "pii.jsonl",
    "persons.jsonl",
    "motion.jsonl",
    "claps.jsonl",
)


def validate_artifacts(session_dir) -> dict:
    """Validate every artifact found; returns {'violations': [...], 'checked': [...]}."""
    session_dir = Path(session_dir)
    violations: list[dict] = []
    checked: list[str] = []

    def add(file, line, message):
        violations.append({"file": str(file), "line": line, "message": message})

    def check_file(rel: str, checker) -> None:
        path = session_dir / rel
        if not path.exists():
            return
        checked.append(rel)
        for lineno, row, parse_err in _jsonl_rows(path):
            if parse_err:
                add(rel, lineno, f"invalid JSON: {parse_err}")
                continue
            err = checker(row)
            if err:
                add(rel, lineno, err)

    check_file("clips.jsonl", check_clip_row)
    check_file("timeline.jsonl", check_timeline_row)
    check_file("skips.jsonl", check_skip_row)
    check_file("final_labels.jsonl", check_final_label_row)
    check_file("review/review_log.jsonl", check_review_log_row)
    for name in EVIDENCE_FILE_NAMES:
        check_file(f"detect/{name}", check_evidence_row)

    ledger_path = session_dir / "ledger.json"
    if ledger_path.exists():
        checked.append("ledger.json")
        try:
            ledger = read_ledger(ledger_path)
            if not verify_ledger(ledger):
                add("ledger.json", None, "ledger digest mismatch")
        except (OSError, json.JSONDecodeError) as exc:
            add("ledger.json", None, f"unreadable: {exc}")

    audit_path = session_dir / "review" / "audit.jsonl"
    if audit_path.exists():
        checked.append("review/audit.jsonl")
        records = []
        for lineno, row, parse_err in _jsonl_rows(audit_path):
            if parse_err:
                add("review/audit.jsonl", lineno, f"invalid JSON: {parse_err}")
            else:
                records.append(row)
        ok, bad_seq = verify_audit_chain(records)
        if not ok:
            add("review/audit.jsonl", bad_seq, f"audit chain broken at seq {bad_seq}")

    # cross-checks: governance flags never intersect skips
    timeline_path = session_dir / "timeline.jsonl"
    skips_path = session_dir / "skips.jsonl"
    if timeline_path.exists() and skips_path.exists():
        governance = []
        for _, row, err in _jsonl_rows(timeline_path):
            if row and row.get("class") in ("pii", "minor_risk", "nsfw"):
                governance.append(row)
        for lineno, skip, err in _jsonl_rows(skips_path):
            if not skip:
                continue
            for g in governance:
                if g["t_start"] < skip["t_end"] and g["t_end"] > skip["t_start"]:
                    add("skips.jsonl", lineno, f"skip intersects governance item {g['timeline_id']}")

    return {"violations": violations, "checked": checked}
