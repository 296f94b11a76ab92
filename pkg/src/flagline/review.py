"""Review-by-exception session state: locks, audit chain, QA, finalize.

Edits are non-destructive: the pristine timeline is kept immutably and
every mutation appends a hash-chained audit record carrying the full
pre/post item state, so any pre-review state is recoverable from the
chain alone and any tampering breaks verification. All mutations for a
session are serialized under one lock (single writer); reads snapshot
under the same lock.
"""

from __future__ import annotations

import json
import math
import random
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import BUILD_ID
from .canonical import ZERO_DIGEST, canonical_json, digest_obj, read_jsonl, write_jsonl
from .fusion import SkipSpan, TimelineItem
from .ingest import fill_provenance, read_ledger, verify_ledger, write_ledger

RATIONALE_CODES = ("FP", "WRONG_EXTENT", "WRONG_CLASS", "POLICY_EXEMPT", "OTHER")
OPERATIONS = ("accept", "adjust", "override")
TERMINAL_STATUSES = ("accepted", "adjusted", "overridden")

LOCK_TIMEOUT_S = 900.0  # 15 min idle


class ReviewError(Exception):
    pass


class SessionUnknown(ReviewError):
    pass


class NotLocked(ReviewError):
    pass


class InvalidTransition(ReviewError):
    pass


class MissingRationale(ReviewError):
    pass


class NothingAccepted(ReviewError):
    pass


class NoPairs(ReviewError):
    pass


class PendingItemsRemain(ReviewError):
    pass


class QuestionnaireInvalid(ReviewError):
    pass


@dataclass
class ReviewerAction:
    timeline_id: str
    operation: str
    reviewer_id: str
    dwell_ms: int = 0
    new_t_start: float | None = None
    new_t_end: float | None = None
    new_geometry: dict | None = None
    new_action: str | None = None
    rationale_code: str | None = None

    @classmethod
    def from_json(cls, obj: dict) -> "ReviewerAction":
        # bounds normalized to float: JSON clients may send 94 for 94.0,
        # and canonical artifacts must not depend on that
        t0 = obj.get("new_t_start")
        t1 = obj.get("new_t_end")
        return cls(
            timeline_id=obj["timeline_id"],
            operation=obj["operation"],
            reviewer_id=obj["reviewer_id"],
            dwell_ms=int(obj.get("dwell_ms", 0)),
            new_t_start=float(t0) if t0 is not None else None,
            new_t_end=float(t1) if t1 is not None else None,
            new_geometry=obj.get("new_geometry"),
            new_action=obj.get("new_action"),
            rationale_code=obj.get("rationale_code"),
        )


def _iso(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


# ---------------------------------------------------------------------------
# audit chain
# ---------------------------------------------------------------------------

def make_audit_record(
    seq: int,
    timestamp: str,
    reviewer_id: str,
    pre_state: dict,
    post_state: dict,
    rationale_code: str | None,
    prev_record_digest: str,
) -> dict:
    record = {
        "seq": seq,
        "timestamp": timestamp,
        "reviewer_id": reviewer_id,
        "item_hash": digest_obj(pre_state),
        "pre_state": pre_state,
        "post_state": post_state,
        "rationale_code": rationale_code,
        "prev_record_digest": prev_record_digest,
    }
    record["record_digest"] = digest_obj(record)
    return record


def verify_audit_chain(records: list[dict]) -> tuple[bool, int | None]:
    """Returns (ok, first bad seq). Checks digests, linkage and seq order."""
    prev_digest = ZERO_DIGEST
    prev_seq = 0
    for record in records:
        body = {k: v for k, v in record.items() if k != "record_digest"}
        if record.get("prev_record_digest") != prev_digest:
            return False, record.get("seq")
        if digest_obj(body) != record.get("record_digest"):
            return False, record.get("seq")
        if body.get("item_hash") != digest_obj(body.get("pre_state", {})):
            return False, record.get("seq")
        if record.get("seq") != prev_seq + 1:
            return False, record.get("seq")
        prev_digest = record["record_digest"]
        prev_seq = record["seq"]
    return True, None


def replay_prestates(records: list[dict]) -> dict[str, dict]:
    """Original (pre-review) state of every item, from the chain alone."""
    firsts: dict[str, dict] = {}
    for record in records:
        pre = record.get("pre_state") or {}
        tid = pre.get("timeline_id")
        if tid and tid not in firsts:
            firsts[tid] = pre
    return firsts


# ---------------------------------------------------------------------------
# inter-annotator agreement
# ---------------------------------------------------------------------------

def compute_iaa(pairs: list[tuple[bool, bool]]) -> float:
    """Cohen's kappa over paired accept/reject judgments."""
    if not pairs:
        raise NoPairs("no paired judgments")
    n = len(pairs)
    po = sum(1 for a, b in pairs if a == b) / n
    pa = sum(1 for a, _ in pairs if a) / n
    pb = sum(1 for _, b in pairs if b) / n
    pe = pa * pb + (1 - pa) * (1 - pb)
    if pe == 1.0:
        return 1.0 if po == 1.0 else 0.0
    return (po - pe) / (1 - pe)


# ---------------------------------------------------------------------------
# questionnaire (metadata + compliance validation form)
# ---------------------------------------------------------------------------

METADATA_SECTIONS = ("domain", "activity", "specific_activity", "participants", "room", "lighting")
COMPLIANCE_SECTIONS = ("signal", "pii", "copyright", "minors", "nudity", "sensitive_topics")
PII_AUDIO_TYPES = (
    "full_names",
    "addresses",
    "phone_numbers",
    "email",
    "financial",
    "photographs",
    "ip_screen",
    "other",
)


def parse_mmss(value: str) -> int:
    parts = str(value).split(":")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise QuestionnaireInvalid(f"bad MM:SS value {value!r}")
    mm, ss = int(parts[0]), int(parts[1])
    if ss >= 60:
        raise QuestionnaireInvalid(f"bad MM:SS value {value!r}")
    return mm * 60 + ss


def _check_yes_no(section: dict, name: str) -> None:
    for channel in ("video", "audio"):
        if section.get(channel) not in ("yes", "no"):
            raise QuestionnaireInvalid(f"{name}.{channel} must be 'yes' or 'no'")


def validate_questionnaire(q: dict) -> None:
    meta = q.get("metadata") or {}
    comp = q.get("compliance") or {}
    for name in METADATA_SECTIONS:
        if name not in meta:
            raise QuestionnaireInvalid(f"metadata section {name!r} missing")
        _check_yes_no(meta[name], f"metadata.{name}")
    for name in COMPLIANCE_SECTIONS:
        if name not in comp:
            raise QuestionnaireInvalid(f"compliance section {name!r} missing")
        _check_yes_no(comp[name], f"compliance.{name}")

    pii = comp["pii"]
    if pii.get("audio") == "yes":
        types = pii.get("audio_pii_types") or []
        if not types:
            raise QuestionnaireInvalid("pii.audio=yes requires audio_pii_types")
        bad = [t for t in types if t not in PII_AUDIO_TYPES]
        if bad:
            raise QuestionnaireInvalid(f"unknown audio PII types {bad}")

    for name in ("minors", "nudity"):
        section = comp[name]
        if section.get("video") == "yes":
            interval = section.get("video_interval") or {}
            if "start" not in interval or "end" not in interval:
                raise QuestionnaireInvalid(f"{name}.video=yes requires a video_interval")
            start = parse_mmss(interval["start"])
            end = parse_mmss(interval["end"])
            if start > end:
                raise QuestionnaireInvalid(f"{name}.video_interval start > end")

    comments = q.get("comments") or {}
    for channel in ("video", "audio"):
        if channel in comments and not isinstance(comments[channel], str):
            raise QuestionnaireInvalid(f"comments.{channel} must be text")


# ---------------------------------------------------------------------------
# session
# ---------------------------------------------------------------------------

class ReviewSession:
    """Single-session review state over a fused timeline on disk."""

    def __init__(self, session_dir, clock=time.time, lock_timeout_s: float = LOCK_TIMEOUT_S):
        self.session_dir = Path(session_dir)
        timeline_path = self.session_dir / "timeline.jsonl"
        if not timeline_path.exists():
            raise SessionUnknown(f"no timeline in {session_dir}")
        self.clock = clock
        self.lock_timeout_s = lock_timeout_s
        self._mutate = threading.RLock()

        self.originals: dict[str, TimelineItem] = {}
        self.items: dict[str, TimelineItem] = {}
        for row in read_jsonl(timeline_path):
            item = TimelineItem.from_json(row)
            self.originals[item.timeline_id] = item
            self.items[item.timeline_id] = TimelineItem.from_json(row)

        self.skips: list[SkipSpan] = []
        skips_path = self.session_dir / "skips.jsonl"
        if skips_path.exists():
            self.skips = [SkipSpan(**row) for row in read_jsonl(skips_path)]

        self.review_dir = self.session_dir / "review"
        self.review_dir.mkdir(exist_ok=True)
        self.audit_path = self.review_dir / "audit.jsonl"
        self.audit: list[dict] = list(read_jsonl(self.audit_path)) if self.audit_path.exists() else []

        self.locks: dict[str, tuple[str, float]] = {}
        self.dwell_ms: dict[str, dict[str, int]] = {"review": {}, "qa": {}}
        self.overrides: dict[str, dict] = {}
        self.qa_sample: list[str] = []
        self.qa_verdicts: dict[str, bool] = {}
        self.finalized = False
        self._since_snapshot = 0
        self._load_state()

    # -- persistence --------------------------------------------------------
    #
    # The audit chain is the durable record; the state file is a snapshot
    # taken every SNAPSHOT_INTERVAL mutations (and at QA/finalize). On
    # load, audit records past the snapshot are replayed from their
    # post_states, which is the same replay property the chain guarantees.

    SNAPSHOT_INTERVAL = 25

    def _state_path(self) -> Path:
        return self.review_dir / "review_state.json"

    def _load_state(self) -> None:
        path = self._state_path()
        snapshot_seq = 0
        if path.exists():
            state = json.loads(path.read_text(encoding="utf-8"))
            for tid, row in state.get("items", {}).items():
                self.items[tid] = TimelineItem.from_json(row)
            self.dwell_ms = state.get("dwell_ms", self.dwell_ms)
            self.overrides = state.get("overrides", {})
            self.qa_sample = state.get("qa_sample", [])
            self.qa_verdicts = {k: bool(v) for k, v in state.get("qa_verdicts", {}).items()}
            self.finalized = state.get("finalized", False)
            snapshot_seq = state.get("audit_seq", 0)
        for record in self.audit[snapshot_seq:]:
            self._replay_record(record)

    def _replay_record(self, record: dict) -> None:
        post = record.get("post_state") or {}
        tid = post.get("timeline_id")
        if tid and tid in self.items and "status" in post:
            self.items[tid] = TimelineItem.from_json(post)
            if post["status"] == "overridden":
                self.overrides[tid] = {
                    "rationale_code": record.get("rationale_code"),
                    "new_action": post.get("suggested_action"),
                    "reviewer_id": record.get("reviewer_id"),
                }
        elif post.get("event") == "qa_draw":
            self.qa_sample = list(post.get("sample", []))
        elif post.get("event") == "finalized":
            self.finalized = True

    def _save_state(self, force: bool = False) -> None:
        self._since_snapshot += 1
        if not force and self._since_snapshot < self.SNAPSHOT_INTERVAL:
            return
        self._since_snapshot = 0
        state = {
            "items": {tid: item.to_json() for tid, item in self.items.items()},
            "dwell_ms": self.dwell_ms,
            "overrides": self.overrides,
            "qa_sample": self.qa_sample,
            "qa_verdicts": self.qa_verdicts,
            "finalized": self.finalized,
            "audit_seq": len(self.audit),
        }
        self._state_path().write_text(canonical_json(state), encoding="utf-8")

    def _append_audit(self, reviewer_id: str, pre: dict, post: dict, rationale: str | None) -> dict:
        prev = self.audit[-1]["record_digest"] if self.audit else ZERO_DIGEST
        record = make_audit_record(
            seq=len(self.audit) + 1,
            timestamp=_iso(self.clock()),
            reviewer_id=reviewer_id,
            pre_state=pre,
            post_state=post,
            rationale_code=rationale,
            prev_record_digest=prev,
        )
        self.audit.append(record)
        with open(self.audit_path, "a", encoding="utf-8") as fh:
            fh.write(canonical_json(record))
            fh.write("\n")
        return record

    # -- locks ----------------------------------------------------------------

    def _prune_locks(self) -> None:
        now = self.clock()
        for tid, (reviewer, acquired) in list(self.locks.items()):
            if now - acquired > self.lock_timeout_s:
                del self.locks[tid]
                self._append_audit(
                    reviewer_id="system",
                    pre={"timeline_id": tid, "event": "lock_held", "holder": reviewer},
                    post={"timeline_id": tid, "event": "lock_expired"},
                    rationale=None,
                )

    def _intersects_skip(self, item: TimelineItem) -> bool:
        return any(item.t_start < s.t_end and item.t_end > s.t_start for s in self.skips)

    # -- operations -------------------------------------------------------------

    def next_item(self, reviewer_id: str) -> TimelineItem | None:
        """Lowest-rank reviewable item, locked to the caller; None when done."""
        with self._mutate:
            self._prune_locks()
            candidates = [
                i
                for i in self.items.values()
                if i.status in ("pending", "adjudication")
                and i.timeline_id not in self.locks
                and not self._intersects_skip(i)
            ]
            if not candidates:
                return None
            candidates.sort(key=lambda i: (i.status != "pending", i.priority_rank))
            item = candidates[0]
            self.locks[item.timeline_id] = (reviewer_id, self.clock())
            return item

    def release(self, timeline_id: str, reviewer_id: str) -> None:
        with self._mutate:
            held = self.locks.get(timeline_id)
            if held and held[0] == reviewer_id:
                del self.locks[timeline_id]

    def apply_action(self, action: ReviewerAction) -> dict:
        """Apply one atomic reviewer operation; returns the audit record."""
        with self._mutate:
            self._prune_locks()
            if action.timeline_id not in self.items:
                raise SessionUnknown(f"unknown item {action.timeline_id}")
            held = self.locks.get(action.timeline_id)
            if held is None or held[0] != action.reviewer_id:
                raise NotLocked(f"{action.timeline_id} not locked by {action.reviewer_id}")
            item = self.items[action.timeline_id]
            if item.status not in ("pending", "adjudication"):
                raise InvalidTransition(f"{action.timeline_id} already {item.status}")
            if action.operation not in OPERATIONS:
                raise InvalidTransition(f"unknown operation {action.operation!r}")

            pre = item.to_json()
            if action.operation == "accept":
                item.status = "accepted"
            elif action.operation == "adjust":
                changed = False
                if action.new_t_start is not None and action.new_t_start != item.t_start:
                    item.t_start = action.new_t_start
                    changed = True
                if action.new_t_end is not None and action.new_t_end != item.t_end:
                    item.t_end = action.new_t_end
                    changed = True
                if action.new_geometry is not None and action.new_geometry != item.geometry:
                    item.geometry = action.new_geometry
                    changed = True
                if not changed:
                    raise InvalidTransition("adjust must change bounds or geometry")
                if item.t_start > item.t_end:
                    item.t_start, item.t_end = pre["t_start"], pre["t_end"]
                    raise InvalidTransition("adjusted bounds invert")
                item.status = "adjusted"
            else:  # override
                if not action.rationale_code:
                    raise MissingRationale("override requires a rationale_code")
                if action.rationale_code not in RATIONALE_CODES:
                    raise MissingRationale(f"unknown rationale_code {action.rationale_code!r}")
                if action.new_action is None:
                    raise InvalidTransition("override requires new_action")
                item.suggested_action = action.new_action
                item.status = "overridden"
                self.overrides[item.timeline_id] = {
                    "rationale_code": action.rationale_code,
                    "new_action": action.new_action,
                    "reviewer_id": action.reviewer_id,
                }

            phase = "qa" if action.timeline_id in self.qa_sample and pre["status"] == "adjudication" else "review"
            bucket = self.dwell_ms[phase]
            bucket[action.timeline_id] = bucket.get(action.timeline_id, 0) + max(0, action.dwell_ms)

            del self.locks[action.timeline_id]
            record = self._append_audit(
                reviewer_id=action.reviewer_id,
                pre=pre,
                post=item.to_json(),
                rationale=action.rationale_code,
            )
            self._save_state()
            return record

    # -- QA --------------------------------------------------------------------

    def draw_qa_sample(self, fraction: float = 0.10, seed: int = 0, reviewer_id: str = "qa") -> list[str]:
        with self._mutate:
            accepted = sorted(
                tid for tid, item in self.items.items() if item.status == "accepted"
            )
            if not accepted:
                raise NothingAccepted("no accepted items to sample")
            k = math.ceil(fraction * len(accepted))
            rng = random.Random(seed)
            sample = sorted(rng.sample(accepted, k))
            self.qa_sample = sample
            self._append_audit(
                reviewer_id=reviewer_id,
                pre={"event": "qa_draw", "fraction": fraction, "seed": seed},
                post={"event": "qa_draw", "sample": sample},
                rationale=None,
            )
            self._save_state(force=True)
            return sample

    def record_qa_verdict(self, timeline_id: str, reviewer_id: str, agree: bool, dwell_ms: int = 0) -> None:
        with self._mutate:
            if timeline_id not in self.qa_sample:
                raise ReviewError(f"{timeline_id} not in the QA sample")
            item = self.items[timeline_id]
            self.qa_verdicts[timeline_id] = agree
            bucket = self.dwell_ms["qa"]
            bucket[timeline_id] = bucket.get(timeline_id, 0) + max(0, dwell_ms)
            if not agree:
                pre = item.to_json()
                item.status = "adjudication"
                self._append_audit(
                    reviewer_id=reviewer_id,
                    pre=pre,
                    post=item.to_json(),
                    rationale=None,
                )
            self._save_state(force=True)

    def qa_agreement_pairs(self) -> list[tuple[bool, bool]]:
        # first judgment was an accept by construction of the sample
        return [(True, verdict) for _, verdict in sorted(self.qa_verdicts.items())]

    # -- metrics hooks ------------------------------------------------------------

    def t_hitl_seconds(self) -> float:
        """Review dwell only; QA revisits are accounted separately."""
        return sum(self.dwell_ms["review"].values()) / 1000.0

    def threshold_nudges(self, thresholds: dict | None = None) -> dict:
        """Per-class override/FP rates with a recommended threshold bump."""
        thresholds = thresholds or {}
        per_class: dict[str, dict] = {}
        for item in self.items.values():
            stats = per_class.setdefault(
                item.cls,
                {"reviewed": 0, "overridden": 0, "fp_overrides": 0},
            )
            if item.status in TERMINAL_STATUSES:
                stats["reviewed"] += 1
            if item.status == "overridden":
                stats["overridden"] += 1
                if self.overrides.get(item.timeline_id, {}).get("rationale_code") == "FP":
                    stats["fp_overrides"] += 1
        report = {}
        for cls, stats in sorted(per_class.items()):
            reviewed = stats["reviewed"]
            fp_rate = stats["fp_overrides"] / reviewed if reviewed else 0.0
            current = thresholds.get(cls, 0.5)
            report[cls] = {
                **stats,
                "fp_rate": fp_rate,
                "current_threshold": current,
                "recommended_threshold": round(min(0.9, current + 0.5 * fp_rate * (1 - current)), 4),
            }
        return report

    # -- finalize -------------------------------------------------------------------

    def finalize(self, questionnaire: dict) -> dict:
        with self._mutate:
            open_items = [
                tid for tid, i in self.items.items() if i.status in ("pending", "adjudication")
            ]
            if open_items:
                raise PendingItemsRemain(f"items not finished: {sorted(open_items)}")
            validate_questionnaire(questionnaire)

            rows = []
            for item in sorted(self.items.values(), key=lambda i: i.priority_rank):
                row = item.to_json()
                row["disposition"] = item.status
                override = self.overrides.get(item.timeline_id)
                row["rationale_code"] = override["rationale_code"] if override else None
                row["action"] = item.suggested_action
                del row["status"]
                rows.append(row)
            write_jsonl(self.session_dir / "final_labels.jsonl", rows)
            (self.review_dir / "questionnaire.json").write_text(
                canonical_json(questionnaire), encoding="utf-8"
            )

            reviewers = sorted(
                {r["reviewer_id"] for r in self.audit if r["reviewer_id"] not in ("system",)}
            )
            ledger_path = self.session_dir / "ledger.json"
            if ledger_path.exists():
                ledger = read_ledger(ledger_path)
                policy_path = self.session_dir / "policy.json"
                thresholds = {}
                if policy_path.exists():
                    thresholds = json.loads(policy_path.read_text(encoding="utf-8")).get(
                        "thresholds", {}
                    )
                fill_provenance(
                    ledger,
                    "review",
                    BUILD_ID,
                    {"reviewer_ids": reviewers, "thresholds": thresholds},
                )
                assert verify_ledger(ledger)
                write_ledger(ledger_path, ledger)

            self.finalized = True
            self._append_audit(
                reviewer_id="system",
                pre={"event": "finalize", "items": len(self.items)},
                post={"event": "finalized", "reviewers": reviewers},
                rationale=None,
            )
            self._save_state(force=True)
            return {"final_labels": len(rows), "reviewers": reviewers}
