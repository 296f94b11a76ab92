import json

import pytest

from flagline.canonical import digest_obj, read_jsonl, write_jsonl
from flagline.fusion import FusionPolicy, TimelineItem
from flagline.review import (
    InvalidTransition,
    MissingRationale,
    NoPairs,
    NotLocked,
    NothingAccepted,
    PendingItemsRemain,
    QuestionnaireInvalid,
    ReviewSession,
    ReviewerAction,
    compute_iaa,
    parse_mmss,
    replay_prestates,
    validate_questionnaire,
    verify_audit_chain,
)


class FakeClock:
    def __init__(self, start=1_700_000_000.0):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, s):
        self.now += s


def make_item(tid, cls, t0, t1, rank, action="none"):
    return TimelineItem(
        timeline_id=tid,
        cls=cls,
        t_start=t0,
        t_end=t1,
        confidence=0.9,
        evidence_refs=[f"{tid}:ev"],
        views=["erp"],
        suggested_action=action,
        priority_rank=rank,
    )


def make_session(tmp_path, items=None, skips=None):
    session_dir = tmp_path / "session"
    session_dir.mkdir(exist_ok=True)
    if items is None:
        items = [
            make_item("tl_00001", "nsfw", 100, 110, 1, "withhold"),
            make_item("tl_00002", "pii", 5, 8, 2, "mute"),
            make_item("tl_00003", "activity_tag", 30, 50, 3),
        ]
    write_jsonl(session_dir / "timeline.jsonl", [i.to_json() for i in items])
    write_jsonl(session_dir / "skips.jsonl", [s for s in (skips or [])])
    clock = FakeClock()
    return ReviewSession(session_dir, clock=clock), clock, session_dir


VALID_QUESTIONNAIRE = {
    "metadata": {
        name: {"video": "no", "audio": "no"}
        for name in ("domain", "activity", "specific_activity", "participants", "room", "lighting")
    },
    "compliance": {
        "signal": {"video": "no", "audio": "no"},
        "pii": {"video": "no", "audio": "no"},
        "copyright": {"video": "no", "audio": "no"},
        "minors": {"video": "no", "audio": "no"},
        "nudity": {"video": "no", "audio": "no"},
        "sensitive_topics": {"video": "no", "audio": "no"},
    },
    "comments": {"video": "", "audio": ""},
}


def accept_all(session, reviewer="r1"):
    while True:
        item = session.next_item(reviewer)
        if item is None:
            break
        session.apply_action(
            ReviewerAction(item.timeline_id, "accept", reviewer, dwell_ms=1000)
        )


# --- next_item -----------------------------------------------------------------

def test_priority_and_locking(tmp_path):
    session, _, _ = make_session(tmp_path)
    first = session.next_item("r1")
    assert first.cls == "nsfw"  # later in time, earlier in priority
    second = session.next_item("r2")
    assert second.cls == "pii"
    assert first.timeline_id != second.timeline_id


def test_next_item_done_when_all_terminal(tmp_path):
    session, _, _ = make_session(tmp_path)
    accept_all(session)
    assert session.next_item("r1") is None


def test_next_item_skips_skipspan_items(tmp_path):
    items = [
        make_item("tl_00001", "activity_tag", 10, 20, 1),
        make_item("tl_00002", "activity_tag", 100, 110, 2),
    ]
    skips = [{"t_start": 5.0, "t_end": 25.0, "reason": "idle"}]
    session, _, _ = make_session(tmp_path, items=items, skips=skips)
    got = session.next_item("r1")
    assert got.timeline_id == "tl_00002"


def test_lock_expiry_emits_audit_and_releases(tmp_path):
    session, clock, _ = make_session(tmp_path)
    first = session.next_item("r1")
    clock.advance(901)
    again = session.next_item("r2")
    assert again.timeline_id == first.timeline_id
    expiry = [r for r in session.audit if r["post_state"].get("event") == "lock_expired"]
    assert len(expiry) == 1


# --- apply_action ---------------------------------------------------------------

def test_accept_increments_audit_seq(tmp_path):
    session, _, _ = make_session(tmp_path)
    item = session.next_item("r1")
    before = len(session.audit)
    record = session.apply_action(ReviewerAction(item.timeline_id, "accept", "r1", dwell_ms=1500))
    assert record["seq"] == before + 1
    assert session.items[item.timeline_id].status == "accepted"
    assert session.t_hitl_seconds() == 1.5


def test_requires_lock(tmp_path):
    session, _, _ = make_session(tmp_path)
    with pytest.raises(NotLocked):
        session.apply_action(ReviewerAction("tl_00001", "accept", "r1"))
    session.next_item("r1")
    with pytest.raises(NotLocked):
        session.apply_action(ReviewerAction("tl_00001", "accept", "r2"))


def test_noop_adjust_rejected(tmp_path):
    session, _, _ = make_session(tmp_path)
    item = session.next_item("r1")
    with pytest.raises(InvalidTransition):
        session.apply_action(
            ReviewerAction(
                item.timeline_id, "adjust", "r1",
                new_t_start=item.t_start, new_t_end=item.t_end,
            )
        )


def test_adjust_changes_bounds_preserves_original(tmp_path):
    session, _, _ = make_session(tmp_path)
    item = session.next_item("r1")
    session.apply_action(
        ReviewerAction(item.timeline_id, "adjust", "r1", new_t_start=99.0, new_t_end=111.0)
    )
    assert session.items[item.timeline_id].status == "adjusted"
    assert session.items[item.timeline_id].t_start == 99.0
    assert session.originals[item.timeline_id].t_start == 100.0


def test_override_requires_rationale(tmp_path):
    session, _, _ = make_session(tmp_path)
    item = session.next_item("r1")
    with pytest.raises(MissingRationale):
        session.apply_action(
            ReviewerAction(item.timeline_id, "override", "r1", new_action="none")
        )
    record = session.apply_action(
        ReviewerAction(item.timeline_id, "override", "r1", new_action="none", rationale_code="FP")
    )
    assert record["rationale_code"] == "FP"
    assert session.items[item.timeline_id].status == "overridden"


def test_double_review_rejected(tmp_path):
    session, _, _ = make_session(tmp_path)
    item = session.next_item("r1")
    session.apply_action(ReviewerAction(item.timeline_id, "accept", "r1"))
    session.locks[item.timeline_id] = ("r1", session.clock())
    with pytest.raises(InvalidTransition):
        session.apply_action(ReviewerAction(item.timeline_id, "accept", "r1"))


# --- audit chain -------------------------------------------------------------------

def test_audit_chain_verifies_and_detects_tamper(tmp_path):
    session, _, session_dir = make_session(tmp_path)
    accept_all(session)
    records = list(read_jsonl(session_dir / "review" / "audit.jsonl"))
    ok, bad = verify_audit_chain(records)
    assert ok and bad is None

    tampered = json.loads(json.dumps(records))
    tampered[1]["pre_state"]["t_start"] = 0.123
    ok, bad = verify_audit_chain(tampered)
    assert not ok
    assert bad == tampered[1]["seq"]


def test_replay_reconstructs_prestates(tmp_path):
    session, _, _ = make_session(tmp_path)
    item = session.next_item("r1")
    session.apply_action(
        ReviewerAction(item.timeline_id, "adjust", "r1", new_t_start=90.0, new_t_end=112.0)
    )
    firsts = replay_prestates(session.audit)
    assert firsts[item.timeline_id]["t_start"] == 100.0
    assert firsts[item.timeline_id]["status"] == "pending"


# --- QA ------------------------------------------------------------------------------

def test_qa_sample_deterministic_and_flips_to_adjudication(tmp_path):
    items = [make_item(f"tl_{i:05d}", "activity_tag", i * 10, i * 10 + 5, i + 1) for i in range(10)]
    session, _, _ = make_session(tmp_path, items=items)
    accept_all(session)
    sample = session.draw_qa_sample(fraction=0.10, seed=7)
    assert len(sample) == 1
    assert session.draw_qa_sample(fraction=0.10, seed=7) == sample

    session.record_qa_verdict(sample[0], "r2", agree=False, dwell_ms=500)
    assert session.items[sample[0]].status == "adjudication"
    assert session.dwell_ms["qa"][sample[0]] == 500
    # QA dwell does not leak into T_HITL
    assert session.t_hitl_seconds() == len(items) * 1.0


def test_qa_requires_accepted(tmp_path):
    session, _, _ = make_session(tmp_path)
    with pytest.raises(NothingAccepted):
        session.draw_qa_sample()


# --- kappa ---------------------------------------------------------------------------

def test_kappa_perfect_and_chance():
    assert compute_iaa([(True, True)] * 10 + [(False, False)] * 10) == 1.0
    # po = pe exactly -> 0
    pairs = [(True, True), (True, False), (False, True), (False, False)]
    assert compute_iaa(pairs) == pytest.approx(0.0)


def test_kappa_contingency_table():
    pairs = (
        [(True, True)] * 20 + [(True, False)] * 5 + [(False, True)] * 10 + [(False, False)] * 15
    )
    assert compute_iaa(pairs) == pytest.approx(0.4)


def test_kappa_no_pairs():
    with pytest.raises(NoPairs):
        compute_iaa([])


# --- questionnaire ----------------------------------------------------------------------

def test_questionnaire_valid():
    validate_questionnaire(VALID_QUESTIONNAIRE)


def test_questionnaire_minors_interval_required():
    q = json.loads(json.dumps(VALID_QUESTIONNAIRE))
    q["compliance"]["minors"]["video"] = "yes"
    with pytest.raises(QuestionnaireInvalid):
        validate_questionnaire(q)
    q["compliance"]["minors"]["video_interval"] = {"start": "01:30", "end": "02:15"}
    validate_questionnaire(q)
    q["compliance"]["minors"]["video_interval"] = {"start": "02:30", "end": "01:15"}
    with pytest.raises(QuestionnaireInvalid):
        validate_questionnaire(q)


def test_questionnaire_pii_types_required():
    q = json.loads(json.dumps(VALID_QUESTIONNAIRE))
    q["compliance"]["pii"]["audio"] = "yes"
    with pytest.raises(QuestionnaireInvalid):
        validate_questionnaire(q)
    q["compliance"]["pii"]["audio_pii_types"] = ["phone_numbers", "email"]
    validate_questionnaire(q)


def test_parse_mmss():
    assert parse_mmss("02:30") == 150
    with pytest.raises(QuestionnaireInvalid):
        parse_mmss("2.30")
    with pytest.raises(QuestionnaireInvalid):
        parse_mmss("00:61")


# --- finalize ------------------------------------------------------------------------------

def test_finalize_blocked_by_pending(tmp_path):
    session, _, _ = make_session(tmp_path)
    with pytest.raises(PendingItemsRemain):
        session.finalize(VALID_QUESTIONNAIRE)


def test_finalize_writes_labels_with_override_recorded(tmp_path):
    items = [
        make_item("tl_00001", "nsfw", 100, 110, 1, "withhold"),
        make_item("tl_00002", "pii", 5, 8, 2, "mute"),
        make_item("tl_00003", "minor_risk", 30, 40, 3, "blur_and_review"),
        make_item("tl_00004", "pii", 200, 205, 4, "mute"),
    ]
    session, _, session_dir = make_session(tmp_path, items=items)
    # override the top item to none, accept the other three
    item = session.next_item("r1")
    session.apply_action(
        ReviewerAction(item.timeline_id, "override", "r1", new_action="none", rationale_code="FP")
    )
    accept_all(session)
    summary = session.finalize(VALID_QUESTIONNAIRE)
    assert summary["final_labels"] == 4
    rows = list(read_jsonl(session_dir / "final_labels.jsonl"))
    overridden = [r for r in rows if r["disposition"] == "overridden"]
    assert len(overridden) == 1
    assert overridden[0]["action"] == "none"
    assert overridden[0]["rationale_code"] == "FP"
    actionable = [r for r in rows if r["action"] != "none"]
    assert len(actionable) == 3
    ok, _ = verify_audit_chain(session.audit)
    assert ok
