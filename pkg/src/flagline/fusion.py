"""Fuse heterogeneous detector evidence into a prioritized session timeline.

Evidence lands in clip-relative time, gets mapped to session time, is
threshold-filtered (sub-threshold rows are retained for the shadow
file, never deleted), gap-merged per class and view, deduplicated
across views by time-IoU, and ranked by class priority then start time.
Low-salience regions become skip spans only after every timeline item's
span is subtracted, so nothing reviewable is ever hidden and governance
flags in particular can never intersect a skip.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .detectors.contract import EvidenceItem

GOVERNANCE_CLASSES = ("pii", "minor_risk", "nsfw")

# classes promoted to reviewable timeline items, highest priority first;
# other evidence (captions, person tracks, clap anchors) stays context
DEFAULT_PRIORITY = [
    "nsfw",
    "minor_risk",
    "pii",
    "activity_tag",
    "scene_change",
    "high_motion",
    "idle",
]

DEFAULT_THRESHOLDS = {
    "nsfw": 0.25,
    "minor_risk": 0.25,
    "pii": 0.25,
}
DEFAULT_THRESHOLD = 0.5

DEFAULT_ACTIONS = {
    "minor_risk": "blur_and_review",
    "nsfw": "withhold",
    "pii": "mute",  # the "mute window" plan in action-enum vocabulary
}


class FusionError(Exception):
    pass


class UnknownClip(FusionError):
    pass


class SchemaViolation(FusionError):
    pass


@dataclass
class FusionPolicy:
    thresholds: dict = field(default_factory=dict)
    gap_tolerance: float = 0.5
    class_priority: list = field(default_factory=lambda: list(DEFAULT_PRIORITY))
    default_actions: dict = field(default_factory=lambda: dict(DEFAULT_ACTIONS))
    autoskip_enabled: bool = True
    autoskip_motion_max: float = 0.01
    autoskip_loudness_max: float = -60.0
    autoskip_black_min: float = 0.9
    skip_min_len: float = 5.0
    cross_view_iou: float = 0.5

    def threshold_for(self, cls: str) -> float:
        if cls in self.thresholds:
            return self.thresholds[cls]
        return DEFAULT_THRESHOLDS.get(cls, DEFAULT_THRESHOLD)

    def rank_of(self, cls: str) -> int:
        try:
            return self.class_priority.index(cls)
        except ValueError:
            return len(self.class_priority)

    def promotes(self, cls: str) -> bool:
        return cls in self.class_priority

    def to_json(self) -> dict:
        return {
            "thresholds": dict(self.thresholds),
            "gap_tolerance": self.gap_tolerance,
            "class_priority": list(self.class_priority),
            "default_actions": dict(self.default_actions),
            "autoskip_enabled": self.autoskip_enabled,
            "autoskip_motion_max": self.autoskip_motion_max,
            "autoskip_loudness_max": self.autoskip_loudness_max,
            "autoskip_black_min": self.autoskip_black_min,
            "skip_min_len": self.skip_min_len,
            "cross_view_iou": self.cross_view_iou,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FusionPolicy":
        return cls(**obj)


@dataclass
class TimelineItem:
    timeline_id: str
    cls: str
    t_start: float
    t_end: float
    confidence: float
    evidence_refs: list
    views: list
    suggested_action: str
    priority_rank: int
    status: str = "pending"
    geometry: dict | None = None

    def to_json(self) -> dict:
        return {
            "timeline_id": self.timeline_id,
            "class": self.cls,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "confidence": self.confidence,
            "evidence_refs": list(self.evidence_refs),
            "views": list(self.views),
            "suggested_action": self.suggested_action,
            "priority_rank": self.priority_rank,
            "status": self.status,
            "geometry": self.geometry,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TimelineItem":
        return cls(
            timeline_id=obj["timeline_id"],
            cls=obj["class"],
            t_start=obj["t_start"],
            t_end=obj["t_end"],
            confidence=obj["confidence"],
            evidence_refs=list(obj["evidence_refs"]),
            views=list(obj["views"]),
            suggested_action=obj["suggested_action"],
            priority_rank=obj["priority_rank"],
            status=obj.get("status", "pending"),
            geometry=obj.get("geometry"),
        )


@dataclass
class SkipSpan:
    t_start: float
    t_end: float
    reason: str  # idle | black | silent

    def to_json(self) -> dict:
        return {"t_start": self.t_start, "t_end": self.t_end, "reason": self.reason}


# ---------------------------------------------------------------------------
# interval helpers
# ---------------------------------------------------------------------------

def merge_intervals(intervals: list[tuple[float, float]], gap: float = 0.0) -> list[tuple[float, float]]:
    if not intervals:
        return []
    ordered = sorted(intervals)
    merged = [list(ordered[0])]
    for a, b in ordered[1:]:
        if a - merged[-1][1] <= gap:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged]


def subtract_intervals(
    base: list[tuple[float, float]], cuts: list[tuple[float, float]]
) -> list[tuple[float, float]]:
    result = []
    for a, b in merge_intervals(base):
        pieces = [(a, b)]
        for c0, c1 in merge_intervals(cuts):
            next_pieces = []
            for p0, p1 in pieces:
                if c1 <= p0 or c0 >= p1:
                    next_pieces.append((p0, p1))
                    continue
                if c0 > p0:
                    next_pieces.append((p0, c0))
                if c1 < p1:
                    next_pieces.append((c1, p1))
            pieces = next_pieces
        result.extend(pieces)
    return sorted(p for p in result if p[1] > p[0])


def interval_union_length(intervals: list[tuple[float, float]]) -> float:
    return sum(b - a for a, b in merge_intervals(intervals))


def time_iou(a: tuple[float, float], b: tuple[float, float]) -> float:
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    if union <= 0.0:
        return 1.0 if a == b else 0.0
    return inter / union


# ---------------------------------------------------------------------------
# fusion steps
# ---------------------------------------------------------------------------

def clip_time_to_session_time(clip_id: str, t: float, clips_by_id: dict) -> float:
    if clip_id not in clips_by_id:
        raise UnknownClip(clip_id)
    return clips_by_id[clip_id].t_start + t


@dataclass
class _Fused:
    cls: str
    t_start: float
    t_end: float
    confidence: float
    refs: list
    views: set
    action: str
    geometry: dict | None = None

    def key(self) -> tuple:
        return (self.t_start, self.t_end, min(self.refs))


def _absorb(target: _Fused, other: _Fused) -> None:
    target.t_end = max(target.t_end, other.t_end)
    target.t_start = min(target.t_start, other.t_start)
    if other.confidence > target.confidence:
        target.confidence = other.confidence
        target.action = other.action
        if other.geometry is not None:
            target.geometry = other.geometry
    elif target.geometry is None:
        target.geometry = other.geometry
    target.refs = target.refs + other.refs
    target.views = target.views | other.views


def merge_same_class(items: list[_Fused], gap_tolerance: float) -> list[_Fused]:
    """Union-merge same-class spans whose gap is within tolerance."""
    if not items:
        return []
    classes = {i.cls for i in items}
    if len(classes) > 1:
        raise FusionError(f"merge_same_class got mixed classes {classes}")
    ordered = sorted(items, key=lambda i: (i.t_start, i.t_end, min(i.refs)))
    merged = [ordered[0]]
    for item in ordered[1:]:
        if item.t_start - merged[-1].t_end <= gap_tolerance:
            _absorb(merged[-1], item)
        else:
            merged.append(item)
    return merged


def _cross_view_dedup(items: list[_Fused], iou_min: float) -> list[_Fused]:
    """Merge same-class items whose spans mostly agree (time-IoU threshold).

    Same-view overlaps were already gap-merged, so surviving high-IoU
    pairs are cross-view duplicates of one physical event.
    """
    items = sorted(items, key=lambda i: i.key())
    changed = True
    while changed:
        changed = False
        out: list[_Fused] = []
        for item in items:
            target = None
            for existing in out:
                if time_iou((existing.t_start, existing.t_end), (item.t_start, item.t_end)) >= iou_min:
                    target = existing
                    break
            if target is not None:
                _absorb(target, item)
                changed = True
            else:
                out.append(item)
        items = sorted(out, key=lambda i: i.key())
    return items


def build_timeline(
    evidence: list[EvidenceItem],
    clips: list,
    policy: FusionPolicy | None = None,
    duration: float | None = None,
):
    """Fuse evidence into (timeline items, skip spans, suppressed evidence)."""
    policy = policy or FusionPolicy()
    clips_by_id = {c.clip_id: c for c in clips}
    if duration is None:
        duration = max((c.t_end for c in clips), default=0.0)

    fused: list[_Fused] = []
    suppressed: list[dict] = []
    for item in evidence:
        try:
            item.validate()
        except Exception as exc:
            raise SchemaViolation(str(exc)) from exc
        if not policy.promotes(item.cls):
            continue  # context evidence (captions, tracks, anchors) stays in detect/
        t0 = clip_time_to_session_time(item.clip_id, item.t_start, clips_by_id)
        t1 = clip_time_to_session_time(item.clip_id, item.t_end, clips_by_id)
        if item.confidence < policy.threshold_for(item.cls):
            row = item.to_json()
            row["suppressed_reason"] = (
                f"confidence {item.confidence} < threshold {policy.threshold_for(item.cls)}"
            )
            suppressed.append(row)
            continue
        fused.append(
            _Fused(
                cls=item.cls,
                t_start=t0,
                t_end=t1,
                confidence=item.confidence,
                refs=[item.item_id],
                views={item.view},
                action=item.suggested_action,
                geometry=item.geometry,
            )
        )

    by_class_view: dict[tuple, list[_Fused]] = {}
    for f in fused:
        by_class_view.setdefault((f.cls, tuple(sorted(f.views))), []).append(f)
    stage1: dict[str, list[_Fused]] = {}
    for (cls, _), group in sorted(by_class_view.items()):
        stage1.setdefault(cls, []).extend(merge_same_class(group, policy.gap_tolerance))

    final_fused: list[_Fused] = []
    for cls in sorted(stage1):
        final_fused.extend(_cross_view_dedup(stage1[cls], policy.cross_view_iou))

    # with auto-skip on, idle evidence fuels skip spans instead of
    # becoming reviewable flags; with it off, idle promotes like any class
    other = [f for f in final_fused if f.cls != "idle"]
    idle = [f for f in final_fused if f.cls == "idle"]
    if policy.autoskip_enabled:
        skips = _skip_candidates(
            clips,
            [(f.t_start, f.t_end) for f in other],
            policy,
            duration,
            extra_idle=[(f.t_start, f.t_end) for f in idle],
        )
        final_fused = other
    else:
        skips = []
        final_fused = other + idle
    final_fused.sort(key=lambda f: (policy.rank_of(f.cls), f.t_start, f.t_end, min(f.refs)))
    items: list[TimelineItem] = []
    for rank, f in enumerate(final_fused, start=1):
        action = policy.default_actions.get(f.cls, f.action)
        items.append(
            TimelineItem(
                timeline_id=f"tl_{rank:05d}",
                cls=f.cls,
                t_start=f.t_start,
                t_end=f.t_end,
                confidence=f.confidence,
                evidence_refs=sorted(set(f.refs)),
                views=sorted(f.views),
                suggested_action=action,
                priority_rank=rank,
                geometry=f.geometry,
            )
        )
    return items, skips, suppressed


def _skip_candidates(
    clips: list,
    item_spans: list[tuple[float, float]],
    policy: FusionPolicy,
    duration: float,
    extra_idle: list[tuple[float, float]] | None = None,
) -> list[SkipSpan]:
    """Low-salience clip spans minus item spans, min-length filtered."""
    erp_clips = [c for c in clips if c.view == "erp"]
    basis = erp_clips or list(clips)

    candidates: dict[str, list[tuple[float, float]]] = {"black": [], "idle": [], "silent": []}
    candidates["idle"].extend(extra_idle or [])
    for clip in basis:
        d = clip.descriptors or {}
        black = d.get("black_ratio")
        motion = d.get("motion_energy")
        loud = d.get("loudness")
        span = (clip.t_start, clip.t_end)
        if black is not None and black > policy.autoskip_black_min:
            candidates["black"].append(span)
        elif (
            motion is not None
            and loud is not None
            and motion < policy.autoskip_motion_max
            and loud < policy.autoskip_loudness_max
        ):
            candidates["idle"].append(span)
        elif motion is None and black is None and loud is not None and loud < policy.autoskip_loudness_max:
            candidates["silent"].append(span)

    skips: list[SkipSpan] = []
    claimed: list[tuple[float, float]] = []
    for reason in ("black", "idle", "silent"):
        spans = merge_intervals(candidates[reason])
        spans = subtract_intervals(spans, item_spans + claimed)
        for a, b in spans:
            if b - a >= policy.skip_min_len and a <= duration + 1e-9:
                skips.append(SkipSpan(t_start=a, t_end=min(b, duration), reason=reason))
                claimed.append((a, b))
    skips.sort(key=lambda s: s.t_start)
    return skips


def compute_skip_spans(
    clips: list, items: list[TimelineItem], policy: FusionPolicy, duration: float
) -> list[SkipSpan]:
    """Low-salience spans minus every timeline item span (standalone helper)."""
    spans = [(i.t_start, i.t_end) for i in items]
    return _skip_candidates(clips, spans, policy, duration)


def review_volume_reduction(
    items: list[TimelineItem], skips: list[SkipSpan], duration: float
) -> float:
    """1 - (non-skipped flagged dwell / duration), overlaps counted once."""
    if duration <= 0:
        raise FusionError("duration must be > 0")
    flagged = [(i.t_start, i.t_end) for i in items]
    skip_spans = [(s.t_start, s.t_end) for s in skips]
    reviewable = subtract_intervals(flagged, skip_spans)
    frac = interval_union_length(reviewable) / duration
    return min(1.0, max(0.0, 1.0 - frac))
