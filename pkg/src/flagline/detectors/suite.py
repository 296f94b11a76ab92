"""Run the reference detector suite over a session's clips.

Work units are (clip, family) pairs, each a pure function of the clip
media, fixtures and params, so they parallelize freely; outputs are
merged in sorted key order, making every artifact byte-identical
regardless of worker count or scheduling.

Artifacts written under ``<session>/detect/``: caption.jsonl, tags.jsonl,
nsfw.jsonl, age.jsonl (scripted replay), tracks.jsonl + persons.jsonl +
keyframes/ (tracker), asr.jsonl + pii.jsonl + snippets/ (audio), and
motion.jsonl / claps.jsonl (frame-difference and transient cues).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..canonical import write_jsonl
from ..media import MediaBundle, frame_name, read_ppm, write_ppm, write_wav
from ..segmenter import ClipRecord
from .claps import detect_claps
from .contract import EvidenceItem
from .motion import MotionParams, detect_motion_cues
from .pii import PiiPolicy, scan_pii
from .scripted import (
    detections_for_clip,
    run_scripted_detector,
    transcripts_from_fixture,
)
from .tracker import TrackerParams, crowdness, run_tracker

EVIDENCE_FILES = (
    "caption.jsonl",
    "tags.jsonl",
    "nsfw.jsonl",
    "age.jsonl",
    "pii.jsonl",
    "persons.jsonl",
    "motion.jsonl",
    "claps.jsonl",
)

CLASS_TO_FILE = {
    "caption": "caption.jsonl",
    "activity_tag": "tags.jsonl",
    "nsfw": "nsfw.jsonl",
    "minor_risk": "age.jsonl",
    "pii": "pii.jsonl",
    "person_track": "persons.jsonl",
    "idle": "motion.jsonl",
    "high_motion": "motion.jsonl",
    "scene_change": "motion.jsonl",
    "clap_anchor": "claps.jsonl",
}


@dataclass
class SuiteConfig:
    tracker: TrackerParams = field(default_factory=TrackerParams)
    motion: MotionParams = field(default_factory=MotionParams)
    pii_policy: PiiPolicy = field(default_factory=PiiPolicy)
    top_k_frames: int = 3
    adult_threshold: float = 18.0
    # adapter seam: a directory of *.jsonl rows in the evidence contract,
    # produced by real models out of process, merged with the reference
    # detectors' output
    external_dir: Path | None = None


class ExternalEvidenceInvalid(Exception):
    pass


def load_external_evidence(external_dir, valid_clip_ids: set[str]) -> list[EvidenceItem]:
    items: list[EvidenceItem] = []
    for path in sorted(Path(external_dir).glob("*.jsonl")):
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    item = EvidenceItem.from_json(json.loads(line))
                except Exception as exc:
                    raise ExternalEvidenceInvalid(f"{path}:{lineno}: {exc}") from exc
                if item.clip_id not in valid_clip_ids:
                    raise ExternalEvidenceInvalid(
                        f"{path}:{lineno}: unknown clip {item.clip_id!r}"
                    )
                items.append(item)
    return items


@dataclass
class ClipMedia:
    """Lazily loaded media slice for one clip."""

    clip: ClipRecord
    view_dir: Path
    frame_indices: list[int]
    timestamps: list[float]  # clip-relative
    audio: np.ndarray
    sample_rate: int

    def frames(self) -> list[np.ndarray]:
        return [read_ppm(self.view_dir / frame_name(i)) for i in self.frame_indices]


def clip_media_for(clip: ClipRecord, session_dir: Path, bundles: dict[str, MediaBundle]) -> ClipMedia:
    bundle = bundles[clip.view]
    indices = bundle.frames_between(clip.t_start, clip.t_end)
    sr = bundle.sample_rate
    i0, i1 = int(round(clip.t_start * sr)), int(round(clip.t_end * sr))
    return ClipMedia(
        clip=clip,
        view_dir=bundle.frame_dir,
        frame_indices=indices,
        timestamps=[bundle.timestamps[i] - clip.t_start for i in indices],
        audio=bundle.audio[i0:i1],
        sample_rate=sr,
    )


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

def _uri_maker(detect_dir: Path):
    def uri_for(view: str, t: float) -> str:
        return f"views/{view}/t={t:.3f}"

    return uri_for


def _family_scripted(clip, media, fixture, cfg, detect_dir):
    items = run_scripted_detector(
        fixture, [clip], top_k=cfg.top_k_frames, uri_for=_uri_maker(detect_dir),
        adult_threshold=cfg.adult_threshold,
    )
    return {"evidence": items, "rows": {}}


def _family_tracker(clip, media: ClipMedia, fixture, cfg, detect_dir: Path):
    frames = detections_for_clip(fixture, clip, clip.fps)
    tracks = run_tracker(frames, cfg.tracker)
    rows = []
    items = []
    keyframe_dir = detect_dir / "keyframes"
    for track in tracks:
        record = track.to_record(clip.fps)
        record["clip_id"] = clip.clip_id
        record["view"] = clip.view
        rows.append(record)

        uris = []
        for kf_name, frame_idx in sorted(record["keyframes"].items()):
            t_rel = frame_idx / clip.fps
            media_idx = _nearest_frame(media.timestamps, t_rel)
            if media_idx is None:
                continue
            out_name = f"{clip.clip_id}_tr{track.track_id:03d}_{kf_name}.ppm"
            keyframe_dir.mkdir(parents=True, exist_ok=True)
            out_path = keyframe_dir / out_name
            if not out_path.exists():
                write_ppm(out_path, read_ppm(media.view_dir / frame_name(media.frame_indices[media_idx])))
            uris.append(f"detect/keyframes/{out_name}")
        peak_box = record["boxes"][str(record["keyframes"]["peak"])]
        item = EvidenceItem(
            item_id=f"{clip.clip_id}:person_track:{track.track_id:03d}",
            clip_id=clip.clip_id,
            view=clip.view,
            cls="person_track",
            t_start=record["t_start"],
            t_end=record["t_end"],
            confidence=float(np.mean(list(track.scores.values()))),
            geometry={"x": peak_box[0], "y": peak_box[1], "w": peak_box[2], "h": peak_box[3]},
            payload={
                "track_id": track.track_id,
                "dwell_time": record["dwell_time"],
                "keyframes": record["keyframes"],
                "reentry_count": 0,
            },
            evidence_uris=uris or [f"views/{clip.view}/t={record['t_start']:.3f}"],
            suggested_action="none",
        )
        item.validate()
        items.append(item)
    if tracks:
        rows.append(
            {
                "clip_id": clip.clip_id,
                "view": clip.view,
                "crowdness_per_min": crowdness(
                    tracks, window=60.0, duration=clip.t_end - clip.t_start, fps=clip.fps
                ),
            }
        )
    return {"evidence": items, "rows": {"tracks.jsonl": rows}}


def _nearest_frame(timestamps: list[float], t: float) -> int | None:
    if not timestamps:
        return None
    return int(np.argmin([abs(ts - t) for ts in timestamps]))


def _family_audio(clip, media: ClipMedia, fixture, cfg, detect_dir: Path):
    """ASR replay + PII scan + snippet excerpts, scoped to this clip."""
    segments = transcripts_from_fixture(fixture)
    local = []
    asr_rows = []
    for seg in segments:
        words = [w for w in seg.words if clip.t_start <= w.t_start < clip.t_end]
        if not words:
            continue
        seg_local = type(seg)(speaker=seg.speaker, words=words, source=seg.source)
        local.append(seg_local)
        asr_rows.append({"clip_id": clip.clip_id, **seg_local.to_json()})

    items = []
    snips_dir = detect_dir / "snippets"
    for n, hit in enumerate(scan_pii(local, cfg.pii_policy)):
        t0 = max(clip.t_start, hit.t_start) - clip.t_start
        t1 = min(clip.t_end, hit.t_end) - clip.t_start
        snip_name = f"{clip.clip_id}_pii{n:03d}.wav"
        sr = media.sample_rate
        s0 = max(0, int((t0 - 1.0) * sr))
        s1 = min(len(media.audio), int((t1 + 1.0) * sr))
        if s1 > s0:
            snips_dir.mkdir(parents=True, exist_ok=True)
            write_wav(snips_dir / snip_name, media.audio[s0:s1], sr)
        item = EvidenceItem(
            item_id=f"{clip.clip_id}:pii:{n:03d}",
            clip_id=clip.clip_id,
            view=clip.view,
            cls="pii",
            t_start=t0,
            t_end=t1,
            confidence=hit.confidence,
            payload={
                "entity_type": hit.entity_type,
                "transcript_snippet": hit.matched_text,
                "redaction_plan": hit.redaction_plan,
                "pad_s": hit.pad_s,
            },
            evidence_uris=[f"detect/snippets/{snip_name}"],
            suggested_action="mute",
        )
        item.validate()
        items.append(item)
    return {"evidence": items, "rows": {"asr.jsonl": asr_rows}}


def _family_claps(clip, media: ClipMedia, fixture, cfg, detect_dir):
    if len(media.audio) == 0:
        return {"evidence": [], "rows": {}}
    items = detect_claps(media.audio, media.sample_rate, clip_id=clip.clip_id, view=clip.view)
    return {"evidence": items, "rows": {}}


def _family_motion(clip, media: ClipMedia, fixture, cfg, detect_dir):
    frames = media.frames()
    items = detect_motion_cues(
        frames, media.timestamps, clip.clip_id, clip.view, cfg.motion, uri_for=_uri_maker(detect_dir)
    )
    return {"evidence": items, "rows": {}}


def families_for(clip: ClipRecord) -> list[str]:
    if clip.view == "erp":
        return ["scripted", "audio", "claps", "motion"]
    return ["scripted", "tracker"]


FAMILY_FNS = {
    "scripted": _family_scripted,
    "tracker": _family_tracker,
    "audio": _family_audio,
    "claps": _family_claps,
    "motion": _family_motion,
}


def run_suite(
    session_dir,
    clips: list[ClipRecord],
    fixture: dict,
    cfg: SuiteConfig | None = None,
    workers: int = 1,
) -> dict[str, int]:
    """Execute all (clip, family) units and write the detect artifacts."""
    cfg = cfg or SuiteConfig()
    session_dir = Path(session_dir)
    detect_dir = session_dir / "detect"
    detect_dir.mkdir(parents=True, exist_ok=True)

    bundles: dict[str, MediaBundle] = {}
    for view in sorted({c.view for c in clips}):
        bundles[view] = MediaBundle.open(session_dir / "views" / view, session_dir / "audio.wav")

    units = sorted(
        ((clip, family) for clip in clips for family in families_for(clip)),
        key=lambda u: (u[0].clip_id, u[1]),
    )

    def run_unit(unit):
        clip, family = unit
        media = clip_media_for(clip, session_dir, bundles)
        return (clip.clip_id, family), FAMILY_FNS[family](clip, media, fixture, cfg, detect_dir)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(run_unit, units))
    else:
        results = dict(run_unit(u) for u in units)

    evidence_by_file: dict[str, list[EvidenceItem]] = {name: [] for name in EVIDENCE_FILES}
    rows_by_file: dict[str, list[dict]] = {"tracks.jsonl": [], "asr.jsonl": []}
    for key in sorted(results):
        out = results[key]
        for item in out["evidence"]:
            evidence_by_file[CLASS_TO_FILE[item.cls]].append(item)
        for fname, rows in out["rows"].items():
            rows_by_file[fname].extend(rows)

    if cfg.external_dir is not None:
        for item in load_external_evidence(cfg.external_dir, {c.clip_id for c in clips}):
            evidence_by_file[CLASS_TO_FILE[item.cls]].append(item)

    counts = {}
    for fname, items in evidence_by_file.items():
        items.sort(key=lambda i: (i.clip_id, i.cls, i.t_start, i.item_id))
        write_jsonl(detect_dir / fname, [i.to_json() for i in items])
        counts[fname] = len(items)
    for fname, rows in rows_by_file.items():
        write_jsonl(detect_dir / fname, rows)
        counts[fname] = len(rows)
    return counts


def load_evidence(session_dir) -> list[EvidenceItem]:
    """Read every evidence artifact back as validated items."""
    from ..canonical import read_jsonl

    detect_dir = Path(session_dir) / "detect"
    items = []
    for fname in EVIDENCE_FILES:
        path = detect_dir / fname
        if path.exists():
            items.extend(EvidenceItem.from_json(row) for row in read_jsonl(path))
    return items
