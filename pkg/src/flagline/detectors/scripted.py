"""Deterministic fixture replay standing in for the neural detector families.

Captions, activity tags, NSFW proposals, face/age observations and raw
person detections are read from a JSON fixture and replayed clipped to
clip bounds. Real models can replace any family by emitting the same
evidence contract; the fixture format is documented in the README.

Fixture schema (all sections optional, times in session seconds)::

    {
      "captions":  [{"view", "t_start", "t_end", "text", "confidence",
                     "frames": [{"t", "score"}, ...]}],
      "tags":      [{"view", "t_start", "t_end", "tag", "confidence", "frames": [...]}],
      "nsfw":      [{"view", "t_start", "t_end", "confidence", "frames": [...]}],
      "faces":     [{"view", "track_hint", "t", "box": [x,y,w,h], "age", "score"}],
      "detections":[{"view", "t", "box": [x,y,w,h], "score"}],
      "transcripts":[{"speaker", "words": [{"text", "t_start", "t_end"}]}]
    }
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Callable

from .age import aggregate_track_age
from .contract import EvidenceItem
from .pii import TranscriptSegment, TranscriptWord
from .tracker import Detection


class FixtureInvalid(Exception):
    pass


CAPTION_FPS = 1.0  # supporting-frame replay cadence
FACE_FPS = 2.0


FIXTURE_SECTIONS = ("captions", "tags", "nsfw", "faces", "detections", "transcripts")


def load_fixture(path) -> dict:
    """Load fixtures from one JSON object or a directory of <section>.json files."""
    path = Path(path)
    if path.is_dir():
        fixture: dict = {}
        for section in FIXTURE_SECTIONS:
            section_path = path / f"{section}.json"
            if section_path.exists():
                fixture[section] = _load_section(section_path)
        return fixture
    try:
        fixture = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FixtureInvalid(f"{path}: {exc}") from exc
    if not isinstance(fixture, dict):
        raise FixtureInvalid(f"{path}: fixture must be a JSON object")
    for section, rows in fixture.items():
        if not isinstance(rows, list):
            raise FixtureInvalid(f"{path}: section {section!r} must be a list")
    return fixture


def _load_section(path: Path) -> list:
    try:
        rows = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FixtureInvalid(f"{path}: {exc}") from exc
    if not isinstance(rows, list):
        raise FixtureInvalid(f"{path}: section file must hold a JSON list")
    return rows


def _require(entry: dict, keys: tuple[str, ...], section: str) -> None:
    for key in keys:
        if key not in entry:
            raise FixtureInvalid(f"{section} entry missing {key!r}: {entry}")


def _downsample(frames: list[dict], cadence_fps: float) -> list[dict]:
    """Keep at most one supporting frame per 1/cadence bucket (first wins)."""
    seen = set()
    kept = []
    for fr in sorted(frames, key=lambda f: f["t"]):
        bucket = math.floor(fr["t"] * cadence_fps)
        if bucket not in seen:
            seen.add(bucket)
            kept.append(fr)
    return kept


def _top_k_uris(frames: list[dict], k: int, view: str, uri_for: Callable[[str, float], str]) -> list[str]:
    ranked = sorted(frames, key=lambda f: (-f.get("score", 1.0), f["t"]))[:k]
    ranked.sort(key=lambda f: f["t"])
    return [uri_for(view, f["t"]) for f in ranked]


def default_uri(view: str, t: float) -> str:
    return f"evidence://{view}/t={t:.3f}"


def _clip_overlap(t0: float, t1: float, clip) -> tuple[float, float] | None:
    if t0 >= clip.t_end or t1 <= clip.t_start:
        return None
    return max(t0, clip.t_start) - clip.t_start, min(t1, clip.t_end) - clip.t_start


SPAN_SECTIONS = {
    "captions": ("caption", "none"),
    "tags": ("activity_tag", "none"),
    "nsfw": ("nsfw", "withhold"),
}


def run_scripted_detector(
    fixture: dict,
    clips: list,
    top_k: int = 3,
    uri_for: Callable[[str, float], str] = default_uri,
    adult_threshold: float = 18.0,
) -> list[EvidenceItem]:
    """Replay caption/tag/NSFW spans and face->age tracks onto the clip set."""
    items: list[EvidenceItem] = []

    for section, (cls, action) in SPAN_SECTIONS.items():
        cadence = CAPTION_FPS
        for entry in fixture.get(section, []):
            _require(entry, ("view", "t_start", "t_end", "confidence"), section)
            for clip in clips:
                if clip.view != entry["view"]:
                    continue
                span = _clip_overlap(entry["t_start"], entry["t_end"], clip)
                if span is None:
                    continue
                frames = _downsample(entry.get("frames", []), cadence)
                in_span = [f for f in frames if entry["t_start"] <= f["t"] <= entry["t_end"]]
                uris = _top_k_uris(in_span, top_k, clip.view, uri_for)
                if not uris:
                    uris = [uri_for(clip.view, entry["t_start"])]
                payload = {
                    k: entry[k] for k in ("text", "tag") if k in entry
                }
                seq = len(items)
                item = EvidenceItem(
                    item_id=f"{clip.clip_id}:{cls}:{seq:04d}",
                    clip_id=clip.clip_id,
                    view=clip.view,
                    cls=cls,
                    t_start=span[0],
                    t_end=span[1],
                    confidence=float(entry["confidence"]),
                    payload=payload,
                    evidence_uris=uris,
                    suggested_action=action,
                )
                item.validate()
                items.append(item)

    items.extend(replay_face_tracks(fixture, clips, top_k, uri_for, adult_threshold))
    items.sort(key=lambda i: (i.clip_id, i.cls, i.t_start, i.item_id))
    return items


def replay_face_tracks(
    fixture: dict,
    clips: list,
    top_k: int = 3,
    uri_for: Callable[[str, float], str] = default_uri,
    adult_threshold: float = 18.0,
) -> list[EvidenceItem]:
    """Group face observations per (view, track_hint) and flag minors."""
    items: list[EvidenceItem] = []
    faces = fixture.get("faces", [])
    for face in faces:
        _require(face, ("view", "track_hint", "t", "box", "age"), "faces")

    groups: dict[tuple[str, str], list[dict]] = {}
    for face in faces:
        groups.setdefault((face["view"], str(face["track_hint"])), []).append(face)

    for (view, hint), obs in sorted(groups.items()):
        obs = _downsample(obs, FACE_FPS)
        for clip in clips:
            if clip.view != view:
                continue
            local = [f for f in obs if clip.t_start <= f["t"] < clip.t_end]
            if not local:
                continue
            ages = [float(f["age"]) for f in local]
            track_age, minor = aggregate_track_age(ages, adult_threshold)
            if not minor:
                continue
            youngest = min(local, key=lambda f: (float(f["age"]), f["t"]))
            x, y, w, h = youngest["box"]
            uris = _top_k_uris(
                [{"t": f["t"], "score": f.get("score", 1.0)} for f in local], top_k, view, uri_for
            )
            item = EvidenceItem(
                item_id=f"{clip.clip_id}:minor_risk:{hint}",
                clip_id=clip.clip_id,
                view=view,
                cls="minor_risk",
                t_start=min(f["t"] for f in local) - clip.t_start,
                t_end=max(f["t"] for f in local) - clip.t_start,
                confidence=float(min(f.get("score", 1.0) for f in local)),
                geometry={"x": x, "y": y, "w": w, "h": h},
                payload={"track_hint": hint, "track_age": track_age, "observations": len(local)},
                evidence_uris=uris,
                suggested_action="blur_and_review",
            )
            item.validate()
            items.append(item)
    return items


def detections_for_clip(fixture: dict, clip, fps: float) -> list[tuple[int, list[Detection]]]:
    """Scripted per-frame detections (the tracker's input) for one clip.

    Frames are the clip's sampling grid at ``fps``; fixture entries snap
    to the nearest grid frame.
    """
    n_frames = max(1, int(round((clip.t_end - clip.t_start) * fps)))
    by_frame: dict[int, list[Detection]] = {k: [] for k in range(n_frames)}
    for entry in fixture.get("detections", []):
        _require(entry, ("view", "t", "box"), "detections")
        if entry["view"] != clip.view:
            continue
        if not (clip.t_start <= entry["t"] < clip.t_end):
            continue
        k = int(round((entry["t"] - clip.t_start) * fps))
        if k >= n_frames:
            k = n_frames - 1
        x, y, w, h = entry["box"]
        by_frame[k].append(
            Detection(box=(float(x), float(y), float(w), float(h)), score=float(entry.get("score", 1.0)))
        )
    return [(k, by_frame[k]) for k in range(n_frames)]


def transcripts_from_fixture(fixture: dict) -> list[TranscriptSegment]:
    segments = []
    for entry in fixture.get("transcripts", []):
        _require(entry, ("speaker", "words"), "transcripts")
        words = [TranscriptWord(w["text"], float(w["t_start"]), float(w["t_end"])) for w in entry["words"]]
        seg = TranscriptSegment(speaker=entry["speaker"], words=words, source="scripted")
        seg.validate()
        segments.append(seg)
    return segments
