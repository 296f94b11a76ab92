"""Render approved redactions into the governance-filtered deliverable.

Visual kinds (box, mosaic, blur, text_overlay) touch only pixels inside
their region; audio kinds (mute, tone_replace) touch only samples inside
their span; everything outside stays byte-identical. Withheld spans are
excised entirely and the export timeline re-based, with mapping.json
documenting every raw-to-export correspondence. Overlapping visual
regions are disjointified by plan-id priority before rendering, so
output is independent of plan file ordering.
"""

from __future__ import annotations

import hashlib
import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import BUILD_ID
from .canonical import canonical_json, file_sha256, read_jsonl
from .ingest import digest_obj
from .kernels import box_blur, mosaic_region
from .media import (
    MediaBundle,
    PCM_SCALE,
    frame_name,
    read_frame_index,
    read_ppm,
    write_ppm,
    write_wav,
)

VISUAL_KINDS = ("blur", "mosaic", "box", "text_overlay")
AUDIO_KINDS = ("mute", "tone_replace")


class RedactionError(Exception):
    pass


class SpanOutOfRange(RedactionError):
    pass


class NotFinalized(RedactionError):
    pass


@dataclass
class RedactionPlan:
    plan_id: str
    kind: str  # blur | mosaic | box | mute | tone_replace | text_overlay | withhold
    t_start: float
    t_end: float
    geometry: dict | None = None
    blur_radius: int = 9
    mosaic_cell: int = 16
    tone_hz: float = 1000.0
    tone_dbfs: float = -20.0
    overlay_text: str = ""

    def validate(self) -> None:
        if self.kind in VISUAL_KINDS and self.geometry is None and self.kind != "text_overlay":
            raise RedactionError(f"{self.plan_id}: visual plan requires geometry")
        if self.t_end < self.t_start:
            raise RedactionError(f"{self.plan_id}: span inverted")

    def to_json(self) -> dict:
        return {
            "plan_id": self.plan_id,
            "kind": self.kind,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "geometry": self.geometry,
            "blur_radius": self.blur_radius,
            "mosaic_cell": self.mosaic_cell,
            "tone_hz": self.tone_hz,
            "tone_dbfs": self.tone_dbfs,
            "overlay_text": self.overlay_text,
        }


def _clip_rect(geometry: dict, width: int, height: int) -> tuple[int, int, int, int] | None:
    x = int(round(geometry["x"]))
    y = int(round(geometry["y"]))
    w = int(round(geometry["w"]))
    h = int(round(geometry["h"]))
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(width, x + w), min(height, y + h)
    if x1 <= x0 or y1 <= y0:
        return None
    return x0, y0, x1, y1


def _overlay_bar_geometry(width: int, height: int) -> dict:
    bar_h = max(8, height // 10)
    return {"x": 0, "y": height - bar_h, "w": width, "h": bar_h}


def render_visual_redaction(frame: np.ndarray, plan: RedactionPlan, mask: np.ndarray | None = None) -> np.ndarray:
    """Apply one visual plan; ``mask`` restricts which pixels the plan owns."""
    out = frame.copy()
    h, w = frame.shape[:2]
    geometry = plan.geometry if plan.kind != "text_overlay" else (plan.geometry or _overlay_bar_geometry(w, h))
    if geometry is None:
        return out
    rect = _clip_rect(geometry, w, h)
    if rect is None:
        return out
    x0, y0, x1, y1 = rect
    region = frame[y0:y1, x0:x1]

    if plan.kind == "box":
        rendered = np.zeros_like(region)
    elif plan.kind == "mosaic":
        rendered = mosaic_region(region, plan.mosaic_cell)
    elif plan.kind == "blur":
        blurred = box_blur(region.astype(np.float64), plan.blur_radius, passes=3)
        rendered = np.clip(np.rint(blurred), 0, 255).astype(np.uint8)
    elif plan.kind == "text_overlay":
        rendered = _render_overlay_bar(region, plan.overlay_text)
    else:
        raise RedactionError(f"{plan.plan_id}: {plan.kind} is not a visual kind")

    if mask is not None:
        sub = mask[y0:y1, x0:x1]
        out[y0:y1, x0:x1][sub] = rendered[sub]
    else:
        out[y0:y1, x0:x1] = rendered
    return out


def _render_overlay_bar(region: np.ndarray, text: str) -> np.ndarray:
    """Solid caption bar encoding the replacement-text hash as tone blocks.

    A font-free placeholder: 16 vertical blocks whose brightness follows
    the nibbles of sha256(text), on a black bar.
    """
    bar = np.zeros_like(region)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    h, w = region.shape[:2]
    inset = max(1, h // 6)
    block_w = max(1, w // 16)
    for i in range(16):
        level = 64 + (digest[i] % 160)
        x0 = i * block_w
        x1 = min(w, x0 + block_w)
        if x0 >= w:
            break
        bar[inset : h - inset, x0 + 1 : x1 - 1 if x1 - 1 > x0 + 1 else x1] = level
    return bar


def render_audio_redaction(pcm: np.ndarray, sample_rate: int, plan: RedactionPlan) -> np.ndarray:
    """Apply one audio plan to int16 PCM; samples outside the span untouched."""
    n = len(pcm)
    i0 = int(round(plan.t_start * sample_rate))
    i1 = int(round(plan.t_end * sample_rate))
    if i0 < 0 or i1 > n:
        raise SpanOutOfRange(f"{plan.plan_id}: [{plan.t_start}, {plan.t_end}] outside stream")
    out = pcm.copy()
    if i1 <= i0:
        return out
    if plan.kind == "mute":
        out[i0:i1] = 0
    elif plan.kind == "tone_replace":
        amp = 10.0 ** (plan.tone_dbfs / 20.0) * math.sqrt(2.0)
        k = np.arange(i1 - i0, dtype=np.float64)
        tone = amp * np.sin(2.0 * np.pi * plan.tone_hz * k / sample_rate)
        out[i0:i1] = np.clip(np.rint(tone * PCM_SCALE), -32768, 32767).astype(np.int16)
    else:
        raise RedactionError(f"{plan.plan_id}: {plan.kind} is not an audio kind")
    return out


# ---------------------------------------------------------------------------
# plan derivation from final labels
# ---------------------------------------------------------------------------

ACTION_TO_KIND = {
    "blur": "blur",
    "blur_and_review": "blur",
    "mute": "mute",
    "tone_replace": "tone_replace",
    "text_overlay": "text_overlay",
    "withhold": "withhold",
}


def plans_from_final_labels(rows: list[dict], frame_size: tuple[int, int]) -> list[RedactionPlan]:
    """Turn approved labels into concrete plans; actionless rows are skipped.

    Visual plans without geometry get the full frame (conservative).
    """
    width, height = frame_size
    plans = []
    for row in sorted(rows, key=lambda r: r["timeline_id"]):
        kind = ACTION_TO_KIND.get(row.get("action", "none"))
        if kind is None:
            continue
        geometry = row.get("geometry")
        if kind in ("blur", "mosaic", "box") and geometry is None:
            geometry = {"x": 0, "y": 0, "w": width, "h": height}
        plan = RedactionPlan(
            plan_id=f"plan_{row['timeline_id']}",
            kind=kind,
            t_start=row["t_start"],
            t_end=row["t_end"],
            geometry=geometry,
            overlay_text=str(row.get("payload", {}).get("text", row["timeline_id"])),
        )
        plan.validate()
        plans.append(plan)
    return plans


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

@dataclass
class ProvenanceBundle:
    model_versions: dict
    thresholds: dict
    reviewer_ids: list
    software_build: str = BUILD_ID
    ledger_digest: str = ""

    def validate(self) -> None:
        missing = [
            name
            for name, value in (
                ("model_versions", self.model_versions),
                ("reviewer_ids", self.reviewer_ids),
                ("software_build", self.software_build),
                ("ledger_digest", self.ledger_digest),
            )
            if not value
        ]
        if missing:
            raise RedactionError(f"provenance fields empty: {missing}")

    def to_json(self) -> dict:
        return {
            "model_versions": self.model_versions,
            "thresholds": self.thresholds,
            "reviewer_ids": self.reviewer_ids,
            "software_build": self.software_build,
            "ledger_digest": self.ledger_digest,
        }


def _kept_segments(duration: float, withheld: list[tuple[float, float]]) -> list[dict]:
    """Partition [0, duration] into kept/withheld segments with export times."""
    events = []
    for a, b in sorted(withheld):
        a = max(0.0, a)
        b = min(duration, b)
        if b > a:
            events.append((a, b))
    segments = []
    cursor = 0.0
    export_t = 0.0
    for a, b in events:
        if a > cursor:
            segments.append(
                {"raw": [cursor, a], "export": [export_t, export_t + (a - cursor)], "withheld": False}
            )
            export_t += a - cursor
        segments.append({"raw": [a, b], "export": None, "withheld": True})
        cursor = b
    if cursor < duration:
        segments.append(
            {"raw": [cursor, duration], "export": [export_t, export_t + (duration - cursor)], "withheld": False}
        )
    return segments


def raw_to_export_time(segments: list[dict], t: float) -> float | None:
    """Raw instant to export instant; None inside withheld spans.

    Segments own their raw span half-open (the last one closed), so an
    instant at a withheld-span boundary maps with the kept side.
    """
    for i, seg in enumerate(segments):
        a, b = seg["raw"]
        if a <= t < b or (i == len(segments) - 1 and t == b):
            if seg["withheld"]:
                return None
            return seg["export"][0] + (t - a)
    return None


def export_session(
    session_dir,
    media: MediaBundle,
    provenance: ProvenanceBundle,
    out_dir=None,
) -> Path:
    """Render the deliverable from final_labels.jsonl; requires finalize first."""
    session_dir = Path(session_dir)
    labels_path = session_dir / "final_labels.jsonl"
    if not labels_path.exists():
        raise NotFinalized(f"{session_dir} has no final_labels.jsonl")
    provenance.validate()
    rows = list(read_jsonl(labels_path))

    out_dir = Path(out_dir) if out_dir else session_dir / "deliverable"
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    index = read_frame_index(media.frame_dir)
    sample0 = read_ppm(media.frame_dir / frame_name(index[0]["index"])) if index else None
    frame_size = (sample0.shape[1], sample0.shape[0]) if sample0 is not None else (0, 0)

    plans = plans_from_final_labels(rows, frame_size)
    withheld = [(p.t_start, p.t_end) for p in plans if p.kind == "withhold"]
    duration = media.duration
    segments = _kept_segments(duration, withheld)

    visual_plans = [p for p in plans if p.kind in VISUAL_KINDS]
    audio_plans = [p for p in plans if p.kind in AUDIO_KINDS]

    # frames: apply visual plans in raw time, drop withheld, re-time
    out_index = []
    out_i = 0
    for entry in index:
        t = entry["t_seconds"]
        t_export = raw_to_export_time(segments, t)
        if t_export is None:
            continue
        frame = read_ppm(media.frame_dir / frame_name(entry["index"]))
        # disjointify: each pixel owned by the first plan in id order
        owned = np.zeros(frame.shape[:2], dtype=bool)
        for plan in sorted(visual_plans, key=lambda p: p.plan_id):
            if not (plan.t_start <= t < plan.t_end or (plan.t_start == plan.t_end == t)):
                continue
            geometry = plan.geometry or _overlay_bar_geometry(frame.shape[1], frame.shape[0])
            rect = _clip_rect(geometry, frame.shape[1], frame.shape[0])
            if rect is None:
                continue
            x0, y0, x1, y1 = rect
            mask = np.zeros_like(owned)
            mask[y0:y1, x0:x1] = ~owned[y0:y1, x0:x1]
            frame = render_visual_redaction(frame, plan, mask=mask)
            owned |= mask
        write_ppm(frames_dir / frame_name(out_i), frame)
        out_index.append({"index": out_i, "t_seconds": round(t_export, 6)})
        out_i += 1
    (frames_dir / "frames.json").write_text(canonical_json(out_index), encoding="utf-8")

    # audio: redact in raw time, then excise withheld sample ranges
    pcm = media.audio.copy()
    for plan in sorted(audio_plans, key=lambda p: p.plan_id):
        pcm = render_audio_redaction(pcm, media.sample_rate, plan)
    keep_chunks = []
    for seg in segments:
        if seg["withheld"]:
            continue
        a, b = seg["raw"]
        keep_chunks.append(pcm[int(round(a * media.sample_rate)) : int(round(b * media.sample_rate))])
    pcm_out = np.concatenate(keep_chunks) if keep_chunks else np.zeros(0, dtype=np.int16)
    write_wav(out_dir / "audio.wav", pcm_out, media.sample_rate)

    mapping = {
        "duration_raw": duration,
        "duration_export": sum(s["export"][1] - s["export"][0] for s in segments if not s["withheld"]),
        "segments": [
            {
                "raw": seg["raw"],
                "export": seg["export"] if not seg["withheld"] else "WITHHELD",
                "applied_plan_ids": sorted(
                    p.plan_id
                    for p in plans
                    if p.kind != "withhold" and p.t_start < seg["raw"][1] and p.t_end > seg["raw"][0]
                ),
            }
            for seg in segments
        ],
    }
    (out_dir / "mapping.json").write_text(canonical_json(mapping), encoding="utf-8")
    (out_dir / "provenance.json").write_text(canonical_json(provenance.to_json()), encoding="utf-8")
    shutil.copyfile(labels_path, out_dir / "final_labels.jsonl")

    entries = []
    for path in sorted(out_dir.rglob("*")):
        if path.is_file() and path.name != "export_ledger.json":
            entries.append(
                {
                    "asset_id": path.relative_to(out_dir).as_posix(),
                    "content_hash": file_sha256(path),
                    "byte_size": path.stat().st_size,
                }
            )
    export_ledger = {"entries": entries, "ledger_digest": digest_obj(entries)}
    (out_dir / "export_ledger.json").write_text(canonical_json(export_ledger), encoding="utf-8")
    return out_dir
