"""Frame-differencing cues: idle, high-motion and scene-change proposals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..kernels import mean_abs_luma_diff
from .contract import EvidenceItem
from .scripted import default_uri


@dataclass
class MotionParams:
    idle_threshold: float = 0.01
    high_threshold: float = 0.10
    scene_threshold: float = 0.30
    min_span_s: float = 2.0


def frame_diff_series(frames: list[np.ndarray], timestamps: list[float]) -> list[tuple[float, float]]:
    """Per consecutive pair: (midpoint time, normalized luma difference)."""
    series = []
    for (a, b), (ta, tb) in zip(zip(frames, frames[1:]), zip(timestamps, timestamps[1:])):
        series.append(((ta + tb) / 2.0, mean_abs_luma_diff(a, b) / 255.0))
    return series


def _runs(flags: list[bool]) -> list[tuple[int, int]]:
    runs = []
    start = None
    for i, f in enumerate(flags):
        if f and start is None:
            start = i
        elif not f and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(flags) - 1))
    return runs


def detect_motion_cues(
    frames: list[np.ndarray],
    timestamps: list[float],
    clip_id: str,
    view: str,
    params: MotionParams | None = None,
    uri_for: Callable[[str, float], str] = default_uri,
) -> list[EvidenceItem]:
    """Emit idle/high_motion spans and scene_change points, clip-relative times."""
    params = params or MotionParams()
    if len(frames) < 2:
        return []
    series = frame_diff_series(frames, timestamps)
    times = [t for t, _ in series]
    diffs = [d for _, d in series]
    items: list[EvidenceItem] = []

    for cls, flags, action in (
        ("idle", [d < params.idle_threshold for d in diffs], "skip"),
        ("high_motion", [d > params.high_threshold for d in diffs], "none"),
    ):
        for i0, i1 in _runs(flags):
            t0, t1 = times[i0], times[i1]
            if t1 - t0 < params.min_span_s:
                continue
            peak = max(range(i0, i1 + 1), key=lambda i: diffs[i])
            items.append(
                EvidenceItem(
                    item_id=f"{clip_id}:{cls}:{i0:04d}",
                    clip_id=clip_id,
                    view=view,
                    cls=cls,
                    t_start=t0,
                    t_end=t1,
                    confidence=1.0,
                    payload={"mean_diff": float(np.mean(diffs[i0 : i1 + 1]))},
                    evidence_uris=[] if cls == "idle" else [uri_for(view, times[peak])],
                    suggested_action=action,
                )
            )

    for i, d in enumerate(diffs):
        if d <= params.scene_threshold:
            continue
        if (i == 0 or d > diffs[i - 1]) and (i == len(diffs) - 1 or d >= diffs[i + 1]):
            items.append(
                EvidenceItem(
                    item_id=f"{clip_id}:scene_change:{i:04d}",
                    clip_id=clip_id,
                    view=view,
                    cls="scene_change",
                    t_start=times[i],
                    t_end=times[i],
                    confidence=min(1.0, d / (2 * params.scene_threshold)),
                    payload={"diff": float(d)},
                    evidence_uris=[uri_for(view, times[i])],
                    suggested_action="none",
                )
            )

    items.sort(key=lambda it: (it.cls, it.t_start, it.item_id))
    return items
