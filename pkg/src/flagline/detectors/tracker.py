"""IoU-guided multi-object tracker with lightweight appearance embeddings.

Per-frame detections are associated greedily in descending match score,
where score blends box overlap and appearance similarity:

    score = (1 - w) * IoU + w * cos(track_embedding, detection_embedding)

Pairs below the IoU threshold never match. A track that goes unmatched
accrues misses and is retired once the miss count exceeds the age-out
horizon, so an object that vanishes for more than that many frames comes
back as a new identity (re-entry linking is fusion's job, and the
reference tracker reports ``reentry_count = 0``).

Detections are canonicalized (sorted by box, then score) before
association, making the output invariant to input ordering within a
frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TrackerError(Exception):
    pass


class UnorderedInput(TrackerError):
    pass


@dataclass
class TrackerParams:
    iou_threshold: float = 0.3
    age_out_frames: int = 30
    appearance_weight: float = 0.25

    def validate(self) -> None:
        if not (0.0 < self.iou_threshold < 1.0):
            raise TrackerError(f"iou_threshold {self.iou_threshold} outside (0, 1)")
        if self.age_out_frames < 1:
            raise TrackerError("age_out_frames must be >= 1")

    def to_json(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "age_out_frames": self.age_out_frames,
            "appearance_weight": self.appearance_weight,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrackerParams":
        p = cls(**obj)
        p.validate()
        return p


@dataclass
class Detection:
    box: tuple[float, float, float, float]  # x, y, w, h
    score: float = 1.0
    embedding: np.ndarray | None = None


@dataclass
class Track:
    track_id: int
    boxes: dict[int, tuple[float, float, float, float]] = field(default_factory=dict)
    scores: dict[int, float] = field(default_factory=dict)
    emb_sum: np.ndarray | None = None
    emb_count: int = 0
    misses: int = 0

    @property
    def first_frame(self) -> int:
        return min(self.boxes)

    @property
    def last_frame(self) -> int:
        return max(self.boxes)

    def embedding(self) -> np.ndarray | None:
        if self.emb_sum is None or self.emb_count == 0:
            return None
        norm = float(np.linalg.norm(self.emb_sum))
        if norm == 0.0:
            return None
        return self.emb_sum / norm

    def add(self, frame: int, det: Detection) -> None:
        self.boxes[frame] = det.box
        self.scores[frame] = det.score
        if det.embedding is not None:
            if self.emb_sum is None:
                self.emb_sum = det.embedding.astype(np.float64).copy()
            else:
                self.emb_sum += det.embedding
            self.emb_count += 1
        self.misses = 0

    def keyframes(self) -> dict[str, int]:
        peak = max(self.boxes, key=lambda f: (self.boxes[f][2] * self.boxes[f][3], -f))
        return {"entrance": self.first_frame, "peak": peak, "exit": self.last_frame}

    def to_record(self, fps: float) -> dict:
        t_s = self.first_frame / fps
        t_e = self.last_frame / fps
        emb = self.embedding()
        return {
            "track_id": self.track_id,
            "boxes": {str(f): list(self.boxes[f]) for f in sorted(self.boxes)},
            "t_start": t_s,
            "t_end": t_e,
            "dwell_time": t_e - t_s,
            "keyframes": self.keyframes(),
            "reentry_count": 0,
            "mask_uris": [],
            "embedding": [float(x) for x in emb] if emb is not None else None,
        }


def iou(a, b) -> float:
    ax0, ay0, aw, ah = a
    bx0, by0, bw, bh = b
    x0 = max(ax0, bx0)
    y0 = max(ay0, by0)
    x1 = min(ax0 + aw, bx0 + bw)
    y1 = min(ay0 + ah, by0 + bh)
    inter = max(0.0, x1 - x0) * max(0.0, y1 - y0)
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def cosine(a: np.ndarray | None, b: np.ndarray | None) -> float:
    if a is None or b is None:
        return 0.0
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def match_score(track: Track, det: Detection, frame: int, params: TrackerParams) -> float | None:
    last_box = track.boxes[track.last_frame]
    overlap = iou(last_box, det.box)
    if overlap < params.iou_threshold:
        return None
    w = params.appearance_weight
    return (1.0 - w) * overlap + w * cosine(track.embedding(), det.embedding)


def _canonical_dets(dets: list[Detection]) -> list[Detection]:
    return sorted(dets, key=lambda d: (d.box[0], d.box[1], d.box[2], d.box[3], -d.score))


def run_tracker(
    frames: list[tuple[int, list[Detection]]],
    params: TrackerParams | None = None,
) -> list[Track]:
    """Associate per-frame detections into tracks.

    ``frames`` must list every processed frame in increasing index order
    (empty detection lists included); miss counting is per listed frame.
    """
    params = params or TrackerParams()
    params.validate()
    last_idx = None
    live: list[Track] = []
    done: list[Track] = []
    next_id = 0

    for frame_idx, dets in frames:
        if last_idx is not None and frame_idx <= last_idx:
            raise UnorderedInput(f"frame {frame_idx} after {last_idx}")
        last_idx = frame_idx
        dets = _canonical_dets(dets)

        pairs = []
        for ti, track in enumerate(live):
            for di, det in enumerate(dets):
                score = match_score(track, det, frame_idx, params)
                if score is not None:
                    pairs.append((score, ti, di))
        pairs.sort(key=lambda p: (-p[0], p[1], p[2]))

        used_tracks: set[int] = set()
        used_dets: set[int] = set()
        for score, ti, di in pairs:
            if ti in used_tracks or di in used_dets:
                continue
            live[ti].add(frame_idx, dets[di])
            used_tracks.add(ti)
            used_dets.add(di)

        for di, det in enumerate(dets):
            if di not in used_dets:
                track = Track(track_id=next_id)
                next_id += 1
                track.add(frame_idx, det)
                live.append(track)

        still_live = []
        for ti, track in enumerate(live):
            if ti not in used_tracks and track.last_frame != frame_idx:
                track.misses += 1
            if track.misses > params.age_out_frames:
                done.append(track)
            else:
                still_live.append(track)
        live = still_live

    done.extend(live)
    done.sort(key=lambda t: t.track_id)
    return done


def crowdness(tracks: list[Track], window: float = 60.0, duration: float | None = None, fps: float = 30.0) -> list[int]:
    """Unique tracks intersecting each tumbling window of ``window`` seconds."""
    if window <= 0:
        raise TrackerError("window must be > 0")
    spans = [(t.first_frame / fps, t.last_frame / fps) for t in tracks]
    if duration is None:
        duration = max((e for _, e in spans), default=0.0)
    n_windows = max(1, int(np.ceil(duration / window))) if duration > 0 else 0
    counts = []
    for k in range(n_windows):
        a, b = k * window, (k + 1) * window
        counts.append(sum(1 for s, e in spans if s < b and e >= a))
    return counts


def color_histogram_embedding(frame: np.ndarray, box: tuple[float, float, float, float]) -> np.ndarray:
    """Appearance embedding: three pairwise channel-joint histograms.

    The crop's (R,G), (G,B) and (B,R) values are quantized to 8 levels
    each, giving a 3x8x8 histogram that is flattened and L2-normalized.
    """
    x, y, w, h = (int(round(v)) for v in box)
    x0 = max(0, x)
    y0 = max(0, y)
    x1 = min(frame.shape[1], x + w)
    y1 = min(frame.shape[0], y + h)
    crop = frame[y0:y1, x0:x1]
    hist = np.zeros((3, 8, 8), dtype=np.float64)
    if crop.size:
        q = (crop.astype(np.int64) * 8) // 256
        for plane, (c0, c1) in enumerate(((0, 1), (1, 2), (2, 0))):
            idx = q[:, :, c0].ravel() * 8 + q[:, :, c1].ravel()
            hist[plane] = np.bincount(idx, minlength=64).reshape(8, 8)
    flat = hist.ravel()
    norm = float(np.linalg.norm(flat))
    return flat / norm if norm > 0 else flat
