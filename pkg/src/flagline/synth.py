"""Deterministic synthetic capture sessions for tests, demos and benchmarks.

Generates a dual-fisheye raw bundle (rendered through the forward lens
model from a procedural ERP scene), mono PCM audio with clap anchors and
a silent/black idle stretch, a consent journal, detector fixtures and a
ready-to-run pipeline config. Everything derives from the seed.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .canonical import canonical_json
from .geometry import FisheyeLayout, LensSpec, build_fisheye_render_map, render_dual_fisheye
from .media import write_frame_dir, write_wav


def default_layout(radius: float = 60.0) -> FisheyeLayout:
    return FisheyeLayout(
        lenses=[
            LensSpec(cx=64.0, cy=64.0, radius=radius, fov_deg=190.0, yaw_deg=0.0),
            LensSpec(cx=192.0, cy=64.0, radius=radius, fov_deg=190.0, yaw_deg=180.0),
        ]
    )


def _erp_grid(width: int, height: int):
    us = (np.arange(width) + 0.5) / width
    vs = (np.arange(height) + 0.5) / height
    lon = 2 * np.pi * us - np.pi
    lat = np.pi / 2 - np.pi * vs
    return np.meshgrid(lon, lat)


def _scene_frame(lon_g, lat_g, t: float, blob_speed: float) -> np.ndarray:
    drift = 0.35 * t
    r = 127.5 + 70 * np.sin(2 * lon_g + drift) * np.cos(lat_g)
    g = 127.5 + 70 * np.sin(3 * lat_g + 0.5 * drift)
    b = 127.5 + 70 * np.cos(lon_g - 0.7 * drift) * np.cos(lat_g)
    # a bright moving blob keeps frame-difference energy clearly non-idle
    blob_lon = ((blob_speed * t) % (2 * math.pi)) - math.pi
    dist = np.minimum(np.abs(lon_g - blob_lon), 2 * np.pi - np.abs(lon_g - blob_lon))
    blob = np.exp(-((dist / 0.35) ** 2) - (lat_g / 0.35) ** 2)
    r = r + 120 * blob
    g = g + 90 * blob
    return np.clip(np.rint(np.stack([r, g, b], axis=-1)), 0, 255).astype(np.uint8)


def _claps(x: np.ndarray, sr: int, times: list[float], rng) -> None:
    width = int(0.005 * sr)
    for t in times:
        i = int(t * sr)
        x[i : i + width] += 0.7 * rng.standard_normal(width)


def generate_session(
    out_dir,
    session_id: str = "synth001",
    duration: float = 180.0,
    fps: float = 2.0,
    sample_rate: int = 16000,
    erp_size: tuple[int, int] = (256, 128),
    seed: int = 1,
    idle_fraction: float = 0.36,
    clap_times: tuple[float, float] = (2.0, 2.5),
) -> Path:
    """Write a raw session under ``out_dir/raw`` plus fixtures and config."""
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    raw_dir = out_dir / "raw"
    raw_dir.mkdir(parents=True, exist_ok=True)

    layout = default_layout()
    erp_w, erp_h = erp_size
    raster_w, raster_h = 256, 128
    render_map = build_fisheye_render_map(layout, raster_w, raster_h, erp_w, erp_h)
    lon_g, lat_g = _erp_grid(erp_w, erp_h)

    # placed to swallow a whole default clip window on longer sessions,
    # so the fused timeline actually exhibits auto-skip spans
    idle_start = 0.30 * duration
    idle_end = idle_start + idle_fraction * duration

    n_frames = int(duration * fps)
    frames = []
    timestamps = []
    for i in range(n_frames):
        t = i / fps
        if idle_start <= t < idle_end:
            fish = np.zeros((raster_h, raster_w, 3), dtype=np.uint8)
        else:
            erp = _scene_frame(lon_g, lat_g, t, blob_speed=0.5)
            fish = render_dual_fisheye(erp, layout, raster_w, raster_h, render_map=render_map)
        frames.append(fish)
        timestamps.append(t)
    write_frame_dir(raw_dir / "frames", frames, timestamps)

    n_samples = int(duration * sample_rate)
    ts = np.arange(n_samples) / sample_rate
    audio = 0.03 * np.sin(2 * np.pi * 220 * ts) + 0.002 * rng.standard_normal(n_samples)
    _claps(audio, sample_rate, list(clap_times), rng)
    idle_mask = (ts >= idle_start) & (ts < idle_end)
    audio[idle_mask] = 0.0
    write_wav(raw_dir / "audio.wav", audio, sample_rate)

    journal = {
        "session_id": session_id,
        "free_text_notes": "synthetic capture for pipeline exercise",
        "device_id": f"synthcam-{seed:04d}",
        "frame_rate": fps,
        "lens_model": "equidistant-dual-190",
        "local_clock_offset": 0.0,
        "consent_ack": True,
        "device_logs": {"battery": 0.97, "dropped_frames": 0},
    }
    (raw_dir / "session.json").write_text(canonical_json(journal), encoding="utf-8")
    (raw_dir / "fisheye_layout.json").write_text(canonical_json(layout.to_json()), encoding="utf-8")

    fixtures = _fixtures(duration, fps, rng)
    (out_dir / "fixtures.json").write_text(canonical_json(fixtures), encoding="utf-8")

    config = {
        "session_id": session_id,
        "raw_dir": str(raw_dir),
        "session_dir": str(out_dir / "session"),
        "store_root": str(out_dir / "store"),
        "fixtures": str(out_dir / "fixtures.json"),
        "workers": 1,
        "seeds": {"qa": 7, "bootstrap": 1234},
        "clock_start": "2026-01-01T00:00:00Z",
        "projection": {
            "erp_width": erp_w,
            "erp_height": erp_h,
            "view_size": 96,
            "layout": str(raw_dir / "fisheye_layout.json"),
        },
        "segmenter": {"clip_len": 60.0, "overlap": 2.5},
        "tracker": {"iou_threshold": 0.3, "age_out_frames": 30, "appearance_weight": 0.25},
        "fusion": {},
    }
    (out_dir / "config.json").write_text(canonical_json(config), encoding="utf-8")
    return out_dir


def _fixtures(duration: float, fps: float, rng) -> dict:
    def frame_list(t0, t1, step, base_score=0.8):
        out = []
        t = t0
        while t <= t1:
            out.append({"t": round(t, 3), "score": round(base_score + 0.1 * float(rng.random()), 4)})
            t += step
        return out

    captions = []
    seg = 0
    t = 0.0
    while t < duration:
        t1 = min(t + 60.0, duration)
        captions.append(
            {
                "view": "erp",
                "t_start": t,
                "t_end": t1,
                "text": f"activity segment {seg}",
                "confidence": 0.85,
                "frames": frame_list(t + 1, t1 - 1, 10.0),
            }
        )
        seg += 1
        t = t1

    tags = [
        {
            "view": "front",
            "t_start": 0.05 * duration,
            "t_end": 0.30 * duration,
            "tag": "walking",
            "confidence": 0.8,
            "frames": frame_list(0.05 * duration, 0.30 * duration, 15.0),
        }
    ]

    nsfw = [
        {
            "view": "front",
            "t_start": round(0.35 * duration, 3),
            "t_end": round(0.40 * duration, 3),
            "confidence": 0.9,
            "frames": frame_list(0.35 * duration, 0.40 * duration, 2.0),
        }
    ]

    faces = []
    for t in np.arange(0.10 * duration, 0.20 * duration, 0.5):
        faces.append(
            {
                "view": "front",
                "track_hint": "adult1",
                "t": round(float(t), 3),
                "box": [20 + (t % 7), 30, 18, 18],
                "age": round(27 + 3 * float(rng.random()), 2),
                "score": 0.9,
            }
        )
    for t in np.arange(0.45 * duration, 0.52 * duration, 0.5):
        faces.append(
            {
                "view": "front",
                "track_hint": "teen1",
                "t": round(float(t), 3),
                "box": [60, 40, 16, 16],
                "age": round(17.2 + 2.5 * float(rng.random()), 2),
                "score": 0.85,
            }
        )

    detections = []
    for t in np.arange(0.10 * duration, 0.30 * duration, 1.0 / fps):
        detections.append(
            {
                "view": "front",
                "t": round(float(t), 3),
                "box": [10 + 1.5 * (t - 0.10 * duration), 40, 20, 40],
                "score": 0.9,
            }
        )
        detections.append(
            {
                "view": "front",
                "t": round(float(t), 3),
                "box": [80 - 1.0 * (t - 0.10 * duration), 42, 18, 38],
                "score": 0.85,
            }
        )

    t0 = 0.25 * duration
    phrases = [
        ("we", 0.3), ("are", 0.25), ("filming", 0.5), ("now", 0.3),
        ("call", 0.3), ("me", 0.2), ("at", 0.2), ("555-0142", 0.9),
        ("or", 0.25), ("email", 0.4), ("jo@ex.com", 0.9), ("thanks", 0.4),
    ]
    words = []
    t = t0
    for text, dur in phrases:
        words.append({"text": text, "t_start": round(t, 3), "t_end": round(t + dur, 3)})
        t += dur + 0.08
    transcripts = [{"speaker": "S1", "words": words}]

    return {
        "captions": captions,
        "tags": tags,
        "nsfw": nsfw,
        "faces": faces,
        "detections": detections,
        "transcripts": transcripts,
    }
