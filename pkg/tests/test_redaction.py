import math

import numpy as np
import pytest

from flagline.canonical import write_jsonl
from flagline.media import MediaBundle, write_frame_dir, write_wav
from flagline.redaction import (
    NotFinalized,
    ProvenanceBundle,
    RedactionPlan,
    SpanOutOfRange,
    _kept_segments,
    export_session,
    raw_to_export_time,
    render_audio_redaction,
    render_visual_redaction,
)
from flagline.segmenter import compute_loudness

rng = np.random.default_rng(77)


def plan(kind, t0=0.0, t1=1.0, geometry=None, **kw):
    return RedactionPlan(plan_id=f"p_{kind}", kind=kind, t_start=t0, t_end=t1, geometry=geometry, **kw)


def gradient_frame(h=48, w=64):
    ys = np.linspace(0, 255, h)[:, None]
    xs = np.linspace(0, 255, w)[None, :]
    r = (ys + xs) / 2
    g = ys * np.ones_like(xs)
    b = np.ones_like(ys) * xs
    return np.clip(np.rint(np.stack(np.broadcast_arrays(r, g, b), axis=-1)), 0, 255).astype(np.uint8)


# --- visual -------------------------------------------------------------------

def test_zero_area_geometry_is_noop():
    frame = gradient_frame()
    out = render_visual_redaction(frame, plan("box", geometry={"x": 10, "y": 10, "w": 0, "h": 5}))
    np.testing.assert_array_equal(out, frame)


@pytest.mark.parametrize("kind", ["box", "mosaic", "blur", "text_overlay"])
def test_outside_region_bit_identical(kind):
    frame = gradient_frame()
    geometry = {"x": 16, "y": 8, "w": 24, "h": 20}
    out = render_visual_redaction(frame, plan(kind, geometry=geometry))
    mask = np.zeros(frame.shape[:2], dtype=bool)
    mask[8:28, 16:40] = True
    np.testing.assert_array_equal(out[~mask], frame[~mask])
    if kind != "text_overlay":
        assert not np.array_equal(out[mask], frame[mask])


def test_box_fills_black():
    frame = gradient_frame()
    out = render_visual_redaction(frame, plan("box", geometry={"x": 4, "y": 4, "w": 8, "h": 8}))
    assert (out[4:12, 4:12] == 0).all()


def test_mosaic_cells_equal_bruteforce_means():
    frame = gradient_frame()
    geometry = {"x": 8, "y": 8, "w": 32, "h": 24}
    out = render_visual_redaction(frame, plan("mosaic", geometry=geometry, mosaic_cell=8))
    region = frame[8:32, 8:40].astype(np.float64)
    for cy in range(0, 24, 8):
        for cx in range(0, 32, 8):
            block = region[cy : cy + 8, cx : cx + 8]
            mean = np.rint(block.reshape(-1, 3).sum(axis=0) / block[:, :, 0].size).astype(np.uint8)
            got = out[8 + cy : 8 + cy + 8, 8 + cx : 8 + cx + 8]
            assert (got == mean).all()


def test_geometry_clipped_to_raster():
    frame = gradient_frame()
    out = render_visual_redaction(frame, plan("box", geometry={"x": 60, "y": 40, "w": 100, "h": 100}))
    assert (out[40:, 60:] == 0).all()
    np.testing.assert_array_equal(out[:40, :], frame[:40, :])


# --- audio ---------------------------------------------------------------------

def test_mute_zeroes_exact_sample_range():
    sr = 16000
    pcm = (rng.integers(-3000, 3000, size=sr * 6)).astype(np.int16)
    out = render_audio_redaction(pcm, sr, plan("mute", t0=3.0, t1=4.0))
    assert (out[48000:64000] == 0).all()
    np.testing.assert_array_equal(out[:48000], pcm[:48000])
    np.testing.assert_array_equal(out[64000:], pcm[64000:])


def test_empty_span_identity():
    sr = 16000
    pcm = (rng.integers(-3000, 3000, size=sr)).astype(np.int16)
    out = render_audio_redaction(pcm, sr, plan("mute", t0=0.5, t1=0.5))
    np.testing.assert_array_equal(out, pcm)


def test_tone_replace_level():
    sr = 16000
    pcm = np.zeros(sr * 3, dtype=np.int16)
    out = render_audio_redaction(pcm, sr, plan("tone_replace", t0=1.0, t1=2.0))
    level = compute_loudness(out[sr : 2 * sr])
    assert level == pytest.approx(-20.0, abs=0.1)
    assert (out[:sr] == 0).all() and (out[2 * sr :] == 0).all()


def test_span_out_of_range():
    with pytest.raises(SpanOutOfRange):
        render_audio_redaction(np.zeros(100, dtype=np.int16), 16000, plan("mute", t0=0.0, t1=1.0))


# --- export --------------------------------------------------------------------

def make_media(tmp_path, duration=6.0, fps=2.0, sr=8000):
    n = int(duration * fps)
    frames = [gradient_frame() for _ in range(n)]
    times = [i / fps for i in range(n)]
    write_frame_dir(tmp_path / "frames", frames, times)
    pcm = (rng.integers(-2000, 2000, size=int(duration * sr))).astype(np.int16)
    write_wav(tmp_path / "audio.wav", pcm, sr)
    return MediaBundle.open(tmp_path / "frames", tmp_path / "audio.wav")


def label(tid, cls, t0, t1, action, geometry=None):
    return {
        "timeline_id": tid,
        "class": cls,
        "t_start": t0,
        "t_end": t1,
        "confidence": 0.9,
        "evidence_refs": [f"{tid}:e"],
        "views": ["erp"],
        "suggested_action": action,
        "action": action,
        "priority_rank": 1,
        "disposition": "accepted",
        "rationale_code": None,
        "geometry": geometry,
    }


def provenance():
    return ProvenanceBundle(
        model_versions={"detector_suite": "ref-1"},
        thresholds={"pii": 0.25},
        reviewer_ids=["r1"],
        ledger_digest="ab" * 32,
    )


def test_export_requires_finalize(tmp_path):
    media = make_media(tmp_path)
    with pytest.raises(NotFinalized):
        export_session(tmp_path, media, provenance())


def test_export_identity_when_no_redactions(tmp_path):
    media = make_media(tmp_path)
    write_jsonl(tmp_path / "final_labels.jsonl", [label("tl_1", "caption", 0, 6, "none")])
    out = export_session(tmp_path, media, provenance())
    exported = MediaBundle.open(out / "frames", out / "audio.wav")
    np.testing.assert_array_equal(exported.audio, media.audio)
    assert exported.frame_count == media.frame_count
    np.testing.assert_array_equal(exported.frame(0), media.frame(0))
    import json

    mapping = json.loads((out / "mapping.json").read_text())
    assert mapping["duration_export"] == mapping["duration_raw"]
    assert all(seg["export"] != "WITHHELD" for seg in mapping["segments"])


def test_export_withheld_span_rebases_timeline(tmp_path):
    media = make_media(tmp_path, duration=6.0, fps=2.0)
    write_jsonl(
        tmp_path / "final_labels.jsonl",
        [label("tl_1", "nsfw", 1.0, 2.0, "withhold")],
    )
    out = export_session(tmp_path, media, provenance())
    exported = MediaBundle.open(out / "frames", out / "audio.wav")
    assert exported.frame_count == media.frame_count - 2  # frames at t=1.0, 1.5 dropped
    assert len(exported.audio) == len(media.audio) - 8000
    import json

    mapping = json.loads((out / "mapping.json").read_text())
    segs = mapping["segments"]
    assert segs[0]["export"] == [0.0, 1.0]
    assert segs[1]["export"] == "WITHHELD"
    assert segs[2]["raw"] == [2.0, 6.0]
    assert segs[2]["export"] == [1.0, 5.0]
    assert mapping["duration_export"] == 5.0


def test_overlapping_blur_plans_order_independent(tmp_path):
    media = make_media(tmp_path, duration=2.0)
    labels = [
        label("tl_1", "minor_risk", 0, 2, "blur", geometry={"x": 8, "y": 8, "w": 24, "h": 24}),
        label("tl_2", "minor_risk", 0, 2, "blur", geometry={"x": 20, "y": 16, "w": 24, "h": 24}),
    ]
    write_jsonl(tmp_path / "final_labels.jsonl", labels)
    out1 = export_session(tmp_path, media, provenance(), out_dir=tmp_path / "d1")
    write_jsonl(tmp_path / "final_labels.jsonl", list(reversed(labels)))
    out2 = export_session(tmp_path, media, provenance(), out_dir=tmp_path / "d2")
    a = (out1 / "frames" / "frame_000000.ppm").read_bytes()
    b = (out2 / "frames" / "frame_000000.ppm").read_bytes()
    assert a == b


def test_segment_helpers():
    segments = _kept_segments(10.0, [(2.0, 4.0), (7.0, 8.0)])
    assert raw_to_export_time(segments, 1.0) == 1.0
    assert raw_to_export_time(segments, 3.0) is None
    assert raw_to_export_time(segments, 5.0) == 3.0
    assert raw_to_export_time(segments, 9.0) == 6.0


def test_export_time_maps_back_to_unique_raw_time():
    segments = _kept_segments(10.0, [(2.0, 4.0), (7.0, 8.0)])
    kept = [s for s in segments if not s["withheld"]]
    # half-open ownership: a collapsed withheld span makes the boundary
    # instant itself two-sided, but every content instant has one owner
    for t_export in np.linspace(0.0, 7.0, 141):
        owners = [
            s
            for s in kept
            if s["export"][0] <= t_export
            and (t_export < s["export"][1] or s is kept[-1] and t_export <= s["export"][1])
        ]
        assert len(owners) == 1
        s = owners[0]
        raw = s["raw"][0] + (t_export - s["export"][0])
        assert raw_to_export_time(segments, raw) == pytest.approx(t_export)
