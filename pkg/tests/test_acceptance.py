"""Acceptance suite: one test per release criterion, at pinned tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to get the PASS line
and measured runtime for each criterion.
"""

import io
import itertools
import json
import math
import time
from contextlib import redirect_stdout
from pathlib import Path

import numpy as np
import pytest

from flagline.canonical import file_sha256, read_jsonl
from flagline.cli import main as cli_main
from flagline.detectors.claps import detect_claps
from flagline.detectors.contract import EvidenceItem
from flagline.detectors.tracker import Detection, TrackerParams, run_tracker
from flagline.fusion import FusionPolicy, build_timeline, review_volume_reduction
from flagline.geometry import (
    FisheyeLayout,
    LensSpec,
    ViewSpec,
    dewarp_fisheye_to_erp,
    direction_to_erp_pixel,
    render_dual_fisheye,
    render_rectilinear_view,
    seam_mask,
)
from flagline.kernels import bilinear_sample
from flagline.metrics import bootstrap_mean_ci, compute_dwell, rtr, simulate_dwell_batch, simulate_session_log
from flagline.pipeline import PipelineConfig, run_pipeline
from flagline.redaction import RedactionPlan, render_audio_redaction, render_visual_redaction
from flagline.review import ReviewSession, ReviewerAction, replay_prestates, verify_audit_chain
from flagline.canonical import canonical_json, write_jsonl
from flagline.segmenter import ClipRecord, SegmenterConfig, plan_windows
from flagline.synth import generate_session

from .test_tracker import oracle_tracker, partition
from .test_review import FakeClock, make_item


class Budget:
    def __init__(self, name, seconds):
        self.name = name
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        if exc_type is None:
            assert elapsed < self.seconds, f"{self.name}: {elapsed:.2f}s exceeds {self.seconds}s budget"
            print(f"PASS {self.name}: {elapsed:.2f}s < {self.seconds}s")
        return False


# ---------------------------------------------------------------------------
# 1. savings table reproduction
# ---------------------------------------------------------------------------

def test_acceptance_savings_table():
    with Budget("savings-table", 1.0):
        buf = io.StringIO()
        with redirect_stdout(buf):
            code = cli_main(["report", "--factors", "0.05,0.10,0.08,0.12"])
        assert code == 0
        out = buf.getvalue()
        rows = [line for line in out.splitlines() if line.strip().startswith("feature_")]
        minutes = [line.split()[-1] for line in rows]
        assert minutes == ["3.0", "6.0", "4.8", "7.2"]
        combined_line = next(line for line in out.splitlines() if "combined" in line)
        pct = float(combined_line.split("%")[0].split()[-1])
        mins = float(combined_line.split()[-1])
        assert abs(pct - 30.8) <= 0.5
        assert abs(mins - 18.5) <= 0.5


# ---------------------------------------------------------------------------
# 2. RTR formula suite + deterministic bootstrap
# ---------------------------------------------------------------------------

def test_acceptance_rtr_suite():
    with Budget("rtr-suite", 10.0):
        for x in (1.0, 60.0, 3600.0, 7.25):
            assert rtr(x, x) == 0.0
            assert rtr(0.0, x) == 1.0

        log = simulate_session_log("sim1", dwell_s=44 * 60.0)
        t_hitl = compute_dwell(log)
        value = rtr(t_hitl, 3600.0)
        assert abs(value - (1.0 - 44.0 / 60.0)) < 1e-9
        assert round(value, 4) == 0.2667

        dwells = simulate_dwell_batch(40, duration_s=3600.0, mean_dwell_s=42 * 60.0, seed=17)
        rtrs = [rtr(d, 3600.0) for d in dwells]
        assert abs(float(np.mean(rtrs)) - 0.30) < 1e-12

        triples = [bootstrap_mean_ci(rtrs, level=0.95, resamples=2000, seed=99) for _ in range(3)]
        assert triples[0] == triples[1] == triples[2]
        mean, lo, hi = triples[0]
        assert lo <= mean <= hi


# ---------------------------------------------------------------------------
# 3. conservative auto-skip
# ---------------------------------------------------------------------------

GOVERNANCE = ("pii", "minor_risk", "nsfw")


def _random_session(rng):
    duration = float(rng.uniform(240, 900))
    windows = plan_windows(duration, SegmenterConfig())
    clips = []
    for idx, (t0, t1) in enumerate(windows):
        mode = rng.random()
        if mode < 0.3:
            descriptors = {"black_ratio": 0.02, "motion_energy": 0.001, "loudness": -80.0}
        elif mode < 0.4:
            descriptors = {"black_ratio": 0.97, "motion_energy": 0.0, "loudness": -90.0}
        else:
            descriptors = {"black_ratio": 0.01, "motion_energy": 0.15, "loudness": -25.0}
        clips.append(
            ClipRecord(
                clip_id=f"r_{idx:06d}", view="erp", t_start=t0, t_end=t1,
                fps=30.0, resolution="64x64", lens="fisheye", descriptors=descriptors,
            )
        )
    evidence = []
    classes = ["pii", "minor_risk", "nsfw", "activity_tag", "high_motion", "idle"]
    for k in range(int(rng.integers(3, 20))):
        clip = clips[int(rng.integers(0, len(clips)))]
        span = clip.t_end - clip.t_start
        a = float(rng.uniform(0, span * 0.9))
        b = min(span, a + float(rng.uniform(0.5, 40)))
        cls = classes[int(rng.integers(0, len(classes)))]
        evidence.append(
            EvidenceItem(
                item_id=f"{clip.clip_id}:{cls}:{k:03d}",
                clip_id=clip.clip_id,
                view="erp",
                cls=cls,
                t_start=a,
                t_end=b,
                confidence=float(rng.uniform(0.6, 1.0)),
                evidence_uris=[] if cls == "idle" else ["evidence://x"],
                suggested_action="none",
            )
        )
    return clips, evidence, duration


def test_acceptance_conservative_autoskip():
    with Budget("conservative-autoskip", 30.0):
        rng = np.random.default_rng(2026)
        violations = 0
        for _ in range(50):
            clips, evidence, duration = _random_session(rng)
            items, skips, _ = build_timeline(evidence, clips, FusionPolicy(), duration=duration)
            for item in items:
                if item.cls not in GOVERNANCE:
                    continue
                for s in skips:
                    if item.t_start < s.t_end and item.t_end > s.t_start:
                        violations += 1
        assert violations == 0

        # fixtured session: 8% of runtime idle, activity flags cover the rest
        duration = 3600.0
        idle_len = 0.08 * duration
        clips = [
            ClipRecord("fx_000000", "erp", 0.0, idle_len, 30.0, "64x64", "fisheye",
                       {"black_ratio": 0.0, "motion_energy": 0.001, "loudness": -80.0}),
            ClipRecord("fx_000001", "erp", idle_len, duration, 30.0, "64x64", "fisheye",
                       {"black_ratio": 0.0, "motion_energy": 0.2, "loudness": -20.0}),
        ]
        evidence = [
            EvidenceItem(
                item_id="fx_000001:activity_tag:000",
                clip_id="fx_000001",
                view="erp",
                cls="activity_tag",
                t_start=0.0,
                t_end=duration - idle_len,
                confidence=0.9,
                evidence_uris=["evidence://x"],
            )
        ]
        items, skips, _ = build_timeline(evidence, clips, FusionPolicy(), duration=duration)
        assert sum(s.t_end - s.t_start for s in skips) == idle_len  # full 8% auto-skipped
        rvr = review_volume_reduction(items, skips, duration)
        # exact-boundary fixture: true value is 0.08, which is not float-representable
        assert rvr >= 0.08 - 1e-12


# ---------------------------------------------------------------------------
# 4. tracker oracle equivalence
# ---------------------------------------------------------------------------

def _random_scene(rng, crossing_free=False):
    n_obj = int(rng.integers(1, 5))
    n_frames = int(rng.integers(20, 61))
    if crossing_free:
        lanes = rng.permutation(np.arange(n_obj)) * 120.0
        starts = np.stack([rng.uniform(0, 60, n_obj), lanes + rng.uniform(0, 10, n_obj)], axis=1)
        vels = np.stack([rng.uniform(-2, 2, n_obj), np.zeros(n_obj)], axis=1)
    else:
        starts = rng.uniform(0, 200, size=(n_obj, 2))
        vels = rng.uniform(-4, 4, size=(n_obj, 2))
    embs = rng.standard_normal((n_obj, 16))
    embs /= np.linalg.norm(embs, axis=1, keepdims=True)
    frames = []
    for i in range(n_frames):
        dets = []
        for k in range(n_obj):
            if rng.random() < 0.04:
                continue
            pos = starts[k] + vels[k] * i
            dets.append(Detection(box=(float(pos[0]), float(pos[1]), 16.0, 16.0), score=0.9, embedding=embs[k]))
        frames.append((i, dets))
    return frames


def test_acceptance_tracker_oracle():
    with Budget("tracker-oracle", 60.0):
        rng = np.random.default_rng(7)
        params = TrackerParams(age_out_frames=10)
        agree = 0
        for _ in range(100):
            frames = _random_scene(rng)
            if partition(run_tracker(frames, params)) == partition(oracle_tracker(frames, params)):
                agree += 1
        assert agree >= 95, f"greedy agreed with the oracle on only {agree}/100 scenes"

        for _ in range(30):
            frames = _random_scene(rng, crossing_free=True)
            assert partition(run_tracker(frames, params)) == partition(oracle_tracker(frames, params))

        # age-out boundary at exactly delta and delta + 1
        delta = 6
        p = TrackerParams(age_out_frames=delta)

        def gap_scenario(gap):
            frames = [(i, [Detection(box=(10.0, 10.0, 10.0, 10.0))]) for i in range(5)]
            frames += [(5 + i, []) for i in range(gap)]
            frames += [(5 + gap + i, [Detection(box=(10.0, 10.0, 10.0, 10.0))]) for i in range(5)]
            return len(run_tracker(frames, p))

        assert gap_scenario(delta) == 1
        assert gap_scenario(delta + 1) == 2


# ---------------------------------------------------------------------------
# 5. geometry round trip at 1024x512
# ---------------------------------------------------------------------------

def test_acceptance_geometry_round_trip():
    with Budget("geometry-round-trip", 30.0):
        width, height = 1024, 512
        us = (np.arange(width) + 0.5) / width
        vs = (np.arange(height) + 0.5) / height
        lon = 2 * np.pi * us - np.pi
        lat = np.pi / 2 - np.pi * vs
        lon_g, lat_g = np.meshgrid(lon, lat)
        erp = np.clip(
            np.rint(
                np.stack(
                    [
                        127.5 + 90 * np.sin(2 * lon_g) * np.cos(lat_g),
                        127.5 + 90 * np.sin(3 * lat_g),
                        127.5 + 90 * np.cos(lon_g + lat_g) * np.cos(lat_g),
                    ],
                    axis=-1,
                )
            ),
            0,
            255,
        ).astype(np.uint8)

        radius = 500.0
        layout = FisheyeLayout(
            lenses=[
                LensSpec(cx=512.0, cy=512.0, radius=radius, fov_deg=190.0, yaw_deg=0.0),
                LensSpec(cx=1536.0, cy=512.0, radius=radius, fov_deg=190.0, yaw_deg=180.0),
            ]
        )
        fisheye = render_dual_fisheye(erp, layout, 2048, 1024)
        back = dewarp_fisheye_to_erp(fisheye, layout, width, height)
        off_seam = ~seam_mask(width, height, margin_deg=8.0)
        err = np.abs(back.astype(int) - erp.astype(int))[off_seam]
        assert err.max() <= 3, f"round-trip error {err.max()}/255 off-seam"

        spec = ViewSpec(name="front", yaw_deg=0.0, hfov_deg=90.0, width=255, height=255)
        view = render_rectilinear_view(erp, spec)
        u, v = direction_to_erp_pixel(0.0, 0.0, width, height)
        expected = bilinear_sample(erp.astype(np.float64), np.array([u]), np.array([v]), wrap_x=True)
        expected = np.clip(np.rint(expected[0]), 0, 255).astype(np.uint8)
        assert tuple(view[127, 127]) == tuple(expected)

        right = render_rectilinear_view(erp, ViewSpec.default("right", size=128))
        rolled = np.roll(erp, -width // 4, axis=1)
        front_rolled = render_rectilinear_view(rolled, ViewSpec.default("front", size=128))
        assert np.abs(right.astype(int) - front_rolled.astype(int)).max() <= 2


# ---------------------------------------------------------------------------
# 6. redaction bit-exactness
# ---------------------------------------------------------------------------

def test_acceptance_redaction_bit_exactness():
    with Budget("redaction-bit-exactness", 10.0):
        rng = np.random.default_rng(3)
        frame = rng.integers(0, 256, size=(90, 120, 3), dtype=np.uint8)
        geometry = {"x": 20, "y": 15, "w": 48, "h": 40}
        region = np.zeros(frame.shape[:2], dtype=bool)
        region[15:55, 20:68] = True
        for kind in ("box", "mosaic", "blur", "text_overlay"):
            plan = RedactionPlan(plan_id=f"p_{kind}", kind=kind, t_start=0, t_end=1, geometry=geometry)
            out = render_visual_redaction(frame, plan)
            np.testing.assert_array_equal(out[~region], frame[~region])

        mosaic = render_visual_redaction(
            frame, RedactionPlan("pm", "mosaic", 0, 1, geometry=geometry, mosaic_cell=16)
        )
        crop = frame[15:55, 20:68].astype(np.float64)
        for cy in range(0, 40, 16):
            for cx in range(0, 48, 16):
                block = crop[cy : min(cy + 16, 40), cx : min(cx + 16, 48)]
                mean = np.rint(block.reshape(-1, 3).sum(axis=0) / block[:, :, 0].size).astype(np.uint8)
                got = mosaic[15 + cy : 15 + min(cy + 16, 40), 20 + cx : 20 + min(cx + 16, 48)]
                assert (got == mean).all()

        sr = 16000
        pcm = rng.integers(-5000, 5000, size=sr * 6).astype(np.int16)
        muted = render_audio_redaction(pcm, sr, RedactionPlan("pa", "mute", 3.0, 4.0))
        assert (muted[48000:64000] == 0).all()
        np.testing.assert_array_equal(muted[:48000], pcm[:48000])
        np.testing.assert_array_equal(muted[64000:], pcm[64000:])
        toned = render_audio_redaction(pcm, sr, RedactionPlan("pt", "tone_replace", 1.0, 2.0))
        np.testing.assert_array_equal(toned[: sr * 1], pcm[: sr * 1])
        np.testing.assert_array_equal(toned[sr * 2 :], pcm[sr * 2 :])


# ---------------------------------------------------------------------------
# 7. audit chain on a 1000-action review
# ---------------------------------------------------------------------------

def test_acceptance_audit_chain(tmp_path):
    with Budget("audit-chain", 5.0):
        session_dir = tmp_path / "audit_sess"
        session_dir.mkdir()
        n = 1000
        items = [make_item(f"tl_{i:05d}", "activity_tag", i * 2.0, i * 2.0 + 1.5, i + 1) for i in range(n)]
        write_jsonl(session_dir / "timeline.jsonl", [i.to_json() for i in items])
        clock = FakeClock()
        session = ReviewSession(session_dir, clock=clock)
        rng = np.random.default_rng(5)
        for i in range(n):
            item = session.next_item("r1")
            op = ("accept", "adjust", "override")[int(rng.integers(0, 3))]
            if op == "accept":
                session.apply_action(ReviewerAction(item.timeline_id, "accept", "r1", dwell_ms=100))
            elif op == "adjust":
                session.apply_action(
                    ReviewerAction(
                        item.timeline_id, "adjust", "r1", dwell_ms=100,
                        new_t_start=item.t_start + 0.1, new_t_end=item.t_end + 0.2,
                    )
                )
            else:
                session.apply_action(
                    ReviewerAction(
                        item.timeline_id, "override", "r1", dwell_ms=100,
                        new_action="none", rationale_code="FP",
                    )
                )
            clock.advance(1.0)
        records = session.audit
        assert len(records) == n
        ok, bad = verify_audit_chain(records)
        assert ok and bad is None

        # flipping any single byte of any record is detected: every record's
        # flip must break its own digest (the mechanism verification uses),
        # and a seeded sample runs the full-chain verifier end to end
        from flagline.canonical import digest_obj

        rng = np.random.default_rng(11)
        full_check = set(rng.choice(n, size=128, replace=False).tolist())
        for idx in range(n):
            serialized = bytearray(canonical_json(records[idx]).encode("utf-8"))
            pos = int(rng.integers(0, len(serialized)))
            flip = serialized.copy()
            flip[pos] ^= 0x01
            try:
                mutated = json.loads(flip.decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                continue  # unparseable tampering is trivially detected
            if mutated == records[idx]:
                continue  # flip inside an escape that decodes identically
            body = {k: v for k, v in mutated.items() if k != "record_digest"}
            locally_consistent = (
                mutated.get("record_digest") == digest_obj(body)
                and body.get("item_hash") == digest_obj(body.get("pre_state", {}))
                and mutated.get("prev_record_digest") == records[idx].get("prev_record_digest")
                and mutated.get("seq") == records[idx].get("seq")
            )
            assert not locally_consistent, f"record {idx}: byte flip at {pos} not detectable"
            if idx in full_check:
                tampered = records[:idx] + [mutated] + records[idx + 1 :]
                ok, _ = verify_audit_chain(tampered)
                assert not ok

        # replay: every pre-state is recoverable from the chain alone
        firsts = replay_prestates(records)
        assert len(firsts) == n
        originals = {i.timeline_id: i for i in items}
        for tid, pre in firsts.items():
            assert pre["t_start"] == originals[tid].t_start
            assert pre["status"] == "pending"


# ---------------------------------------------------------------------------
# 8. pipeline determinism across worker counts
# ---------------------------------------------------------------------------

def test_acceptance_pipeline_determinism(tmp_path):
    with Budget("pipeline-determinism", 120.0):
        digests = {}
        for workers, name in ((1, "w1"), (8, "w8")):
            root = tmp_path / name
            generate_session(root, duration=180.0, seed=5)
            config = PipelineConfig.load(root / "config.json")
            config.workers = workers
            run_pipeline(config)
            session = Path(config.session_dir)
            digests[name] = {
                str(p.relative_to(session)): file_sha256(p)
                for p in sorted(session.rglob("*"))
                if p.is_file() and p.name != "status.json"
            }
        assert digests["w1"].keys() == digests["w8"].keys()
        diffs = [k for k in digests["w1"] if digests["w1"][k] != digests["w8"][k]]
        assert diffs == [], f"artifacts differ across worker counts: {diffs[:5]}"


# ---------------------------------------------------------------------------
# 9. clap anchors
# ---------------------------------------------------------------------------

def test_acceptance_clap_anchors():
    with Budget("clap-anchors", 10.0):
        sr = 16000
        rng = np.random.default_rng(0)

        def impulses(times, duration=5.0):
            x = np.zeros(int(duration * sr))
            for t in times:
                i = int(t * sr)
                x[i : i + int(0.005 * sr)] += 0.8 * rng.standard_normal(int(0.005 * sr))
            return x

        anchors = detect_claps(impulses([2.000, 2.500]), sr)
        assert len(anchors) == 2
        assert abs(anchors[0].t_start - 2.000) <= 0.020
        assert abs(anchors[1].t_start - 2.500) <= 0.020

        merged = detect_claps(impulses([2.000, 2.200]), sr)
        assert len(merged) == 1

        assert detect_claps(np.zeros(sr * 3), sr) == []
