"""Stage orchestration: ingest -> project -> segment -> detect -> fuse.

Stages run in dependency order behind a status file; a stage is skipped
on rerun when its recorded input digests still match (idempotent
resume). Clip-level work fans out over a thread pool and results are
merged in sort order, so every artifact is byte-identical for any
worker count. All randomness flows from config seeds; wall-clock
timestamps can be pinned via ``clock_start`` for fully reproducible
ledgers.
"""

from __future__ import annotations

import json
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import BUILD_ID
from .canonical import canonical_json, file_sha256, read_jsonl, write_jsonl
from .detectors.suite import SuiteConfig, load_evidence, run_suite
from .detectors.tracker import TrackerParams
from .fusion import FusionPolicy, build_timeline
from .geometry import (
    FisheyeLayout,
    ViewSpec,
    build_dewarp_map,
    build_view_map,
    apply_map,
    default_views,
)
from .ingest import (
    IngestSession,
    ObjectStore,
    SessionJournal,
    fill_provenance,
    read_ledger,
    write_ledger,
)
from .media import (
    MediaBundle,
    deterministic_tar,
    frame_name,
    read_frame_index,
    read_ppm,
    write_ppm,
)
from .kernels import bilinear_sample
from .segmenter import ClipRecord, SegmenterConfig, clip_id_for, describe_window, plan_windows

STAGES = ("ingest", "project", "segment", "detect", "fuse")


class PipelineError(Exception):
    pass


class ConfigInvalid(PipelineError):
    pass


class StageFailed(PipelineError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    session_id: str
    raw_dir: Path
    session_dir: Path
    store_root: Path
    fixtures: Path | None = None
    external_detectors: Path | None = None
    workers: int = 1
    seeds: dict = field(default_factory=lambda: {"qa": 7, "bootstrap": 1234})
    clock_start: str | None = None
    erp_width: int = 256
    erp_height: int = 128
    view_size: int = 96
    layout_path: Path | None = None
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    tracker: TrackerParams = field(default_factory=TrackerParams)
    fusion: FusionPolicy = field(default_factory=FusionPolicy)

    def validate(self) -> None:
        if self.workers < 1:
            raise ConfigInvalid("workers must be >= 1")
        if not Path(self.raw_dir).exists():
            raise ConfigInvalid(f"raw_dir {self.raw_dir} does not exist")
        if self.fixtures and not Path(self.fixtures).exists():
            raise ConfigInvalid(f"fixtures {self.fixtures} does not exist")
        self.segmenter.validate()
        self.tracker.validate()

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        proj = obj.get("projection", {})
        cfg = cls(
            session_id=obj["session_id"],
            raw_dir=Path(obj["raw_dir"]),
            session_dir=Path(obj["session_dir"]),
            store_root=Path(obj["store_root"]),
            fixtures=Path(obj["fixtures"]) if obj.get("fixtures") else None,
            external_detectors=Path(obj["external_detectors"]) if obj.get("external_detectors") else None,
            workers=int(obj.get("workers", 1)),
            seeds=obj.get("seeds", {"qa": 7, "bootstrap": 1234}),
            clock_start=obj.get("clock_start"),
            erp_width=int(proj.get("erp_width", 256)),
            erp_height=int(proj.get("erp_height", 128)),
            view_size=int(proj.get("view_size", 96)),
            layout_path=Path(proj["layout"]) if proj.get("layout") else None,
            segmenter=SegmenterConfig.from_json(obj.get("segmenter", {})),
            tracker=TrackerParams.from_json(obj.get("tracker", {"iou_threshold": 0.3, "age_out_frames": 30, "appearance_weight": 0.25})),
            fusion=FusionPolicy.from_json(obj.get("fusion", {})),
        )
        cfg.validate()
        return cfg

    def now(self) -> str:
        if self.clock_start:
            return self.clock_start
        from .ingest import utc_now

        return utc_now()


# ---------------------------------------------------------------------------
# stage status bookkeeping
# ---------------------------------------------------------------------------

def _status_path(config: PipelineConfig) -> Path:
    return Path(config.session_dir) / "status.json"


def load_status(config: PipelineConfig) -> dict:
    path = _status_path(config)
    if path.exists():
        return json.loads(path.read_text(encoding="utf-8"))
    return {}


def save_status(config: PipelineConfig, status: dict) -> None:
    path = _status_path(config)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(status), encoding="utf-8")


def _digest_paths(paths: list[Path]) -> dict[str, str]:
    digests = {}
    for p in sorted(paths):
        if p.is_file():
            digests[str(p)] = file_sha256(p)
    return digests


def _config_digest(config: PipelineConfig, stage: str) -> str:
    from .canonical import digest_obj

    payload = {
        "stage": stage,
        "erp": [config.erp_width, config.erp_height, config.view_size],
        "segmenter": config.segmenter.to_json(),
        "tracker": config.tracker.to_json(),
        "fusion": config.fusion.to_json(),
        "seeds": config.seeds,
    }
    return digest_obj(payload)


def stage_inputs(config: PipelineConfig, stage: str) -> dict[str, str]:
    """Digests of everything a stage actually consumes (ledger excluded:
    provenance fill-ins from later stages must not invalidate reruns)."""
    raw = Path(config.raw_dir)
    session = Path(config.session_dir)
    files: list[Path] = []
    if stage == "ingest":
        files = list(raw.rglob("*"))
    elif stage == "project":
        files = list((raw / "frames").glob("*"))
        if config.layout_path:
            files.append(Path(config.layout_path))
        else:
            files.append(raw / "fisheye_layout.json")
    elif stage == "segment":
        files = list(session.glob("views/*/*")) + [session / "audio.wav"]
    elif stage == "detect":
        files = [session / "clips.jsonl", session / "audio.wav"]
        files += list(session.glob("views/*/*"))
        if config.fixtures:
            fixtures = Path(config.fixtures)
            files += list(fixtures.glob("*.json")) if fixtures.is_dir() else [fixtures]
        if config.external_detectors:
            files += list(Path(config.external_detectors).glob("*.jsonl"))
    elif stage == "fuse":
        files = sorted((session / "detect").glob("*.jsonl")) + [session / "clips.jsonl"]
    digests = _digest_paths([p for p in files if p.is_file()])
    digests["__config__"] = _config_digest(config, stage)
    return digests


def stage_outputs(config: PipelineConfig, stage: str) -> dict[str, str]:
    """Digests of a stage's key artifacts, recorded in StageStatus."""
    from .canonical import digest_obj

    session = Path(config.session_dir)
    files: list[Path] = []
    if stage == "ingest":
        # only the sealed core: provenance fill-ins mutate the file later
        digests = {}
        ledger_path = session / "ledger.json"
        if ledger_path.exists():
            ledger = read_ledger(ledger_path)
            digests["ledger.core"] = digest_obj(
                {k: ledger.get(k) for k in ("session_id", "entries", "ledger_digest")}
            )
        digests.update(_digest_paths([session / "session.json"]))
        return digests
    elif stage == "project":
        files = list(session.glob("views/*/frames.json")) + [session / "audio.wav"]
    elif stage == "segment":
        files = [session / "clips.jsonl"]
    elif stage == "detect":
        files = sorted((session / "detect").glob("*.jsonl"))
    elif stage == "fuse":
        files = [
            session / "timeline.jsonl",
            session / "skips.jsonl",
            session / "suppressed.jsonl",
            session / "policy.json",
        ]
    return _digest_paths([p for p in files if p.is_file()])


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_ingest(config: PipelineConfig) -> dict:
    raw = Path(config.raw_dir)
    session_dir = Path(config.session_dir)
    session_dir.mkdir(parents=True, exist_ok=True)
    journal = SessionJournal.from_json(
        json.loads((raw / "session.json").read_text(encoding="utf-8"))
    )
    store = ObjectStore(config.store_root)
    ingest = IngestSession(store, journal, now=config.now)

    frame_tar = deterministic_tar(raw / "frames")
    ingest.ingest_asset(frame_tar, "video_raster_bundle", "raw_frames", mtime=config.now())
    ingest.ingest_asset((raw / "audio.wav").read_bytes(), "audio_pcm", "audio", mtime=config.now())
    ingest.ingest_asset((raw / "session.json").read_bytes(), "journal", "journal", mtime=config.now())
    ledger = ingest.seal_ledger()
    ledger_path = session_dir / "ledger.json"
    if ledger_path.exists():
        # re-ingest of identical bytes keeps earlier provenance fill-ins
        old = read_ledger(ledger_path)
        if old.get("entries") == ledger["entries"]:
            for stage_name, value in old.get("pipeline_provenance", {}).items():
                if value is not None:
                    ledger["pipeline_provenance"][stage_name] = value
    write_ledger(ledger_path, ledger)
    (session_dir / "session.json").write_text(canonical_json(journal.to_json()), encoding="utf-8")
    return {"assets": len(ledger["entries"])}


def stage_project(config: PipelineConfig) -> dict:
    raw = Path(config.raw_dir)
    session_dir = Path(config.session_dir)
    layout_path = config.layout_path or (raw / "fisheye_layout.json")
    layout = FisheyeLayout.from_json(json.loads(Path(layout_path).read_text(encoding="utf-8")))

    index = read_frame_index(raw / "frames")
    sample = read_ppm(raw / "frames" / frame_name(index[0]["index"]))
    layout.validate(sample.shape[1], sample.shape[0])

    dewarp_map = build_dewarp_map(layout, config.erp_width, config.erp_height)
    views = default_views(config.view_size)
    view_maps = {v.name: build_view_map(v, config.erp_width, config.erp_height) for v in views}

    for view in ["erp"] + [v.name for v in views]:
        (session_dir / "views" / view).mkdir(parents=True, exist_ok=True)

    def project_frame(entry):
        fish = read_ppm(raw / "frames" / frame_name(entry["index"]))
        erp = apply_map(fish, dewarp_map, wrap_x=False)
        write_ppm(session_dir / "views" / "erp" / frame_name(entry["index"]), erp)
        erp_f = erp.astype(np.float64)
        for name, vmap in view_maps.items():
            sampled = bilinear_sample(erp_f, vmap.xs, vmap.ys, wrap_x=True)
            out = np.clip(np.rint(sampled), 0, 255).astype(np.uint8)
            write_ppm(
                session_dir / "views" / name / frame_name(entry["index"]),
                out.reshape(vmap.shape[0], vmap.shape[1], 3),
            )
        return entry

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(project_frame, index))
    else:
        for entry in index:
            project_frame(entry)

    # one-to-one time mapping: every view inherits the raw timing index
    for view in ["erp"] + [v.name for v in views]:
        (session_dir / "views" / view / "frames.json").write_text(
            canonical_json(index), encoding="utf-8"
        )
    shutil.copyfile(raw / "audio.wav", session_dir / "audio.wav")

    ledger_path = session_dir / "ledger.json"
    if ledger_path.exists():
        ledger = read_ledger(ledger_path)
        fill_provenance(ledger, "project", BUILD_ID, {"erp": [config.erp_width, config.erp_height]})
        write_ledger(ledger_path, ledger)
    return {"frames": len(index), "views": 5}


def stage_segment(config: PipelineConfig) -> dict:
    session_dir = Path(config.session_dir)
    views = sorted(p.name for p in (session_dir / "views").iterdir() if p.is_dir())
    bundles = {v: MediaBundle.open(session_dir / "views" / v, session_dir / "audio.wav") for v in views}
    duration = max(b.duration for b in bundles.values())
    windows = plan_windows(duration, config.segmenter)

    units = [(view, idx, w) for view in views for idx, w in enumerate(windows)]

    def describe(unit):
        view, idx, (t0, t1) = unit
        bundle = bundles[view]
        indices = bundle.frames_between(t0, t1)
        frames = [bundle.frame(i) for i in indices]
        sr = bundle.sample_rate
        samples = bundle.audio[int(round(t0 * sr)) : int(round(t1 * sr))]
        descriptors = describe_window(frames, samples, config.segmenter)
        if frames:
            h, w = frames[0].shape[:2]
            resolution = f"{w}x{h}"
        else:
            resolution = "0x0"
        if len(indices) >= 2:
            span = bundle.timestamps[indices[-1]] - bundle.timestamps[indices[0]]
            fps = round((len(indices) - 1) / span, 3) if span > 0 else 0.0
        else:
            fps = 0.0
        record = ClipRecord(
            clip_id=clip_id_for(config.session_id, view, idx),
            view=view,
            t_start=t0,
            t_end=t1,
            fps=fps,
            resolution=resolution,
            lens="fisheye" if view == "erp" else "rectilinear",
            descriptors=descriptors,
        )
        return (view, idx), record

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = dict(pool.map(describe, units))
    else:
        results = dict(describe(u) for u in units)

    records = [results[k] for k in sorted(results)]
    write_jsonl(session_dir / "clips.jsonl", [r.to_json() for r in records])

    ledger_path = session_dir / "ledger.json"
    if ledger_path.exists():
        ledger = read_ledger(ledger_path)
        fill_provenance(ledger, "segment", BUILD_ID, {"thresholds": config.segmenter.to_json()})
        write_ledger(ledger_path, ledger)
    return {"clips": len(records), "windows": len(windows)}


def load_clips(session_dir) -> list[ClipRecord]:
    return [
        ClipRecord(**row) for row in read_jsonl(Path(session_dir) / "clips.jsonl")
    ]


def stage_detect(config: PipelineConfig) -> dict:
    session_dir = Path(config.session_dir)
    clips = load_clips(session_dir)
    fixture = {}
    if config.fixtures:
        from .detectors.scripted import load_fixture

        fixture = load_fixture(config.fixtures)
    cfg = SuiteConfig(tracker=config.tracker, external_dir=config.external_detectors)
    counts = run_suite(session_dir, clips, fixture, cfg, workers=config.workers)

    ledger_path = session_dir / "ledger.json"
    if ledger_path.exists():
        ledger = read_ledger(ledger_path)
        fill_provenance(ledger, "detect", BUILD_ID, {"thresholds": config.tracker.to_json()})
        write_ledger(ledger_path, ledger)
    return counts


def stage_fuse(config: PipelineConfig) -> dict:
    session_dir = Path(config.session_dir)
    clips = load_clips(session_dir)
    evidence = load_evidence(session_dir)
    duration = max((c.t_end for c in clips), default=0.0)
    items, skips, suppressed = build_timeline(evidence, clips, config.fusion, duration=duration)
    write_jsonl(session_dir / "timeline.jsonl", [i.to_json() for i in items])
    write_jsonl(session_dir / "skips.jsonl", [s.to_json() for s in skips])
    write_jsonl(session_dir / "suppressed.jsonl", suppressed)
    (session_dir / "policy.json").write_text(
        canonical_json(config.fusion.to_json()), encoding="utf-8"
    )

    ledger_path = session_dir / "ledger.json"
    if ledger_path.exists():
        ledger = read_ledger(ledger_path)
        fill_provenance(
            ledger,
            "fuse",
            BUILD_ID,
            {"thresholds": {c: config.fusion.threshold_for(c) for c in ("pii", "minor_risk", "nsfw")}},
        )
        write_ledger(ledger_path, ledger)
    return {"timeline_items": len(items), "skip_spans": len(skips), "suppressed": len(suppressed)}


STAGE_FNS = {
    "ingest": stage_ingest,
    "project": stage_project,
    "segment": stage_segment,
    "detect": stage_detect,
    "fuse": stage_fuse,
}


def run_pipeline(config: PipelineConfig, stages: list[str] | None = None, force: bool = False) -> list[dict]:
    """Run the batch stages in order, skipping stages whose inputs match."""
    config.validate()
    stages = list(stages or STAGES)
    for s in stages:
        if s not in STAGES:
            raise ConfigInvalid(f"unknown stage {s!r}")
    status = load_status(config)
    results = []
    for stage in STAGES:
        if stage not in stages:
            continue
        inputs = stage_inputs(config, stage)
        prior = status.get(stage)
        if (
            not force
            and prior
            and prior.get("state") == "done"
            and prior.get("input_digests") == inputs
            and prior.get("output_digests") == stage_outputs(config, stage)
        ):
            results.append({"stage": stage, "state": "skipped"})
            continue
        status[stage] = {"state": "running", "input_digests": inputs}
        save_status(config, status)
        try:
            summary = STAGE_FNS[stage](config)
        except Exception as exc:
            status[stage] = {"state": "failed", "input_digests": inputs, "error": str(exc)}
            save_status(config, status)
            raise StageFailed(stage, exc) from exc
        status[stage] = {
            "state": "done",
            "input_digests": stage_inputs(config, stage),
            "output_digests": stage_outputs(config, stage),
            "summary": summary,
        }
        save_status(config, status)
        results.append({"stage": stage, "state": "done", "summary": summary})
    return results
