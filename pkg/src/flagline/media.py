"""Decoded-media I/O: PPM frame sequences, PCM WAV, timing indexes.

The pipeline consumes sessions already decoded by an external
transcoder: frames as binary PPM (P6) files plus a ``frames.json``
timing index, audio as 16-bit mono WAV. Both formats are byte-exact to
read and write, which the provenance hashing relies on.
"""

from __future__ import annotations

import io
import json
import tarfile
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .canonical import canonical_json

PCM_SCALE = 32768.0


class MediaError(Exception):
    pass


def write_ppm(path, frame: np.ndarray) -> None:
    frame = np.asarray(frame, dtype=np.uint8)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise MediaError(f"expected (H, W, 3) uint8 raster, got {frame.shape}")
    h, w = frame.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(frame.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise MediaError(f"{path}: not a P6 PPM")
    # header: magic, width, height, maxval, single whitespace, raster
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1
    w, h, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise MediaError(f"{path}: unsupported maxval {maxval}")
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return raster.reshape(h, w, 3).copy()


def frame_name(index: int) -> str:
    return f"frame_{index:06d}.ppm"


def write_frame_dir(dirpath, frames, timestamps) -> None:
    """Write ``frame_%06d.ppm`` files plus the frames.json timing index."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    index = []
    for i, (frame, t) in enumerate(zip(frames, timestamps)):
        write_ppm(d / frame_name(i), frame)
        index.append({"index": i, "t_seconds": round(float(t), 6)})
    (d / "frames.json").write_text(canonical_json(index), encoding="utf-8")


def read_frame_index(dirpath) -> list[dict]:
    d = Path(dirpath)
    index = json.loads((d / "frames.json").read_text(encoding="utf-8"))
    return sorted(index, key=lambda e: e["index"])


def read_frame(dirpath, index: int) -> np.ndarray:
    return read_ppm(Path(dirpath) / frame_name(index))


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write mono 16-bit PCM. Float input is interpreted as [-1, 1)."""
    samples = np.asarray(samples)
    if samples.dtype != np.int16:
        pcm = np.clip(np.rint(samples * PCM_SCALE), -32768, 32767).astype(np.int16)
    else:
        pcm = samples
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read mono 16-bit PCM, returning (int16 samples, sample_rate)."""
    with wave.open(str(path), "rb") as wf:
        if wf.getsampwidth() != 2 or wf.getnchannels() != 1:
            raise MediaError(f"{path}: expected mono 16-bit PCM")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    return np.frombuffer(raw, dtype=np.int16).copy(), rate


def pcm_to_float(pcm: np.ndarray) -> np.ndarray:
    return pcm.astype(np.float64) / PCM_SCALE


@dataclass
class MediaBundle:
    """One decoded session view: frames on disk plus timing and audio."""

    frame_dir: Path
    timestamps: list[float]
    audio: np.ndarray  # int16 mono
    sample_rate: int

    @property
    def frame_count(self) -> int:
        return len(self.timestamps)

    @property
    def duration(self) -> float:
        audio_dur = len(self.audio) / self.sample_rate if self.sample_rate else 0.0
        frame_dur = self.timestamps[-1] if self.timestamps else 0.0
        return max(audio_dur, frame_dur)

    def frame(self, index: int) -> np.ndarray:
        return read_frame(self.frame_dir, index)

    def frames_between(self, t0: float, t1: float) -> list[int]:
        """Indices of frames with t0 <= t < t1."""
        return [i for i, t in enumerate(self.timestamps) if t0 <= t < t1]

    @classmethod
    def open(cls, frame_dir, wav_path) -> "MediaBundle":
        index = read_frame_index(frame_dir)
        audio, rate = read_wav(wav_path)
        return cls(
            frame_dir=Path(frame_dir),
            timestamps=[e["t_seconds"] for e in index],
            audio=audio,
            sample_rate=rate,
        )


def deterministic_tar(root, arc_prefix: str = "") -> bytes:
    """Tar a directory with sorted names and zeroed metadata.

    Used to treat a frame-sequence directory as a single ingestable
    asset whose content hash depends only on file bytes and names.
    """
    root = Path(root)
    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w", format=tarfile.USTAR_FORMAT) as tf:
        for path in sorted(p for p in root.rglob("*") if p.is_file()):
            info = tarfile.TarInfo(arc_prefix + path.relative_to(root).as_posix())
            data = path.read_bytes()
            info.size = len(data)
            info.mtime = 0
            info.uid = info.gid = 0
            info.uname = info.gname = ""
            info.mode = 0o644
            tf.addfile(info, io.BytesIO(data))
    return buf.getvalue()
