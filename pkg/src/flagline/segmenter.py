"""Shard session streams into overlapping clips with lightweight descriptors.

Windows start at multiples of ``clip_len - overlap``; the final window is
anchored to end exactly at the stream duration. Descriptors (black-frame
ratio, frame-difference energy, RMS loudness) are pure functions of the
pixel/sample data so the clip ledger is byte-identical across runs and
worker counts.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .kernels import dark_fraction, mean_abs_luma_diff
from .media import pcm_to_float


class SegmenterError(Exception):
    pass


class BadConfig(SegmenterError):
    pass


class EmptyWindow(SegmenterError):
    pass


class TooFewFrames(SegmenterError):
    pass


VIEWS = ("erp", "front", "right", "back", "left")


@dataclass
class SegmenterConfig:
    clip_len: float = 60.0
    overlap: float = 2.5
    black_luma_threshold: int = 16
    black_pixel_fraction: float = 0.98
    silence_floor_dbfs: float = -90.0

    def validate(self) -> None:
        if not (0 < self.overlap < self.clip_len):
            raise BadConfig(f"need 0 < overlap < clip_len, got {self.overlap} / {self.clip_len}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "SegmenterConfig":
        cfg = cls(**obj)
        cfg.validate()
        return cfg


@dataclass
class ClipRecord:
    clip_id: str
    view: str
    t_start: float
    t_end: float
    fps: float
    resolution: str
    lens: str
    descriptors: dict

    def to_json(self) -> dict:
        return asdict(self)


def plan_windows(duration: float, config: SegmenterConfig) -> list[tuple[float, float]]:
    """Overlapping clip windows covering [0, duration]."""
    config.validate()
    if duration <= 0:
        raise BadConfig(f"duration must be > 0, got {duration}")
    stride = config.clip_len - config.overlap
    starts = [0.0]
    while starts[-1] + config.clip_len < duration:
        starts.append(starts[-1] + stride)
    windows = [(s, min(s + config.clip_len, duration)) for s in starts]
    # paranoia for float edge cases: a too-short tail folds into its predecessor
    if len(windows) >= 2 and windows[-1][1] - windows[-1][0] < config.overlap:
        windows.pop()
        windows[-1] = (windows[-1][0], duration)
    return windows


def compute_black_ratio(frames: list[np.ndarray], config: SegmenterConfig) -> float:
    """Fraction of frames that are essentially black."""
    if not frames:
        raise EmptyWindow("black_ratio needs at least one frame")
    black = 0
    for frame in frames:
        if dark_fraction(frame, config.black_luma_threshold) >= config.black_pixel_fraction:
            black += 1
    return black / len(frames)


def compute_motion_energy(frames: list[np.ndarray]) -> float:
    """Mean normalized luma difference over consecutive frame pairs."""
    if len(frames) < 2:
        raise TooFewFrames("motion energy needs at least two frames")
    total = 0.0
    for a, b in zip(frames, frames[1:]):
        total += mean_abs_luma_diff(a, b)
    return (total / (len(frames) - 1)) / 255.0


def compute_loudness(samples: np.ndarray, floor_dbfs: float = -90.0) -> float:
    """RMS level in dBFS of int16 (or normalized float) samples, clamped to the floor."""
    if len(samples) == 0:
        raise EmptyWindow("loudness needs at least one sample")
    x = pcm_to_float(samples) if samples.dtype == np.int16 else np.asarray(samples, dtype=np.float64)
    rms = math.sqrt(float(np.mean(x * x)))
    if rms <= 0.0:
        return floor_dbfs
    return max(20.0 * math.log10(rms), floor_dbfs)


def clip_id_for(session_id: str, view: str, index: int) -> str:
    return f"{session_id}_{view}_{index:06d}"


def describe_window(
    frames: list[np.ndarray],
    samples: np.ndarray,
    config: SegmenterConfig,
) -> dict:
    descriptors = {
        "black_ratio": compute_black_ratio(frames, config),
        "motion_energy": compute_motion_energy(frames) if len(frames) >= 2 else 0.0,
        "loudness": compute_loudness(samples, config.silence_floor_dbfs)
        if len(samples)
        else config.silence_floor_dbfs,
    }
    return descriptors
