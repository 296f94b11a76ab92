"""Track-level age aggregation for minor-risk screening.

Per-frame age estimates oscillate, so the track age is the conservative
minimum; anything strictly below the adult threshold is flagged for
blur-and-review.
"""

from __future__ import annotations


class NoEstimates(Exception):
    pass


def aggregate_track_age(estimates: list[float], adult_threshold: float = 18.0) -> tuple[float, bool]:
    if not estimates:
        raise NoEstimates("no per-frame age estimates for track")
    track_age = min(estimates)
    return track_age, track_age < adult_threshold
