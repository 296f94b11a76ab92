"""Review-time metrics: dwell, RTR, bootstrap CIs, FP burden, savings model.

Dwell is summed over play intervals on flagged items with the player
active; seeks, idle and QA revisits are excluded. An interval closed by
an explicit pause/seek/idle/action event counts in full; an abandoned
interval (log ends, or a new item starts without a terminator) counts at
most the idle threshold. RTR is 1 - T_HITL / T_watch_all and may go
negative when overhead exceeds the baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IDLE_GAP_S = 30.0

EVENT_TYPES = ("play", "pause", "seek", "idle", "action")
TERMINATORS = ("pause", "seek", "idle", "action")


class MetricsError(Exception):
    pass


class UnorderedLog(MetricsError):
    pass


class ZeroDuration(MetricsError):
    pass


class TooFewSamples(MetricsError):
    pass


class FactorOutOfRange(MetricsError):
    pass


@dataclass
class ReviewLogEntry:
    session_id: str
    reviewer_id: str
    event: str  # play | pause | seek | idle | action
    t_wall: float  # epoch seconds
    position: float = 0.0
    timeline_id: str | None = None
    phase: str = "review"  # review | qa

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "reviewer_id": self.reviewer_id,
            "event": self.event,
            "t_wall": self.t_wall,
            "position": self.position,
            "timeline_id": self.timeline_id,
            "phase": self.phase,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ReviewLogEntry":
        return cls(
            session_id=obj["session_id"],
            reviewer_id=obj["reviewer_id"],
            event=obj["event"],
            t_wall=obj["t_wall"],
            position=obj.get("position", 0.0),
            timeline_id=obj.get("timeline_id"),
            phase=obj.get("phase", "review"),
        )


def compute_dwell(entries: list[ReviewLogEntry], idle_gap_s: float = IDLE_GAP_S) -> float:
    """T_HITL seconds from one reviewer's ordered event log.

    A play opens an interval on its item; an explicit terminator
    (pause/seek/idle/action) closes it and the whole stretch counts. A
    stretch that ends without a terminator (another play, a QA row, end
    of log) counts at most ``idle_gap_s``. Plays with no timeline_id are
    off-flag and contribute nothing.
    """
    last_wall = None
    for e in entries:
        if e.event not in EVENT_TYPES:
            raise MetricsError(f"unknown event {e.event!r}")
        if last_wall is not None and e.t_wall < last_wall:
            raise UnorderedLog(f"event at {e.t_wall} after {last_wall}")
        last_wall = e.t_wall

    total = 0.0
    anchor: float | None = None
    open_tid: str | None = None

    for e in entries:
        if e.phase == "qa":
            if anchor is not None and open_tid is not None:
                total += min(e.t_wall - anchor, idle_gap_s)
            anchor, open_tid = None, None
            continue
        if e.event == "play":
            if anchor is not None and open_tid is not None:
                # previous stretch had no terminator: idle-capped
                total += min(e.t_wall - anchor, idle_gap_s)
            anchor, open_tid = e.t_wall, e.timeline_id
        elif e.event in TERMINATORS:
            if anchor is not None and open_tid is not None:
                total += e.t_wall - anchor
            anchor, open_tid = None, None
    # a still-open interval has unknown extent past the last event
    return total


def rtr(t_hitl: float, t_watch_all: float) -> float:
    """Review-time reduction; negative when overhead exceeds the baseline."""
    if t_watch_all <= 0:
        raise ZeroDuration("t_watch_all must be > 0")
    return 1.0 - t_hitl / t_watch_all


def bootstrap_mean_ci(
    samples, level: float = 0.95, resamples: int = 10000, seed: int = 0
) -> tuple[float, float, float]:
    """Seeded percentile bootstrap of the mean: (mean, lo, hi).

    Resampling draws ``resamples`` index vectors one at a time from
    ``default_rng(seed)``, so the triple is reproducible bit-for-bit.
    """
    data = np.asarray(list(samples), dtype=np.float64)
    n = len(data)
    if n < 2:
        raise TooFewSamples("bootstrap needs at least 2 samples")
    rng = np.random.default_rng(seed)
    means = np.empty(resamples, dtype=np.float64)
    for i in range(resamples):
        idx = rng.integers(0, n, size=n)
        means[i] = data[idx].mean()
    alpha = (1.0 - level) / 2.0
    lo = float(np.percentile(means, 100.0 * alpha))
    hi = float(np.percentile(means, 100.0 * (1.0 - alpha)))
    return float(data.mean()), lo, hi


def fp_burden(reviewed_items: list[dict], duration_s: float) -> tuple[float, float]:
    """(FP minutes per video hour, FP occurrence rate).

    ``reviewed_items`` rows need t_start/t_end and disposition/rationale;
    an item counts as FP when overridden with rationale_code == "FP".
    """
    if duration_s <= 0:
        raise ZeroDuration("duration must be > 0")
    total = len(reviewed_items)
    fp_items = [
        r
        for r in reviewed_items
        if r.get("disposition") == "overridden" and r.get("rationale_code") == "FP"
    ]
    fp_minutes = sum((r["t_end"] - r["t_start"]) for r in fp_items) / 60.0
    hours = duration_s / 3600.0
    rate = len(fp_items) / total if total else 0.0
    return fp_minutes / hours, rate


DEFAULT_FACTORS = {
    "proprietary_format_support": 0.05,
    "chunked_navigation": 0.10,
    "idle_autoskip": 0.08,
    "governance_triage": 0.12,
}


def savings_model(factors: dict[str, float] | list[float]) -> dict:
    """Combine per-feature review-time savings multiplicatively.

    combined = 1 - prod(1 - f_i); compounding keeps the estimate below
    the naive sum, which is the conservative direction.
    """
    if isinstance(factors, dict):
        named = dict(factors)
    else:
        named = {f"feature_{i + 1}": f for i, f in enumerate(factors)}
    for name, f in named.items():
        if not (0.0 <= f < 1.0):
            raise FactorOutOfRange(f"{name}: factor {f} outside [0, 1)")
    remaining = 1.0
    for f in named.values():
        remaining *= 1.0 - f
    combined = 1.0 - remaining
    return {
        "factors": named,
        "per_feature_minutes": {name: 60.0 * f for name, f in named.items()},
        "combined_fraction": combined,
        "combined_minutes_per_hour": 60.0 * combined,
        "naive_sum_fraction": sum(named.values()),
    }


@dataclass
class SessionReport:
    session_id: str
    t_watch_all: float
    t_hitl: float
    rtr: float
    fp_minutes_per_hour: float
    fp_occurrence_rate: float
    review_volume_reduction: float | None = None
    domain: str = ""

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "t_watch_all": self.t_watch_all,
            "t_hitl": self.t_hitl,
            "rtr": self.rtr,
            "fp_minutes_per_hour": self.fp_minutes_per_hour,
            "fp_occurrence_rate": self.fp_occurrence_rate,
            "review_volume_reduction": self.review_volume_reduction,
            "domain": self.domain,
        }


def session_report(
    session_id: str,
    log_entries: list[ReviewLogEntry],
    duration_s: float,
    reviewed_items: list[dict] | None = None,
    rvr: float | None = None,
    domain: str = "",
) -> SessionReport:
    t_hitl = 0.0
    by_reviewer: dict[str, list[ReviewLogEntry]] = {}
    for e in log_entries:
        by_reviewer.setdefault(e.reviewer_id, []).append(e)
    for entries in by_reviewer.values():
        t_hitl += compute_dwell(entries)
    fp_min, fp_rate = fp_burden(reviewed_items or [], duration_s)
    return SessionReport(
        session_id=session_id,
        t_watch_all=duration_s,
        t_hitl=t_hitl,
        rtr=rtr(t_hitl, duration_s),
        fp_minutes_per_hour=fp_min,
        fp_occurrence_rate=fp_rate,
        review_volume_reduction=rvr,
        domain=domain,
    )


def simulate_dwell_batch(
    n_sessions: int,
    duration_s: float = 3600.0,
    mean_dwell_s: float = 2520.0,
    spread_s: float = 300.0,
    seed: int = 0,
) -> list[float]:
    """Symmetric dwell draws whose mean is exactly ``mean_dwell_s``.

    Offsets are drawn in +/- pairs so the sample mean is exact, which
    pins the batch-mean RTR for the simulation harness.
    """
    rng = np.random.default_rng(seed)
    dwells = []
    for _ in range(n_sessions // 2):
        offset = float(rng.uniform(0.0, spread_s))
        dwells.append(mean_dwell_s + offset)
        dwells.append(mean_dwell_s - offset)
    if n_sessions % 2:
        dwells.append(mean_dwell_s)
    return dwells


def simulate_session_log(
    session_id: str,
    dwell_s: float,
    reviewer_id: str = "sim",
    start_wall: float = 0.0,
    items: int = 10,
) -> list[ReviewLogEntry]:
    """A plausible flag-by-flag review log whose total dwell is dwell_s."""
    entries = []
    wall = start_wall
    per_item = dwell_s / items
    for i in range(items):
        tid = f"tl_{i + 1:05d}"
        entries.append(ReviewLogEntry(session_id, reviewer_id, "play", wall, i * 30.0, tid))
        wall += per_item
        entries.append(ReviewLogEntry(session_id, reviewer_id, "action", wall, i * 30.0 + per_item, tid))
        wall += 0.5  # navigation gap, not playing
    return entries


def format_savings_table(result: dict) -> str:
    """Human-readable savings table; one row per feature plus the compound."""
    total_label = "combined (compounded)"
    name_w = max(len(total_label), *(len(n) for n in result["factors"]))
    lines = []
    header = f"{'Feature'.ljust(name_w)}  {'Savings':>8}  {'Minutes saved (1h)':>18}"
    lines.append(header)
    lines.append("-" * len(header))
    for name, f in result["factors"].items():
        minutes = result["per_feature_minutes"][name]
        lines.append(f"{name.ljust(name_w)}  {100 * f:>7.1f}%  {minutes:>18.1f}")
    lines.append("-" * len(header))
    lines.append(
        f"{total_label.ljust(name_w)}  "
        f"{100 * result['combined_fraction']:>7.1f}%  {result['combined_minutes_per_hour']:>18.1f}"
    )
    return "\n".join(lines)
