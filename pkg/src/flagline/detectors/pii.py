"""Rule-based PII scanning over word-timed transcripts.

EMAIL/PHONE/ID hits come from the documented regular patterns below;
NAME/ADDRESS hits from policy dictionaries; CUSTOM from policy-supplied
patterns. Each character-span hit is mapped to the covering words' time
span, padded, and paired with a redaction plan (mute window by default).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class PiiError(Exception):
    pass


class PolicyInvalid(PiiError):
    pass


ENTITY_TYPES = ("NAME", "PHONE", "EMAIL", "ADDRESS", "ID", "CUSTOM")
REDACTION_PLANS = ("mute_window", "tone_replace", "text_overlay")

# documented patterns; ID covers SSN-style and prefixed serial numbers
EMAIL_RE = re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}")
PHONE_RE = re.compile(
    r"(?<!\d)(?:\+?\d{1,2}[-. ])?(?:\(\d{3}\)[-. ]?|\d{3}[-. ])?\d{3}[-. ]\d{4}(?!\d)"
)
ID_RE = re.compile(r"(?<![\w-])(?:\d{3}-\d{2}-\d{4}|[A-Z]{2}\d{6,})(?![\w-])")


@dataclass
class TranscriptWord:
    text: str
    t_start: float
    t_end: float


@dataclass
class TranscriptSegment:
    speaker: str
    words: list[TranscriptWord]
    source: str = "scripted"  # scripted | external

    def validate(self) -> None:
        times = [w.t_start for w in self.words] + [self.words[-1].t_end] if self.words else []
        last = -1.0
        for w in self.words:
            if w.t_start < last:
                raise PiiError("word times must be monotone non-decreasing")
            last = w.t_start
            if w.t_end < w.t_start:
                raise PiiError(f"word {w.text!r} has t_end < t_start")

    def to_json(self) -> dict:
        return {
            "speaker": self.speaker,
            "source": self.source,
            "words": [{"text": w.text, "t_start": w.t_start, "t_end": w.t_end} for w in self.words],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TranscriptSegment":
        seg = cls(
            speaker=obj["speaker"],
            words=[TranscriptWord(w["text"], w["t_start"], w["t_end"]) for w in obj["words"]],
            source=obj.get("source", "scripted"),
        )
        seg.validate()
        return seg


@dataclass
class PiiPolicy:
    names: list[str] = field(default_factory=list)
    address_terms: list[str] = field(default_factory=list)
    custom_patterns: dict[str, str] = field(default_factory=dict)
    pad_s: float = 0.25
    default_plan: str = "mute_window"

    def validate(self) -> None:
        if self.default_plan not in REDACTION_PLANS:
            raise PolicyInvalid(f"unknown redaction plan {self.default_plan!r}")
        if self.pad_s < 0:
            raise PolicyInvalid("pad_s must be >= 0")
        for label, pattern in self.custom_patterns.items():
            try:
                re.compile(pattern)
            except re.error as exc:
                raise PolicyInvalid(f"custom pattern {label!r}: {exc}") from exc

    @classmethod
    def from_json(cls, obj: dict) -> "PiiPolicy":
        p = cls(**obj)
        p.validate()
        return p


@dataclass
class PiiHit:
    entity_type: str
    char_start: int
    char_end: int
    t_start: float
    t_end: float
    confidence: float
    matched_text: str
    redaction_plan: str
    pad_s: float

    def to_json(self) -> dict:
        return {
            "entity_type": self.entity_type,
            "char_start": self.char_start,
            "char_end": self.char_end,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "confidence": self.confidence,
            "matched_text": self.matched_text,
            "redaction_plan": self.redaction_plan,
            "pad_s": self.pad_s,
        }


def _segment_text(segment: TranscriptSegment) -> tuple[str, list[tuple[int, int]]]:
    """Join words with single spaces, returning text and per-word char spans."""
    parts = []
    spans = []
    pos = 0
    for w in segment.words:
        if parts:
            pos += 1  # joining space
        spans.append((pos, pos + len(w.text)))
        parts.append(w.text)
        pos += len(w.text)
    return " ".join(parts), spans


def _word_boundary_pattern(terms: list[str]) -> re.Pattern | None:
    terms = [t for t in terms if t.strip()]
    if not terms:
        return None
    alts = "|".join(re.escape(t) for t in sorted(terms, key=len, reverse=True))
    return re.compile(rf"\b(?:{alts})\b", re.IGNORECASE)


def scan_pii(segments: list[TranscriptSegment], policy: PiiPolicy | None = None) -> list[PiiHit]:
    """Scan transcripts; hits are non-overlapping in char space per entity type."""
    policy = policy or PiiPolicy()
    policy.validate()

    scanners: list[tuple[str, re.Pattern]] = [
        ("EMAIL", EMAIL_RE),
        ("PHONE", PHONE_RE),
        ("ID", ID_RE),
    ]
    name_re = _word_boundary_pattern(policy.names)
    if name_re:
        scanners.append(("NAME", name_re))
    addr_re = _word_boundary_pattern(policy.address_terms)
    if addr_re:
        scanners.append(("ADDRESS", addr_re))
    for label, pattern in sorted(policy.custom_patterns.items()):
        scanners.append(("CUSTOM", re.compile(pattern)))

    hits: list[PiiHit] = []
    for segment in segments:
        segment.validate()
        text, word_spans = _segment_text(segment)
        for entity_type, pattern in scanners:
            for m in pattern.finditer(text):
                c0, c1 = m.span()
                if c1 == c0:
                    continue
                covered = [
                    i for i, (w0, w1) in enumerate(word_spans) if w0 < c1 and w1 > c0
                ]
                if not covered:
                    continue
                t0 = segment.words[covered[0]].t_start
                t1 = segment.words[covered[-1]].t_end
                hits.append(
                    PiiHit(
                        entity_type=entity_type,
                        char_start=c0,
                        char_end=c1,
                        t_start=max(0.0, t0 - policy.pad_s),
                        t_end=t1 + policy.pad_s,
                        confidence=1.0,
                        matched_text=m.group(),
                        redaction_plan=policy.default_plan,
                        pad_s=policy.pad_s,
                    )
                )
    hits.sort(key=lambda h: (h.t_start, h.entity_type, h.char_start))
    return hits
