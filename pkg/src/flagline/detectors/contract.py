"""Uniform detector output contract.

Every detector family emits :class:`EvidenceItem` rows and nothing else;
fusion and review consume them without knowing which module produced
them. Reference implementations here are deterministic and swappable
for real models that honor the same schema.
"""

from __future__ import annotations

from dataclasses import dataclass, field

EVIDENCE_CLASSES = (
    "caption",
    "activity_tag",
    "person_track",
    "pii",
    "minor_risk",
    "nsfw",
    "scene_change",
    "high_motion",
    "idle",
    "clap_anchor",
)

SUGGESTED_ACTIONS = (
    "blur",
    "mute",
    "tone_replace",
    "text_overlay",
    "withhold",
    "blur_and_review",
    "skip",
    "none",
)

# classes that may legitimately carry no evidence URI
URI_EXEMPT_CLASSES = ("idle", "clap_anchor")


class ContractViolation(Exception):
    pass


@dataclass
class EvidenceItem:
    item_id: str
    clip_id: str
    view: str
    cls: str
    t_start: float
    t_end: float
    confidence: float
    geometry: dict | None = None
    payload: dict = field(default_factory=dict)
    evidence_uris: list[str] = field(default_factory=list)
    suggested_action: str = "none"

    def validate(self) -> None:
        if self.cls not in EVIDENCE_CLASSES:
            raise ContractViolation(f"{self.item_id}: unknown class {self.cls!r}")
        if self.t_start > self.t_end:
            raise ContractViolation(f"{self.item_id}: t_start > t_end")
        if not (0.0 <= self.confidence <= 1.0):
            raise ContractViolation(f"{self.item_id}: confidence {self.confidence} outside [0, 1]")
        if self.suggested_action not in SUGGESTED_ACTIONS:
            raise ContractViolation(f"{self.item_id}: bad action {self.suggested_action!r}")
        if not self.evidence_uris and self.cls not in URI_EXEMPT_CLASSES:
            raise ContractViolation(f"{self.item_id}: class {self.cls} requires evidence_uris")
        if self.geometry is not None:
            for key in ("x", "y", "w", "h"):
                if key not in self.geometry:
                    raise ContractViolation(f"{self.item_id}: geometry missing {key!r}")

    def to_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "clip_id": self.clip_id,
            "view": self.view,
            "class": self.cls,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "confidence": self.confidence,
            "geometry": self.geometry,
            "payload": self.payload,
            "evidence_uris": self.evidence_uris,
            "suggested_action": self.suggested_action,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EvidenceItem":
        item = cls(
            item_id=obj["item_id"],
            clip_id=obj["clip_id"],
            view=obj["view"],
            cls=obj["class"],
            t_start=obj["t_start"],
            t_end=obj["t_end"],
            confidence=obj["confidence"],
            geometry=obj.get("geometry"),
            payload=obj.get("payload", {}),
            evidence_uris=list(obj.get("evidence_uris", [])),
            suggested_action=obj.get("suggested_action", "none"),
        )
        item.validate()
        return item


def sort_key(item: EvidenceItem) -> tuple:
    return (item.clip_id, item.cls, item.t_start, item.item_id)
