"""Content-addressed ingest: object store, asset manifests, session ledger.

Every raw asset is stored once under its SHA-256 digest; re-ingesting
identical bytes is a no-op that returns the existing manifest. Sealing a
session produces a ledger whose digest covers the canonically sorted
entry list, so any later mutation of a size, hash or mtime is detectable.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import BinaryIO, Iterator

from .canonical import canonical_json, digest_obj, sha256_hex

MEDIA_KINDS = ("video_raster_bundle", "audio_pcm", "journal")


class IngestError(Exception):
    pass


class ConsentMissing(IngestError):
    """Journal absent or consent_ack false; the session cannot proceed."""


class IoFailure(IngestError):
    pass


class EmptySession(IngestError):
    pass


class LedgerMismatch(IngestError):
    pass


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass
class SessionJournal:
    session_id: str
    free_text_notes: str = ""
    device_id: str = ""
    frame_rate: float = 30.0
    lens_model: str | None = None
    local_clock_offset: float = 0.0
    consent_ack: bool = False
    device_logs: dict = field(default_factory=dict)  # opaque QC payload, never consumed

    def validate(self) -> None:
        if self.frame_rate <= 0:
            raise IngestError(f"frame_rate must be > 0, got {self.frame_rate}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "SessionJournal":
        known = {f for f in cls.__dataclass_fields__}
        j = cls(**{k: v for k, v in obj.items() if k in known})
        j.validate()
        return j


@dataclass
class AssetManifest:
    asset_id: str
    content_hash: str
    byte_size: int
    mtime: str
    media_kind: str
    ingest_time: str

    def validate(self) -> None:
        if len(self.content_hash) != 64 or any(c not in "0123456789abcdef" for c in self.content_hash):
            raise IngestError(f"bad content hash: {self.content_hash!r}")
        if self.byte_size < 0:
            raise IngestError("byte_size must be >= 0")
        if self.media_kind not in MEDIA_KINDS:
            raise IngestError(f"unknown media_kind {self.media_kind!r}")

    def to_json(self) -> dict:
        return asdict(self)


class ObjectStore:
    """Local content-addressed store: objects/<hash[:2]>/<hash>, manifests/<asset_id>.json.

    Writes go through a temp file and an atomic rename so concurrent
    ingest of distinct assets never exposes partial objects.
    """

    def __init__(self, root):
        self.root = Path(root)
        (self.root / "objects").mkdir(parents=True, exist_ok=True)
        (self.root / "manifests").mkdir(parents=True, exist_ok=True)

    def object_path(self, content_hash: str) -> Path:
        return self.root / "objects" / content_hash[:2] / content_hash

    def manifest_path(self, asset_id: str) -> Path:
        return self.root / "manifests" / f"{asset_id}.json"

    def has_object(self, content_hash: str) -> bool:
        return self.object_path(content_hash).exists()

    def put_object(self, content_hash: str, data: bytes) -> None:
        dest = self.object_path(content_hash)
        if dest.exists():
            return
        dest.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=dest.parent, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, dest)
        except OSError as exc:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise IoFailure(str(exc)) from exc

    def get_object(self, content_hash: str) -> bytes:
        path = self.object_path(content_hash)
        if not path.exists():
            raise IoFailure(f"no object {content_hash}")
        return path.read_bytes()

    def write_manifest(self, manifest: AssetManifest) -> None:
        path = self.manifest_path(manifest.asset_id)
        path.write_text(canonical_json(manifest.to_json()), encoding="utf-8")

    def read_manifest(self, asset_id: str) -> AssetManifest | None:
        path = self.manifest_path(asset_id)
        if not path.exists():
            return None
        return AssetManifest(**json.loads(path.read_text(encoding="utf-8")))

    def manifests(self) -> Iterator[AssetManifest]:
        for path in sorted((self.root / "manifests").glob("*.json")):
            yield AssetManifest(**json.loads(path.read_text(encoding="utf-8")))


class IngestSession:
    """Ingest context for one session: journal gate, manifests, ledger."""

    def __init__(self, store: ObjectStore, journal: SessionJournal, now=utc_now):
        journal.validate()
        self.store = store
        self.journal = journal
        self.session_id = journal.session_id
        self._now = now

    def _require_consent(self) -> None:
        if not self.journal.consent_ack:
            raise ConsentMissing(f"session {self.session_id}: consent_ack is not true")

    def ingest_asset(
        self,
        stream: BinaryIO | bytes,
        media_kind: str,
        asset_id: str,
        mtime: str | None = None,
    ) -> AssetManifest:
        """Store a byte stream under its content hash; idempotent on duplicates."""
        self._require_consent()
        data = stream if isinstance(stream, bytes) else stream.read()
        content_hash = sha256_hex(data)

        existing = self.store.read_manifest(asset_id)
        if existing is not None and existing.content_hash == content_hash:
            return existing

        manifest = AssetManifest(
            asset_id=asset_id,
            content_hash=content_hash,
            byte_size=len(data),
            mtime=mtime or self._now(),
            media_kind=media_kind,
            ingest_time=self._now(),
        )
        manifest.validate()
        self.store.put_object(content_hash, data)
        self.store.write_manifest(manifest)
        return manifest

    def seal_ledger(self, provenance_stages=("project", "segment", "detect", "fuse", "review", "export")) -> dict:
        """Build the checksummed session ledger over all ingested assets."""
        entries = []
        for m in self.store.manifests():
            entries.append(
                {
                    "asset_id": m.asset_id,
                    "content_hash": m.content_hash,
                    "byte_size": m.byte_size,
                    "mtime": m.mtime,
                }
            )
        if not entries:
            raise EmptySession(f"session {self.session_id}: no assets ingested")
        entries.sort(key=lambda e: e["asset_id"])
        ledger = {
            "session_id": self.session_id,
            "entries": entries,
            "ledger_digest": digest_obj(entries),
            "pipeline_provenance": {stage: None for stage in provenance_stages},
        }
        return ledger


def verify_ledger(ledger: dict) -> bool:
    """Recompute the digest over entries; False means tampering."""
    return digest_obj(ledger.get("entries", [])) == ledger.get("ledger_digest")


def fill_provenance(ledger: dict, stage: str, version: str, details: dict | None = None) -> None:
    """Fill a provenance placeholder. Existing fill-ins are never deleted."""
    prov = ledger.setdefault("pipeline_provenance", {})
    if prov.get(stage) is not None:
        return
    entry = {"version": version}
    entry.update(details or {})
    prov[stage] = entry


def write_ledger(path, ledger: dict) -> None:
    Path(path).write_text(canonical_json(ledger), encoding="utf-8")


def read_ledger(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
