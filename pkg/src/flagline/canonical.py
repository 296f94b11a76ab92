"""Canonical serialization and digest helpers.

Every digest in the project (asset hashes, ledger digests, audit chains)
is SHA-256 over the canonical JSON form: UTF-8, sorted keys, no
insignificant whitespace. Keeping this in one place is what makes the
artifacts bit-reproducible.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any, Iterable, Iterator

ZERO_DIGEST = "0" * 64


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(obj: Any) -> bytes:
    return canonical_json(obj).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_obj(obj: Any) -> str:
    return sha256_hex(canonical_bytes(obj))


def round_floats(obj: Any, ndigits: int = 6) -> Any:
    """Recursively round floats so serialized artifacts are stable."""
    if isinstance(obj, float):
        return round(obj, ndigits)
    if isinstance(obj, dict):
        return {k: round_floats(v, ndigits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, ndigits) for v in obj]
    return obj


def write_jsonl(path, rows: Iterable[dict], ndigits: int | None = 6) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            if ndigits is not None:
                row = round_floats(row, ndigits)
            fh.write(canonical_json(row))
            fh.write("\n")


def read_jsonl(path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
