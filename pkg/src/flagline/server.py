"""HTTP+JSON review API over stdlib http.server.

Endpoints (all session-scoped, snake_case JSON mirroring domain types):

    GET  /healthz
    GET  /sessions/{id}/timeline          -> items + skip_spans + finalized
    GET  /sessions/{id}/next?reviewer=    -> locked next item or {"done": true}
    POST /sessions/{id}/actions           -> ReviewerAction, returns audit record
    POST /sessions/{id}/qa                -> {"op": "draw"|"verdict", ...}
    GET  /sessions/{id}/audit             -> full chain + verification result
    POST /sessions/{id}/finalize          -> questionnaire, returns summary
    POST /sessions/{id}/log               -> client review-log entries (batched)
    GET  /sessions/{id}/media/<path>      -> static files with Range support

Sessions are directories under the served root; state mutations are
serialized per session by ReviewSession's internal lock.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .canonical import canonical_json
from .metrics import ReviewLogEntry
from .review import (
    InvalidTransition,
    MissingRationale,
    NoPairs,
    NotLocked,
    NothingAccepted,
    PendingItemsRemain,
    QuestionnaireInvalid,
    ReviewError,
    ReviewSession,
    ReviewerAction,
    SessionUnknown,
    compute_iaa,
    verify_audit_chain,
)

ERROR_STATUS = {
    SessionUnknown: 404,
    NotLocked: 409,
    InvalidTransition: 409,
    PendingItemsRemain: 409,
    NothingAccepted: 409,
    MissingRationale: 400,
    QuestionnaireInvalid: 400,
    NoPairs: 400,
}

MEDIA_TYPES = {
    ".json": "application/json",
    ".jsonl": "application/jsonl",
    ".ppm": "image/x-portable-pixmap",
    ".wav": "audio/wav",
}


class ReviewHub:
    """Lazy registry of ReviewSessions under one root directory."""

    def __init__(self, root, clock=None):
        self.root = Path(root)
        self.clock = clock
        self._sessions: dict[str, ReviewSession] = {}
        self._guard = threading.Lock()

    def session(self, session_id: str) -> ReviewSession:
        if not re.fullmatch(r"[A-Za-z0-9_.-]+", session_id):
            raise SessionUnknown(session_id)
        with self._guard:
            if session_id not in self._sessions:
                session_dir = self.root / session_id
                if not session_dir.is_dir():
                    raise SessionUnknown(session_id)
                kwargs = {"clock": self.clock} if self.clock else {}
                self._sessions[session_id] = ReviewSession(session_dir, **kwargs)
            return self._sessions[session_id]

    def session_dir(self, session_id: str) -> Path:
        return self.root / session_id


def _route(path: str):
    m = re.fullmatch(r"/sessions/([A-Za-z0-9_.-]+)/([a-z]+)(?:/(.*))?", path)
    if not m:
        return None
    return m.group(1), m.group(2), m.group(3)


class ReviewRequestHandler(BaseHTTPRequestHandler):
    hub: ReviewHub  # injected by make_server
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    # -- plumbing ------------------------------------------------------------

    def _send_json(self, obj, status=200):
        body = canonical_json(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, exc: Exception):
        status = 400
        for klass, code in ERROR_STATUS.items():
            if isinstance(exc, klass):
                status = code
                break
        self._send_json({"error": type(exc).__name__, "message": str(exc)}, status=status)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b"{}"
        return json.loads(raw.decode("utf-8") or "{}")

    # -- verbs ------------------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        parsed = urlparse(self.path)
        if parsed.path == "/healthz":
            self._send_json({"ok": True})
            return
        routed = _route(parsed.path)
        if not routed:
            self._send_json({"error": "NotFound", "message": parsed.path}, status=404)
            return
        session_id, endpoint, rest = routed
        try:
            if endpoint == "timeline":
                session = self.hub.session(session_id)
                self._send_json(
                    {
                        "session_id": session_id,
                        "items": [i.to_json() for i in sorted(session.items.values(), key=lambda i: i.priority_rank)],
                        "skip_spans": [s.to_json() for s in session.skips],
                        "finalized": session.finalized,
                    }
                )
            elif endpoint == "next":
                session = self.hub.session(session_id)
                reviewer = parse_qs(parsed.query).get("reviewer", ["anonymous"])[0]
                item = session.next_item(reviewer)
                if item is None:
                    self._send_json({"done": True})
                else:
                    self._send_json({"done": False, "item": item.to_json()})
            elif endpoint == "audit":
                session = self.hub.session(session_id)
                ok, bad_seq = verify_audit_chain(session.audit)
                self._send_json({"records": session.audit, "verified": ok, "first_bad_seq": bad_seq})
            elif endpoint == "media":
                self._serve_media(session_id, rest or "")
            else:
                self._send_json({"error": "NotFound", "message": endpoint}, status=404)
        except Exception as exc:  # noqa: BLE001 - surfaced as HTTP status
            self._send_error_json(exc)

    def do_POST(self):
        routed = _route(urlparse(self.path).path)
        if not routed:
            self._send_json({"error": "NotFound", "message": self.path}, status=404)
            return
        session_id, endpoint, _ = routed
        try:
            body = self._read_body()
            session = self.hub.session(session_id)
            if endpoint == "actions":
                record = session.apply_action(ReviewerAction.from_json(body))
                self._send_json({"ok": True, "audit_record": record})
            elif endpoint == "qa":
                self._handle_qa(session, body)
            elif endpoint == "finalize":
                summary = session.finalize(body.get("questionnaire", body))
                self._send_json({"ok": True, **summary})
            elif endpoint == "log":
                self._handle_log(session_id, body)
            else:
                self._send_json({"error": "NotFound", "message": endpoint}, status=404)
        except ReviewError as exc:
            self._send_error_json(exc)
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            self._send_json({"error": type(exc).__name__, "message": str(exc)}, status=400)

    # -- endpoint bodies ------------------------------------------------------------

    def _handle_qa(self, session: ReviewSession, body: dict):
        op = body.get("op", "draw")
        if op == "draw":
            sample = session.draw_qa_sample(
                fraction=float(body.get("fraction", 0.10)),
                seed=int(body.get("seed", 0)),
                reviewer_id=body.get("reviewer", "qa"),
            )
            self._send_json({"ok": True, "sample": sample})
        elif op == "verdict":
            session.record_qa_verdict(
                timeline_id=body["timeline_id"],
                reviewer_id=body.get("reviewer", "qa"),
                agree=bool(body["agree"]),
                dwell_ms=int(body.get("dwell_ms", 0)),
            )
            pairs = session.qa_agreement_pairs()
            iaa = None
            if pairs:
                try:
                    iaa = compute_iaa(pairs)
                except NoPairs:
                    iaa = None
            self._send_json({"ok": True, "verdicts": len(pairs), "iaa": iaa})
        else:
            self._send_json({"error": "BadRequest", "message": f"unknown qa op {op!r}"}, status=400)

    def _handle_log(self, session_id: str, body: dict):
        entries = body.get("entries", [])
        rows = [ReviewLogEntry.from_json({**e, "session_id": session_id}) for e in entries]
        log_dir = self.hub.session_dir(session_id) / "review"
        log_dir.mkdir(parents=True, exist_ok=True)
        with open(log_dir / "review_log.jsonl", "a", encoding="utf-8") as fh:
            for row in rows:
                fh.write(canonical_json(row.to_json()))
                fh.write("\n")
        self._send_json({"ok": True, "logged": len(rows)})

    def _serve_media(self, session_id: str, rel: str):
        base = self.hub.session_dir(session_id).resolve()
        target = (base / rel).resolve()
        if not str(target).startswith(str(base)) or not target.is_file():
            self._send_json({"error": "NotFound", "message": rel}, status=404)
            return
        data = target.read_bytes()
        content_type = MEDIA_TYPES.get(target.suffix, "application/octet-stream")
        range_header = self.headers.get("Range")
        if range_header:
            m = re.fullmatch(r"bytes=(\d*)-(\d*)", range_header.strip())
            if m:
                start = int(m.group(1)) if m.group(1) else 0
                end = int(m.group(2)) if m.group(2) else len(data) - 1
                end = min(end, len(data) - 1)
                chunk = data[start : end + 1]
                self.send_response(206)
                self.send_header("Content-Type", content_type)
                self.send_header("Content-Range", f"bytes {start}-{end}/{len(data)}")
                self.send_header("Content-Length", str(len(chunk)))
                self.send_header("Accept-Ranges", "bytes")
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(chunk)
                return
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Accept-Ranges", "bytes")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)


def make_server(root, host: str = "127.0.0.1", port: int = 0, clock=None) -> ThreadingHTTPServer:
    hub = ReviewHub(root, clock=clock)
    handler = type("BoundHandler", (ReviewRequestHandler,), {"hub": hub})
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(root, host: str = "127.0.0.1", port: int = 8765):
    server = make_server(root, host, port)
    print(f"review API on http://{host}:{server.server_address[1]} (root: {root})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
