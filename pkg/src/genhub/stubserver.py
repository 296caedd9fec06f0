"""Local stub implementing the storage and tracker HTTP APIs.

Serves the contribution workflow offline: POST /records accepts a
multipart archive and answers with a download URL it will itself serve,
POST /issues records tracker submissions. Failure injection (`fail_first`)
makes the first N uploads return a 500 so retry behavior is testable.
"""

from __future__ import annotations

import email
import email.policy
import hashlib
import json
import threading
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


@dataclass
class StubState:
    storage_token: str
    tracker_token: str
    fail_first: int = 0
    records: dict = field(default_factory=dict)
    issues: dict = field(default_factory=dict)
    upload_attempts: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class _Handler(BaseHTTPRequestHandler):
    state: StubState
    base_url: str

    def log_message(self, *args):  # silence request logging in tests
        pass

    def _send_json(self, code: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _bearer(self) -> str:
        auth = self.headers.get("Authorization", "")
        return auth.removeprefix("Bearer ").strip()

    def do_POST(self):
        if self.path == "/records":
            self._post_record()
        elif self.path == "/issues":
            self._post_issue()
        else:
            self._send_json(404, {"error": "not found"})

    def _post_record(self):
        state = self.state
        with state.lock:
            state.upload_attempts += 1
            if state.fail_first > 0:
                state.fail_first -= 1
                self._send_json(500, {"error": "injected failure"})
                return
        if self._bearer() != state.storage_token:
            self._send_json(401, {"error": "bad token"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length)
        data = _extract_multipart_file(self.headers.get("Content-Type", ""), body)
        if data is None:
            self._send_json(400, {"error": "expected multipart file field"})
            return
        record_id = uuid.uuid4().hex[:12]
        checksum = hashlib.sha256(data).hexdigest()
        with state.lock:
            state.records[record_id] = data
        self._send_json(
            201,
            {
                "record_id": record_id,
                "download_url": f"{self.base_url}/records/{record_id}/archive.zip",
                "checksum_sha256": checksum,
                "size_bytes": len(data),
            },
        )

    def _post_issue(self):
        state = self.state
        if self._bearer() != state.tracker_token:
            self._send_json(401, {"error": "bad token"})
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
        except json.JSONDecodeError:
            self._send_json(400, {"error": "bad json"})
            return
        issue_id = str(len(state.issues) + 1)
        with state.lock:
            state.issues[issue_id] = {"title": payload.get("title", ""), "body": payload.get("body", "")}
        self._send_json(201, {"issue_id": issue_id})

    def do_GET(self):
        parts = self.path.strip("/").split("/")
        if len(parts) == 3 and parts[0] == "records" and parts[2] == "archive.zip":
            data = self.state.records.get(parts[1])
            if data is None:
                self._send_json(404, {"error": "no such record"})
                return
            self.send_response(200)
            self.send_header("Content-Type", "application/zip")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
            return
        self._send_json(404, {"error": "not found"})


def _extract_multipart_file(content_type: str, body: bytes) -> bytes | None:
    if "multipart/form-data" not in content_type:
        return None
    message = email.message_from_bytes(
        f"Content-Type: {content_type}\r\nMIME-Version: 1.0\r\n\r\n".encode("utf-8") + body,
        policy=email.policy.HTTP,
    )
    if not message.is_multipart():
        return None
    for part in message.iter_parts():
        disposition = part.get("Content-Disposition", "")
        if 'name="file"' in disposition:
            return part.get_payload(decode=True)
    return None


class StorageTrackerStub:
    """In-process stub server; use as a context manager in tests and demos."""

    def __init__(self, storage_token: str = "stub-storage-token", tracker_token: str = "stub-tracker-token", fail_first: int = 0):
        self.state = StubState(storage_token=storage_token, tracker_token=tracker_token, fail_first=fail_first)
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        assert self._server is not None, "stub not started"
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "StorageTrackerStub":
        handler = type("BoundHandler", (_Handler,), {"state": self.state})
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        handler.base_url = f"http://127.0.0.1:{self._server.server_address[1]}"
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def __enter__(self) -> "StorageTrackerStub":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
