"""In-process stand-in for the SMS gateway, speaking the same wire format.

Used by the test-suite and the demos::

    with MockGateway(script=[500, 500, "Success"]) as gw:
        config = GatewayConfig(url=gw.url, username="sandbox", api_key="k")
        ...
    gw.delivered  # one entry per distinct idempotency key that succeeded
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs

from .sms import IDEMPOTENCY_HEADER

STATUS_CODES = {
    "Success": 101,
    "InvalidPhoneNumber": 403,
    "InsufficientBalance": 405,
    "UserInBlacklist": 406,
    "InvalidSenderId": 404,
}


@dataclass
class RecordedRequest:
    path: str
    form: dict[str, str]
    headers: dict[str, str]


@dataclass
class MockGateway:
    """`script` entries are consumed one per request: an int is an HTTP error
    status, a string is the per-recipient status. Once exhausted, `default`
    applies. Replays of a delivered idempotency key return the original reply.
    """

    script: list = field(default_factory=list)
    default: object = "Success"
    requests: list[RecordedRequest] = field(default_factory=list)
    delivered: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self._lock = threading.Lock()
        self._replies: dict[str, dict] = {}
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/version1/messaging"

    def start(self) -> "MockGateway":
        gateway = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length).decode()
                form = {k: v[0] for k, v in parse_qs(raw).items()}
                code, payload = gateway._handle(self.path, form, dict(self.headers))
                data = json.dumps(payload).encode() if payload is not None else b""
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> "MockGateway":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def _handle(self, path: str, form: dict, headers: dict) -> tuple[int, dict | None]:
        with self._lock:
            self.requests.append(RecordedRequest(path, form, headers))
            key = headers.get(IDEMPOTENCY_HEADER) or headers.get(IDEMPOTENCY_HEADER.lower())
            if key and key in self._replies:
                return 201, self._replies[key]
            behaviour = self.script.pop(0) if self.script else self.default
            if isinstance(behaviour, int):
                return behaviour, {"error": f"HTTP {behaviour}"}
            if not headers.get("apiKey") or not form.get("username"):
                return 401, {"error": "missing credentials"}
            status = str(behaviour)
            seed = key or f"{form.get('to')}|{form.get('message')}|{len(self.requests)}"
            message_id = "ATXid_" + hashlib.sha1(seed.encode()).hexdigest()[:16]
            recipient = {
                "statusCode": STATUS_CODES.get(status, 500),
                "number": form.get("to", ""),
                "status": status,
                "cost": "UGX 35.0000" if status == "Success" else "0",
                "messageId": message_id if status == "Success" else "None",
            }
            reply = {
                "SMSMessageData": {
                    "Message": f"Sent to {int(status == 'Success')}/1 Total Cost: {recipient['cost']}",
                    "Recipients": [recipient],
                }
            }
            if status == "Success":
                self.delivered.append({"to": form.get("to"), "message": form.get("message"), "key": key})
                if key:
                    self._replies[key] = reply
            return 201, reply
