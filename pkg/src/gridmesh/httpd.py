"""HTTP front: POST /api carries the RPC envelope, GET serves the web client.

Application-level failures answer 200 with {"ok": false, ...}; only an
unparseable envelope is a 400. Requests are handled on one thread each;
the store's locks do the serialization that matters.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .rpc import handle_envelope
from .store import Store

log = logging.getLogger("gridmesh.httpd")

_MAX_BODY = 32 * 1024 * 1024


class GridMeshHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], store: Store,
                 static_dir: str | None = None):
        super().__init__(address, ApiHandler)
        self.store = store
        self.static_dir = os.path.abspath(static_dir) if static_dir else None


class ApiHandler(BaseHTTPRequestHandler):
    server: GridMeshHTTPServer
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):   # route through logging, not stderr
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _reply(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _reply_json(self, status: int, payload: dict) -> None:
        self._reply(status, json.dumps(payload).encode(), "application/json")

    def do_POST(self):
        if self.path != "/api":
            self._reply_json(404, {"ok": False, "error": {
                "code": "NotFound", "message": self.path}})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            if not (0 <= length <= _MAX_BODY):
                raise ValueError("bad content length")
            envelope = json.loads(self.rfile.read(length).decode("utf-8"))
            if not isinstance(envelope, dict):
                raise ValueError("envelope must be a JSON object")
        except (ValueError, UnicodeDecodeError) as exc:
            self._reply_json(400, {"ok": False, "error": {
                "code": "BadEnvelope", "message": str(exc)}})
            return
        try:
            response = handle_envelope(self.server.store, envelope)
        except Exception:   # pragma: no cover - last-resort guard
            log.exception("unhandled error for %s", envelope.get("method"))
            response = {"ok": False, "error": {"code": "Internal",
                                               "message": "internal error"}}
        self._reply_json(200, response)

    def do_GET(self):
        root = self.server.static_dir
        if root is None:
            self._reply(404, b"no static assets configured\n", "text/plain")
            return
        path = self.path.split("?", 1)[0]
        if path.endswith("/"):
            path += "index.html"
        target = os.path.abspath(os.path.join(root, path.lstrip("/")))
        if not target.startswith(root + os.sep) and target != root:
            self._reply(403, b"forbidden\n", "text/plain")
            return
        if not os.path.isfile(target):
            self._reply(404, b"not found\n", "text/plain")
            return
        ctype = mimetypes.guess_type(target)[0] or "application/octet-stream"
        with open(target, "rb") as fh:
            self._reply(200, fh.read(), ctype)


def serve(store: Store, host: str = "127.0.0.1", port: int = 7370,
          static_dir: str | None = None) -> GridMeshHTTPServer:
    """Create the server (bound, not yet running)."""
    return GridMeshHTTPServer((host, port), store, static_dir)


def serve_background(store: Store, host: str = "127.0.0.1", port: int = 0,
                     static_dir: str | None = None) -> GridMeshHTTPServer:
    """Bind and run in a daemon thread; return the live server (for tests)."""
    server = serve(store, host, port, static_dir)
    thread = threading.Thread(target=server.serve_forever, daemon=True,
                              name="gridmesh-http")
    thread.start()
    return server
