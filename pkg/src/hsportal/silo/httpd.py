"""Thin HTTP adapter exposing a simulated silo on a real port."""

from __future__ import annotations

import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..dab.render import ConcreteRequest
from .server import SiloServer


def _make_handler(silo: SiloServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args) -> None:  # silence per-request noise
            pass

        def _serve(self, method: str) -> None:
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length).decode() if length else None
            request = ConcreteRequest(
                method=method,
                url=f"http://{self.headers.get('Host', 'localhost')}{self.path}",
                headers={k: v for k, v in self.headers.items()},
                body=body,
            )
            response = silo.handle(request)
            payload = response.body
            self.send_response(response.status)
            for name, value in response.headers.items():
                self.send_header(name, value)
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def do_GET(self) -> None:
            self._serve("GET")

        def do_POST(self) -> None:
            self._serve("POST")

    return Handler


def serve_silo(silo: SiloServer, host: str, port: int) -> ThreadingHTTPServer:
    """Bind and serve in a daemon thread; caller owns shutdown()."""
    httpd = ThreadingHTTPServer((host, port), _make_handler(silo))
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    return httpd
