"""HTTP plumbing around :class:`GatewayService`, plus the launch entry point.

Serve with ``python -m surveyflow.api --bind 127.0.0.1:8350 --data-dir ./data
--tokens-file tokens.txt``. Without a tokens file an ephemeral OPERATOR token
is generated and printed. CORS is wide open so the browser UI can talk to the
API from another origin; deploy behind a proxy for anything stricter.
"""

from __future__ import annotations

import argparse
import secrets
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import urlsplit

from ..engine import Engine
from ..store import MetadataStore
from .service import ApiToken, GatewayService, Role, TokenSet

_CORS_HEADERS = {
    "Access-Control-Allow-Origin": "*",
    "Access-Control-Allow-Methods": "GET, POST, OPTIONS",
    "Access-Control-Allow-Headers": "Authorization, Content-Type",
}


class GatewayServer:
    """Threaded HTTP server bound to one service instance."""

    def __init__(self, service: GatewayService, host: str = "127.0.0.1", port: int = 8350) -> None:
        self.service = service

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"
            server_version = "surveyflow-gateway"

            def log_message(self, fmt: str, *args) -> None:  # noqa: A003 - quiet by default
                pass

            def _respond(handler_self, status: int, body: bytes, content_type: str) -> None:
                handler_self.send_response(status)
                handler_self.send_header("Content-Type", content_type)
                handler_self.send_header("Content-Length", str(len(body)))
                for key, value in _CORS_HEADERS.items():
                    handler_self.send_header(key, value)
                handler_self.end_headers()
                handler_self.wfile.write(body)

            def do_OPTIONS(handler_self) -> None:  # noqa: N802 - http.server API
                handler_self._respond(204, b"", "text/plain")

            def _dispatch(handler_self, method: str) -> None:
                parts = urlsplit(handler_self.path)
                length = int(handler_self.headers.get("Content-Length", "0") or "0")
                body = handler_self.rfile.read(length) if length else b""
                response = service.handle(
                    method,
                    parts.path,
                    parts.query,
                    handler_self.headers.get("Authorization"),
                    body,
                )
                handler_self._respond(response.status, response.body, response.content_type)

            def do_GET(handler_self) -> None:  # noqa: N802
                handler_self._dispatch("GET")

            def do_POST(handler_self) -> None:  # noqa: N802
                handler_self._dispatch("POST")

        self.httpd = ThreadingHTTPServer((host, port), Handler)
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[0], self.httpd.server_address[1]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start_background(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def shutdown(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def serve(
    *,
    bind: str = "127.0.0.1:8350",
    data_dir: str = "./gateway-data",
    tokens_file: str | None = None,
) -> GatewayServer:
    """Build store + engine + service and return a ready (unstarted) server."""
    host, _, port_text = bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise ValueError(f"--bind expects host:port, got {bind!r}")
    store = MetadataStore(data_dir)
    engine = Engine(store)
    if tokens_file:
        tokens = TokenSet.from_file(tokens_file)
    else:
        ephemeral = secrets.token_urlsafe(24)
        print(f"no --tokens-file given; ephemeral OPERATOR token: {ephemeral}", flush=True)
        tokens = TokenSet([ApiToken(token=ephemeral, role=Role.OPERATOR)])
    service = GatewayService(engine, store, tokens)
    return GatewayServer(service, host=host, port=int(port_text))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="surveyflow-gateway", description=__doc__)
    parser.add_argument("--bind", default="127.0.0.1:8350", help="host:port to listen on")
    parser.add_argument("--data-dir", default="./gateway-data", help="metadata store directory")
    parser.add_argument("--tokens-file", default=None, help="file of '<token> <ROLE>' lines")
    args = parser.parse_args(argv)

    server = serve(bind=args.bind, data_dir=args.data_dir, tokens_file=args.tokens_file)
    print(f"gateway listening on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0
