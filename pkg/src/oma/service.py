"""Read-only HTTP front end for the three queries.

Each request opens its own read-only store handle, so the service can run
while a writer is ingesting. Bodies are the same JSON documents the CLI
prints with ``--format json``.
"""

from __future__ import annotations

import logging
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, unquote, urlsplit

from .events import DecodeError
from .queries import QueryError, q1_causal_chain, q2_pattern_history, q3_state_at, render_json
from .simulator import NotFound
from .store import MemoryStore, StoreError

log = logging.getLogger(__name__)


class BadRequest(ValueError):
    pass


def parse_listen(listen: str) -> tuple[str, int]:
    host, sep, port = listen.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"listen address must be HOST:PORT, got {listen!r}")
    return host or "127.0.0.1", int(port)


def _param(params: dict, name: str, required: bool = True) -> Optional[str]:
    values = params.get(name)
    if not values or values[0] == "":
        if required:
            raise BadRequest(f"missing query parameter {name!r}")
        return None
    return values[0]


def handle(db_path: str | Path, path: str) -> tuple[int, str]:
    """Route one GET request; returns (status, JSON body)."""
    url = urlsplit(path)
    params = parse_qs(url.query)
    parts = [unquote(p) for p in url.path.strip("/").split("/")]
    try:
        with MemoryStore(db_path, mode="read_only") as store:
            if parts == ["v1", "healthz"]:
                return HTTPStatus.OK, render_json({"status": "ok", "stats": store.stats()})
            if len(parts) == 3 and parts[:2] == ["v1", "causal"]:
                depth_raw = _param(params, "depth", required=False)
                try:
                    depth = 10 if depth_raw is None else int(depth_raw)
                except ValueError:
                    raise BadRequest("depth must be an integer") from None
                if depth < 0:
                    raise BadRequest("depth must be non-negative")
                return HTTPStatus.OK, render_json(q1_causal_chain(store, parts[2], depth))
            if len(parts) == 3 and parts[:2] == ["v1", "patterns"]:
                result = q2_pattern_history(store, parts[2], _param(params, "since"), _param(params, "until"))
                return HTTPStatus.OK, render_json(result)
            if parts == ["v1", "state-at"]:
                result = q3_state_at(
                    store, _param(params, "kind"), _param(params, "name"),
                    _param(params, "namespace"), _param(params, "at"),
                )
                status = HTTPStatus.NOT_FOUND if isinstance(result, NotFound) else HTTPStatus.OK
                return status, render_json(result)
    except QueryError as exc:
        return HTTPStatus.NOT_FOUND, render_json({"error": type(exc).__name__, "message": str(exc.args[0])})
    except (BadRequest, DecodeError, ValueError) as exc:
        return HTTPStatus.BAD_REQUEST, render_json({"error": "BadRequest", "message": str(exc)})
    except StoreError as exc:
        return HTTPStatus.SERVICE_UNAVAILABLE, render_json({"error": type(exc).__name__, "message": str(exc)})
    return HTTPStatus.NOT_FOUND, render_json({"error": "NoRoute", "message": url.path})


def make_server(db_path: str | Path, listen: str = "127.0.0.1:8080") -> ThreadingHTTPServer:
    host, port = parse_listen(listen)
    db_path = str(db_path)
    # fail at startup, not on the first request
    MemoryStore(db_path, mode="read_only").close()

    class Handler(BaseHTTPRequestHandler):
        server_version = "oma/0.1"

        def do_GET(self) -> None:
            status, body = handle(db_path, self.path)
            data = body.encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, fmt: str, *args) -> None:
            log.info("%s %s", self.address_string(), fmt % args)

    server = ThreadingHTTPServer((host, port), Handler)
    server.daemon_threads = True
    return server


def serve_http(db_path: str | Path, listen: str = "127.0.0.1:8080", ready: Optional[threading.Event] = None) -> None:
    server = make_server(db_path, listen)
    log.info("serving %s on http://%s:%d", db_path, *server.server_address[:2])
    if ready is not None:
        ready.set()
    try:
        server.serve_forever()
    finally:
        server.server_close()
