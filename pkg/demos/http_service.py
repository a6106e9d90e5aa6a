"""Serve a store over HTTP and query it the way an external tool would.

    python demos/http_service.py
"""

import json
import tempfile
import threading
import urllib.request
from pathlib import Path

from oma import MemoryStore, ingest_log, load_scenario, run_scenario
from oma.service import make_server


def get(base: str, path: str) -> dict:
    with urllib.request.urlopen(base + path, timeout=5) as resp:
        return json.loads(resp.read())


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        db = Path(tmp) / "oma.db"
        with MemoryStore(db) as store:
            ingest_log(store, run_scenario(load_scenario("p001_horizon")).write(Path(tmp) / "events.jsonl"))

        server = make_server(db, "127.0.0.1:0")
        threading.Thread(target=server.serve_forever, daemon=True).start()
        base = "http://%s:%d" % server.server_address[:2]
        print(f"serving on {base}")
        try:
            print("healthz:", get(base, "/v1/healthz")["status"])
            history = get(base, "/v1/patterns/P001?since=2026-01-15T00:00:00Z&until=2026-01-16T00:00:00Z")
            print(f"P001 instances: {len(history['instances'])}")
            last = history["instances"][-1]["related"][-1]["event"]["event_id"]
            chain = get(base, f"/v1/causal/{last}?depth=5")
            print(f"causal chain of {last}: {[l['event']['event_type'] for l in chain['links']]}")
            state = get(base, "/v1/state-at?kind=Pod&name=oom-app&namespace=oma-poc&at=2026-01-15T10:05:00Z")
            print(f"oom-app at 10:05 (deleted at 10:01:15): phase {state['snapshot']['state']['phase']}")
        finally:
            server.shutdown()
            server.server_close()


if __name__ == "__main__":
    main()
