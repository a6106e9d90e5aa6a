"""What survives a crash loop: describe output versus the operational memory.

A pod with a 64Mi limit allocates 128Mi and is OOM-killed twice before it is
deleted. At each step we print what a describe call would show next to what
the store can still answer.

    python demos/evidence_horizon.py
"""

import io
import json
import tempfile
from pathlib import Path

from oma import EventType, MemoryStore, NOT_FOUND, ingest_log, load_scenario, q1_causal_chain, q3_state_at, run_scenario


def main() -> None:
    result = run_scenario(load_scenario("p001_horizon"))
    kills = [e for e in result.events if e.event_type is EventType.OOMKill]
    print(f"simulated {len(result.events)} events, {len(kills)} OOM kills")

    for i, kill in enumerate(kills, 1):
        state = result.describe("oom-app", kill.timestamp.plus_seconds(1))
        last = state["containers"][0]["last_termination_state"]["terminated"]
        print(f"after kill {i}: describe shows one termination, finished_at={last['finished_at']}")

    with tempfile.TemporaryDirectory() as tmp:
        with MemoryStore(Path(tmp) / "oma.db") as store:
            ingest_log(store, io.StringIO(result.text()))
            latest = store.events_in_window({"event_type": EventType.OOMKillEvidence})[-1]
            chain = q1_causal_chain(store, latest.event_id)
            print(f"\ncausal chain behind evidence {latest.event_id}:")
            for link in chain.links:
                print(f"  depth {link.depth}  {link.event.event_type:<18} {link.event.timestamp}  "
                      f"{link.edge.edge_type.value} {link.edge.event_time_delta_ms:.3f} ms")

            deleted = store.events_in_window({"event_type": EventType.PodDeleted})[0]
            later = deleted.timestamp.plus_seconds(60)
            print(f"\none minute after deletion, describe returns: {result.describe('oom-app', later)!r}")
            frozen = q3_state_at(store, "Pod", "oom-app", "oma-poc", later)
            assert frozen is not NOT_FOUND
            state = frozen.snapshot.state
            print("the frozen snapshot still has:")
            print(json.dumps({
                "phase": state["phase"],
                "limits": state["containers"][0]["resources"]["limits"],
                "configmap_refs": state["configmap_refs"],
                "restart_count": state["containers"][0]["restart_count"],
            }, indent=2))


if __name__ == "__main__":
    main()
