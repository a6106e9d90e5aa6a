"""ConfigMap patches seen through env vars and through a mounted volume.

An env consumer never sees the new value and is not restarted; the store
records that silence as a synthesized PodNotRestarted event. A volume
consumer does see it after the kubelet sync delay.

    python demos/configmap_changes.py
"""

import io
import tempfile
from pathlib import Path

from oma import EdgeType, EventType, MemoryStore, ingest_log, load_scenario, q2_pattern_history, run_scenario


def ingest(tmp: str, name: str):
    result = run_scenario(load_scenario(name))
    store = MemoryStore(Path(tmp) / f"{name}.db")
    ingest_log(store, io.StringIO(result.text()))
    return result, store


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        result, store = ingest(tmp, "p002_silent_env")
        with store:
            state = result.describe("env-app", result.at(139))["containers"][0]
            print(f"env-app after the patch: FEATURE_FLAG={state['env']['FEATURE_FLAG']}, "
                  f"restarts={state['restart_count']}")
            for signal in store.events_in_window({"event_type": EventType.PodNotRestarted}):
                p = signal.payload
                print(f"absence signal at {signal.timestamp} for {signal.pod_name}: "
                      f"{p.content_hash_before} -> {p.content_hash_after}, keys {list(p.changed_keys)}")

        result, store = ingest(tmp, "p003_volume_sync")
        with store:
            history = q2_pattern_history(store, "P003", "2026-01-15T00:00:00Z", "2026-01-16T00:00:00Z")
            for instance in history.instances:
                for edge, event in instance.related:
                    if edge.edge_type is EdgeType.propagation:
                        print(f"vol-app saw the change via {event.event_type} after "
                              f"{event.payload.propagation_latency_ms} ms")


if __name__ == "__main__":
    main()
