"""Ingest the two committed crash-loop fixtures and print their counts.

The fixtures are regenerated by ``oma simulate --scenario <name> --seed 7``.

    python demos/fixture_counts.py
"""

import tempfile
from pathlib import Path

from oma import MemoryStore, ingest_log

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def main() -> None:
    print(f"{'run':<20} {'events':>6} {'OOMKill':>7} {'evidence':>8} {'edges':>5} {'snapshots':>9}")
    with tempfile.TemporaryDirectory() as tmp:
        for name in ("p001_aks", "p001_minikube_run1"):
            with MemoryStore(Path(tmp) / f"{name}.db") as store:
                ingest_log(store, FIXTURES / f"{name}.jsonl")
                s = store.stats()
                print(f"{name:<20} {s['events_total']:>6} {s['events']['OOMKill']:>7} "
                      f"{s['events']['OOMKillEvidence']:>8} {s['edges']['total']:>5} {s['snapshots']:>9}")


if __name__ == "__main__":
    main()
