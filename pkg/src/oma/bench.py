"""Latency and stress benchmarks over simulated runs.

Event-time deltas are deterministic given the seeds. Wall-clock construction
time and RSS are hardware dependent and only reported on request.
"""

from __future__ import annotations

import dataclasses
import io
import resource
import statistics
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .events import EdgeType
from .oracle import brute_force_edges
from .patterns import classify_edge
from .simulator import SimScenario, load_scenario, run_scenario, stress_scenario
from .store import LiveCounter, MemoryStore, ingest_log

CLASSES = ("intra_cycle", "cross_cycle")


@dataclass
class ClassStats:
    count: int = 0
    min_ms: Optional[float] = None
    mean_ms: Optional[float] = None
    max_ms: Optional[float] = None

    @classmethod
    def of(cls, deltas_ms: list[float]) -> "ClassStats":
        if not deltas_ms:
            return cls()
        return cls(len(deltas_ms), min(deltas_ms), statistics.fmean(deltas_ms), max(deltas_ms))

    def to_json(self) -> dict:
        r = lambda v: None if v is None else round(v, 3)
        return {"count": self.count, "max_ms": r(self.max_ms), "mean_ms": r(self.mean_ms), "min_ms": r(self.min_ms)}


@dataclass
class LatencyReport:
    runs: int
    classes: dict[str, ClassStats]
    deltas_ms: dict[str, list[float]] = field(default_factory=dict, repr=False)
    construction_wall_ms: list[float] = field(default_factory=list, repr=False)

    @property
    def total_edges(self) -> int:
        return sum(c.count for c in self.classes.values())

    def to_json(self, timing: bool = False) -> dict:
        doc = {
            "classes": {k: v.to_json() for k, v in self.classes.items()},
            "runs": self.runs,
            "total_edges": self.total_edges,
        }
        if timing:
            w = self.construction_wall_ms
            doc["informational"] = {"construction_wall_ms_mean": round(statistics.fmean(w), 6) if w else None}
        return doc

    def render_text(self) -> str:
        lines = [f"{'class':<12}  {'count':>5}  {'min_ms':>10}  {'mean_ms':>10}  {'max_ms':>10}"]
        for name in CLASSES:
            c = self.classes[name]
            cells = ["-" if v is None else f"{v:.3f}" for v in (c.min_ms, c.mean_ms, c.max_ms)]
            lines.append(f"{name:<12}  {c.count:>5}  {cells[0]:>10}  {cells[1]:>10}  {cells[2]:>10}")
        lines.append(f"runs {self.runs}, total edges {self.total_edges}")
        return "\n".join(lines) + "\n"


def _fresh_store(tmp: Path, name: str) -> MemoryStore:
    return MemoryStore(tmp / f"{name}.db")


def bench_latency(runs: int = 30, scenario: SimScenario | str = "p001_latency") -> LatencyReport:
    """Run ``runs`` seeded copies of a P001 scenario and classify evidence edges."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    base = load_scenario(scenario) if isinstance(scenario, str) else scenario
    deltas: dict[str, list[float]] = {c: [] for c in CLASSES}
    wall: list[float] = []
    with tempfile.TemporaryDirectory(prefix="oma-bench-") as tmp:
        for seed in range(1, runs + 1):
            sc = dataclasses.replace(base, seed=seed)
            result = run_scenario(sc)
            with _fresh_store(Path(tmp), f"run{seed}") as store:
                report = ingest_log(store, io.StringIO(result.text()))
                wall.extend(report.construction_wall_ms)
                for edge in store.all_edges():
                    if edge.edge_type is EdgeType.evidence:
                        deltas[classify_edge(edge)].append(edge.event_time_delta_ms)
    return LatencyReport(runs, {c: ClassStats.of(deltas[c]) for c in CLASSES}, deltas, wall)


@dataclass
class StressRow:
    pods: int
    duration_s: float
    events: int
    edges: int
    expected_edges: int
    peak_live_event_objects: int
    wall_s: float = 0.0
    max_rss_kb: int = 0

    @property
    def events_per_sec(self) -> float:
        return self.events / self.duration_s

    def to_json(self, timing: bool = False) -> dict:
        doc = {
            "edges": self.edges,
            "events": self.events,
            "events_per_sec": round(self.events_per_sec, 4),
            "expected_edges": self.expected_edges,
            "peak_live_event_objects": self.peak_live_event_objects,
            "pods": self.pods,
        }
        if timing:
            doc["informational"] = {"max_rss_kb": self.max_rss_kb, "wall_s": round(self.wall_s, 4)}
        return doc


@dataclass
class StressReport:
    rows: list[StressRow]

    def to_json(self, timing: bool = False) -> dict:
        return {"rows": [r.to_json(timing) for r in self.rows]}

    def render_text(self) -> str:
        lines = [f"{'pods':>4}  {'events':>6}  {'events/s':>8}  {'edges':>5}  {'oracle':>6}  {'peak_live':>9}"]
        for r in self.rows:
            lines.append(f"{r.pods:>4}  {r.events:>6}  {r.events_per_sec:>8.2f}  {r.edges:>5}  "
                         f"{r.expected_edges:>6}  {r.peak_live_event_objects:>9}")
        return "\n".join(lines) + "\n"


def _max_rss_kb() -> int:
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return rss // 1024 if sys.platform == "darwin" else rss


def bench_stress(pod_counts: Iterable[int] = (5, 10, 20), duration_s: float = 120, seed: int = 42) -> StressReport:
    """Generate and ingest one stress run per pod count, streaming from disk."""
    rows = []
    with tempfile.TemporaryDirectory(prefix="oma-stress-") as tmp:
        for n in pod_counts:
            started = time.perf_counter()
            result = run_scenario(stress_scenario(n, duration_s, seed))
            expected = len(brute_force_edges(result.events))
            log_path = result.write(Path(tmp) / f"stress{n}.jsonl")
            n_events = len(result.events)
            del result
            counter = LiveCounter()
            with _fresh_store(Path(tmp), f"stress{n}") as store:
                ingest_log(store, log_path, counter=counter)
                edges = store.stats()["edges"]["total"]
            rows.append(StressRow(n, duration_s, n_events, edges, expected, counter.peak,
                                  time.perf_counter() - started, _max_rss_kb()))
    return StressReport(rows)
