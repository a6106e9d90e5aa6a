"""Deterministic discrete-event model of pod lifecycle on one node.

The simulator plays two roles. It acts as the collector, emitting the event
log that a watcher on a real cluster would write. It also keeps a "describe
oracle" trace of what a present-tense tool would show at any instant. That
trace keeps one ``last_termination_state`` per container and forgets
deleted pods, which is exactly the evidence loss the store is meant to
prevent.

Time is virtual. A scenario of several minutes runs in milliseconds.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

from .events import (
    CausalEvent,
    ConfigMapRef,
    EventPayload,
    EventType,
    NodeSnapshot,
    ObjectKind,
    QoSClass,
    Snapshot,
    Timestamp,
    dumps_canonical,
    encode_record,
    normalize_timestamp,
)

MI = 1024 * 1024
SECOND_US = 1_000_000

BACKOFF_BASE_S = 10
BACKOFF_CAP_S = 300

EVIDENCE_POINTS = ("kill", "restart", "delete")


class InvalidScenario(ValueError):
    pass


def backoff_schedule(restart_count: int) -> int:
    """Seconds to wait before the start that brings the pod to ``restart_count``.

    The first start (count 0) is immediate; afterwards the delay doubles from
    20 s and saturates at 300 s.
    """
    if restart_count <= 0:
        return 0
    return min(BACKOFF_BASE_S * 2**restart_count, BACKOFF_CAP_S)


def format_quantity(n_bytes: int) -> str:
    for suffix, unit in (("Gi", 1024**3), ("Mi", MI), ("Ki", 1024)):
        if n_bytes % unit == 0:
            return f"{n_bytes // unit}{suffix}"
    return str(n_bytes)


def content_hash(data: dict) -> str:
    return hashlib.sha256(dumps_canonical(data).encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------- #
# Scenario configuration
# --------------------------------------------------------------------------- #


@dataclass
class PodSpec:
    name: str
    container_name: str = "app"
    memory_limit_bytes: int = 64 * MI
    memory_request_bytes: int = 64 * MI
    cpu_limit_millicores: int = 100
    cpu_request_millicores: int = 100
    allocation_bytes: int = 128 * MI
    qos_class: str = "Guaranteed"
    configmap_refs: list[dict] = field(default_factory=list)
    first_crash_at_s: float = 15.0
    start_at_s: float = 0.0
    delete_at_s: Optional[float] = None

    @property
    def ooms(self) -> bool:
        return self.allocation_bytes > self.memory_limit_bytes

    @property
    def refs(self) -> tuple[ConfigMapRef, ...]:
        return tuple(ConfigMapRef(r["name"], r["mode"]) for r in self.configmap_refs)


@dataclass
class ConfigMapSpec:
    name: str
    data: dict[str, str] = field(default_factory=dict)


@dataclass
class ConfigMapPatch:
    at_s: float
    name: str
    set: dict[str, str] = field(default_factory=dict)


@dataclass
class NodeSpec:
    name: str = "sim-node-0"
    allocatable_memory_bytes: int = 4096 * MI
    pressure_threshold_fraction: float = 0.9


@dataclass
class CollectorSpec:
    """What the simulated watcher records.

    ``record`` limits the event types written to the log (None keeps all).
    The watcher captures an OOMKillEvidence bundle on every pod modification
    where a terminated OOMKilled state is visible. ``evidence_on`` selects
    which lifecycle modifications count (the kill itself, the restart, the
    deletion), and ``status_update_delays_ms`` lists kubelet status posts
    during backoff, as offsets from the kill.
    """

    record: Optional[list[str]] = None
    evidence_on: list[str] = field(default_factory=lambda: ["kill", "restart"])
    status_update_delays_ms: list[int] = field(default_factory=lambda: [900])
    terminated_delay_ms: int = 200


@dataclass
class SimScenario:
    name: str
    seed: int = 0
    duration_s: float = 75
    namespace: str = "oma-poc"
    pods: list[PodSpec] = field(default_factory=list)
    configmaps: list[ConfigMapSpec] = field(default_factory=list)
    configmap_patches: list[ConfigMapPatch] = field(default_factory=list)
    node: NodeSpec = field(default_factory=NodeSpec)
    capture_delay_ms_range: tuple[float, float] = (0.05, 3.0)
    kubelet_sync_delay_s: float = 30
    start_time: str = "2026-01-15T10:00:00Z"
    teardown: bool = True
    collector: CollectorSpec = field(default_factory=CollectorSpec)

    def validate(self) -> None:
        if self.duration_s <= 0:
            raise InvalidScenario("duration_s must be positive")
        lo, hi = self.capture_delay_ms_range
        if not (0 <= lo <= hi < 100):
            raise InvalidScenario("capture_delay_ms_range must lie within [0, 100) ms")
        names = [p.name for p in self.pods]
        if len(names) != len(set(names)):
            raise InvalidScenario("pod names must be unique")
        cms = {c.name for c in self.configmaps}
        for pod in self.pods:
            if pod.first_crash_at_s <= 0:
                raise InvalidScenario(f"{pod.name}: first_crash_at_s must be positive")
            for ref in pod.configmap_refs:
                if ref.get("mode") not in ("env", "volume"):
                    raise InvalidScenario(f"{pod.name}: configmap ref mode must be env or volume")
                if ref.get("name") not in cms:
                    raise InvalidScenario(f"{pod.name}: unknown configmap {ref.get('name')!r}")
        for patch in self.configmap_patches:
            if patch.name not in cms:
                raise InvalidScenario(f"patch targets unknown configmap {patch.name!r}")
        for point in self.collector.evidence_on:
            if point not in EVIDENCE_POINTS:
                raise InvalidScenario(f"unknown evidence capture point {point!r}")
        if self.collector.terminated_delay_ms >= 10_000:
            raise InvalidScenario("ContainerTerminated must follow the kill within 10 s")
        if self.collector.record is not None:
            for name in self.collector.record:
                try:
                    EventType(name)
                except ValueError:
                    raise InvalidScenario(f"unknown event type {name!r} in collector.record") from None

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["capture_delay_ms_range"] = list(self.capture_delay_ms_range)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "SimScenario":
        try:
            doc = dict(doc)
            doc["pods"] = [PodSpec(**p) for p in doc.get("pods", [])]
            doc["configmaps"] = [ConfigMapSpec(**c) for c in doc.get("configmaps", [])]
            doc["configmap_patches"] = [ConfigMapPatch(**p) for p in doc.get("configmap_patches", [])]
            doc["node"] = NodeSpec(**doc.get("node", {}))
            doc["collector"] = CollectorSpec(**doc.get("collector", {}))
            if "capture_delay_ms_range" in doc:
                doc["capture_delay_ms_range"] = tuple(doc["capture_delay_ms_range"])
            scenario = cls(**doc)
        except TypeError as exc:
            raise InvalidScenario(str(exc)) from None
        scenario.validate()
        return scenario


BUILTIN_SCENARIOS = (
    "p001_minikube_run1",
    "p001_aks",
    "p001_horizon",
    "p001_latency",
    "p001_node_pressure",
    "p002_silent_env",
    "p003_volume_sync",
    "stress_5",
    "stress_10",
    "stress_20",
)


def load_scenario(name_or_path: str | Path) -> SimScenario:
    """Load a builtin scenario by name or a scenario JSON file by path."""
    text: str
    if str(name_or_path) in BUILTIN_SCENARIOS:
        text = resources.files("oma.scenarios").joinpath(f"{name_or_path}.json").read_text(encoding="utf-8")
    else:
        path = Path(name_or_path)
        if not path.exists():
            raise InvalidScenario(f"no builtin or file scenario named {name_or_path!r}")
        text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidScenario(f"scenario is not valid JSON: {exc}") from None
    return SimScenario.from_json(doc)


# --------------------------------------------------------------------------- #
# Describe oracle
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Observation:
    """Pod state as a present-tense tool would render it. ``state`` None means deleted."""

    timestamp: Timestamp
    pod_name: str
    state: Optional[dict]


class NotFound:
    """Sentinel returned for objects a live cluster no longer knows about (HTTP 404)."""

    def __repr__(self) -> str:
        return "NotFound"

    def __bool__(self) -> bool:
        return False


NOT_FOUND = NotFound()


def describe_oracle(trace: list[Observation], pod_name: str, t: Timestamp | str) -> dict | NotFound:
    t = normalize_timestamp(t)
    current: Optional[Observation] = None
    for obs in trace:
        if obs.pod_name != pod_name:
            continue
        if obs.timestamp > t:
            break
        current = obs
    if current is None or current.state is None:
        return NOT_FOUND
    return json.loads(json.dumps(current.state))


# --------------------------------------------------------------------------- #
# Simulation
# --------------------------------------------------------------------------- #


@dataclass
class _Pod:
    spec: PodSpec
    exists: bool = False
    phase: str = "Pending"
    restart_count: int = 0
    current_state: dict = field(default_factory=dict)
    last_termination_state: Optional[dict] = None
    started_at: Optional[Timestamp] = None
    env: dict = field(default_factory=dict)
    volumes: dict = field(default_factory=dict)
    running: bool = False
    deleted_at: Optional[Timestamp] = None


@dataclass
class SimResult:
    scenario: SimScenario
    events: list[CausalEvent]
    snapshots: list[Snapshot]
    oracle_trace: list[Observation]
    records: list  # events and snapshots merged in emission order

    def lines(self) -> list[str]:
        return [encode_record(r) for r in self.records]

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.text())
        return path

    def count(self, event_type: EventType) -> int:
        return sum(1 for e in self.events if e.event_type is event_type)

    def describe(self, pod_name: str, t: Timestamp | str):
        return describe_oracle(self.oracle_trace, pod_name, t)

    def at(self, seconds: float) -> Timestamp:
        return normalize_timestamp(self.scenario.start_time).plus_seconds(seconds)


class _Simulation:
    def __init__(self, scenario: SimScenario) -> None:
        scenario.validate()
        self.sc = scenario
        self.rng = random.Random(scenario.seed)
        self.t0 = normalize_timestamp(scenario.start_time)
        self.end = self.t0.plus_seconds(scenario.duration_s)
        self.queue: list = []
        self.seq = 0
        self.emitted: list = []
        self.trace: list[Observation] = []
        self.pods = {p.name: _Pod(p) for p in scenario.pods}
        self.configmaps = {c.name: dict(c.data) for c in scenario.configmaps}
        self.pressure = False
        self.record_types = None if scenario.collector.record is None else {EventType(n) for n in scenario.collector.record}

    # scheduling ------------------------------------------------------------

    def at(self, ts: Timestamp, fn: Callable, *args) -> None:
        self.seq += 1
        heapq.heappush(self.queue, (ts.us, self.seq, fn, args))

    def run(self) -> SimResult:
        for pod in self.pods.values():
            start = self.t0.plus_seconds(pod.spec.start_at_s)
            if start < self.end:
                self.at(start, self.start_container, pod)
            stop = self.stop_time(pod)
            if stop is not None:
                self.at(stop, self.delete_pod, pod)
        for patch in self.sc.configmap_patches:
            at = self.t0.plus_seconds(patch.at_s)
            if at < self.end:
                self.at(at, self.patch_configmap, patch)
        while self.queue:
            us, _, fn, args = heapq.heappop(self.queue)
            fn(Timestamp(us), *args)
        self.emitted.sort(key=lambda item: (item[0], item[1]))
        records = [rec for _, _, rec in self.emitted]
        events = [r for r in records if isinstance(r, CausalEvent)]
        snapshots = [r for r in records if isinstance(r, Snapshot)]
        return SimResult(self.sc, events, snapshots, self.trace, records)

    def stop_time(self, pod: _Pod) -> Optional[Timestamp]:
        if pod.spec.delete_at_s is not None:
            return min(self.t0.plus_seconds(pod.spec.delete_at_s), self.end)
        return self.end if self.sc.teardown else None

    def horizon(self, pod: _Pod) -> Timestamp:
        stop = self.stop_time(pod)
        return self.end if stop is None else stop

    # output ----------------------------------------------------------------

    def emit(self, ts: Timestamp, event_type: EventType, pod: Optional[_Pod] = None, **kw) -> None:
        if self.record_types is not None and event_type not in self.record_types:
            return
        if pod is not None:
            kw.setdefault("pod_name", pod.spec.name)
            kw.setdefault("container_name", pod.spec.container_name)
            kw.setdefault("node_name", self.sc.node.name)
        ev = CausalEvent.create(event_type, ts, self.sc.namespace, **kw)
        self.seq += 1
        self.emitted.append((ts.us, self.seq, ev))

    def observe(self, ts: Timestamp, pod: _Pod) -> None:
        self.trace.append(Observation(ts, pod.spec.name, self.describe_state(pod) if pod.exists else None))

    def capture_delay_us(self) -> int:
        lo, hi = self.sc.capture_delay_ms_range
        return round(self.rng.uniform(lo, hi) * 1000)

    def node_snapshot(self) -> NodeSnapshot:
        return NodeSnapshot(self.sc.node.allocatable_memory_bytes, self.pressure, self.sc.node.name)

    def describe_state(self, pod: _Pod) -> dict:
        spec = pod.spec
        return {
            "configmap_refs": [{"mode": r.mode, "name": r.name} for r in spec.refs],
            "containers": [
                {
                    "env": dict(pod.env),
                    "last_termination_state": pod.last_termination_state,
                    "name": spec.container_name,
                    "resources": {
                        "limits": {
                            "cpu": f"{spec.cpu_limit_millicores}m",
                            "memory": format_quantity(spec.memory_limit_bytes),
                        },
                        "requests": {
                            "cpu": f"{spec.cpu_request_millicores}m",
                            "memory": format_quantity(spec.memory_request_bytes),
                        },
                    },
                    "restart_count": pod.restart_count,
                    "state": pod.current_state,
                    "volumes": dict(pod.volumes),
                }
            ],
            "name": spec.name,
            "namespace": self.sc.namespace,
            "node_name": self.sc.node.name,
            "phase": pod.phase,
            "qos_class": spec.qos_class,
        }

    def resource_payload(self, pod: _Pod, **kw) -> EventPayload:
        spec = pod.spec
        return EventPayload(
            memory_limit_bytes=spec.memory_limit_bytes,
            memory_request_bytes=spec.memory_request_bytes,
            cpu_limit_millicores=spec.cpu_limit_millicores,
            cpu_request_millicores=spec.cpu_request_millicores,
            qos_class=QoSClass(spec.qos_class),
            restart_count=pod.restart_count,
            configmap_refs=spec.refs,
            **kw,
        )

    def capture_evidence(self, ts: Timestamp, pod: _Pod, termination: dict) -> None:
        """Synchronous capture bundle, stamped after the modification it saw."""
        at = ts.plus_us(self.capture_delay_us())
        payload = self.resource_payload(
            pod,
            exit_code=137,
            reason="OOMKilled",
            started_at=normalize_timestamp(termination["started_at"]),
            finished_at=normalize_timestamp(termination["finished_at"]),
            node_snapshot=self.node_snapshot(),
        )
        self.emit(at, EventType.OOMKillEvidence, pod, pattern_id="P001", payload=payload)

    # node pressure ------------------------------------------------------------

    def update_pressure(self, ts: Timestamp) -> None:
        used = sum(
            min(p.spec.allocation_bytes, p.spec.memory_limit_bytes) for p in self.pods.values() if p.running
        )
        threshold = self.sc.node.pressure_threshold_fraction * self.sc.node.allocatable_memory_bytes
        if used > threshold and not self.pressure:
            self.pressure = True
            self.emit(ts, EventType.NodeMemoryPressure, node_name=self.sc.node.name, pattern_id="P001",
                      payload=EventPayload(node_snapshot=self.node_snapshot()))
        elif used <= threshold and self.pressure:
            self.pressure = False

    # pod lifecycle ------------------------------------------------------------

    def start_container(self, ts: Timestamp, pod: _Pod) -> None:
        if pod.deleted_at is not None:
            return
        first = not pod.exists
        pod.exists = True
        pod.running = True
        pod.phase = "Running"
        pod.started_at = ts
        if not first:
            pod.restart_count += 1
        pod.current_state = {"running": {"started_at": ts.isoformat()}}
        # env values are resolved once, at container start
        pod.env = {}
        for ref in pod.spec.refs:
            data = self.configmaps[ref.name]
            if ref.mode == "env":
                pod.env.update(data)
            else:
                pod.volumes[ref.name] = content_hash(data)
        self.emit(ts, EventType.ContainerStarted, pod,
                  payload=self.resource_payload(pod, started_at=ts))
        if not first and pod.last_termination_state and "restart" in self.sc.collector.evidence_on:
            self.capture_evidence(ts, pod, pod.last_termination_state["terminated"])
        self.observe(ts, pod)
        self.update_pressure(ts)
        if pod.spec.ooms:
            kill_at = ts.plus_seconds(pod.spec.first_crash_at_s)
            if kill_at < self.horizon(pod):
                self.at(kill_at, self.oom_kill, pod)

    def oom_kill(self, ts: Timestamp, pod: _Pod) -> None:
        if pod.deleted_at is not None:
            return
        termination = {
            "exit_code": 137,
            "finished_at": ts.isoformat(),
            "reason": "OOMKilled",
            "started_at": pod.started_at.isoformat(),
        }
        # the previous record is destroyed here: at most one is retained
        pod.last_termination_state = {"terminated": termination}
        pod.current_state = {"terminated": dict(termination)}
        pod.running = False
        pod.phase = "Failed"
        self.emit(ts, EventType.OOMKill, pod, pattern_id="P001",
                  payload=self.resource_payload(pod, exit_code=137, reason="OOMKilled",
                                                started_at=pod.started_at, finished_at=ts))
        collector = self.sc.collector
        if "kill" in collector.evidence_on:
            self.capture_evidence(ts, pod, termination)
        self.emit(ts.plus_us(collector.terminated_delay_ms * 1000), EventType.ContainerTerminated, pod,
                  pattern_id="P001",
                  payload=EventPayload(exit_code=137, reason="OOMKilled", started_at=pod.started_at,
                                       finished_at=ts, restart_count=pod.restart_count))
        self.observe(ts, pod)
        self.update_pressure(ts)
        restart_at = ts.plus_seconds(backoff_schedule(pod.restart_count + 1))
        horizon = self.horizon(pod)
        for delay_ms in collector.status_update_delays_ms:
            status_at = ts.plus_us(delay_ms * 1000)
            if status_at < restart_at and status_at < horizon:
                self.at(status_at, self.backoff_status, pod, termination)
        if restart_at < horizon:
            self.at(restart_at, self.start_container, pod)

    def backoff_status(self, ts: Timestamp, pod: _Pod, termination: dict) -> None:
        if pod.deleted_at is not None:
            return
        pod.current_state = {"waiting": {"reason": "CrashLoopBackOff"}}
        self.capture_evidence(ts, pod, termination)
        self.observe(ts, pod)

    def delete_pod(self, ts: Timestamp, pod: _Pod) -> None:
        if not pod.exists or pod.deleted_at is not None:
            return
        if pod.last_termination_state and "delete" in self.sc.collector.evidence_on:
            self.capture_evidence(ts, pod, pod.last_termination_state["terminated"])
        state = self.describe_state(pod)
        state["deleted_at"] = ts.isoformat()
        pod.deleted_at = ts
        pod.running = False
        pod.exists = False
        self.emit(ts, EventType.PodDeleted, pod,
                  payload=EventPayload(restart_count=pod.restart_count))
        self.seq += 1
        self.emitted.append((ts.us, self.seq, Snapshot.from_state(ObjectKind.Pod, pod.spec.name, self.sc.namespace, ts, state)))
        self.observe(ts, pod)
        self.update_pressure(ts)

    # configmaps ---------------------------------------------------------------

    def patch_configmap(self, ts: Timestamp, patch: ConfigMapPatch) -> None:
        before = self.configmaps[patch.name]
        after = dict(before)
        after.update(patch.set)
        changed = sorted(k for k in set(before) | set(after) if before.get(k) != after.get(k))
        if not changed:
            return
        self.configmaps[patch.name] = after
        self.emit(ts, EventType.ConfigMapChanged, configmap_name=patch.name,
                  payload=EventPayload(content_hash_before=content_hash(before),
                                       content_hash_after=content_hash(after),
                                       changed_keys=tuple(changed)))
        delay_s = self.sc.kubelet_sync_delay_s
        for pod in self.pods.values():
            if not pod.exists or pod.deleted_at is not None:
                continue
            if any(r.name == patch.name and r.mode == "volume" for r in pod.spec.refs):
                sync_at = ts.plus_seconds(delay_s)
                if sync_at <= self.horizon(pod):
                    self.at(sync_at, self.kubelet_sync, pod, patch.name, round(delay_s * 1000))

    def kubelet_sync(self, ts: Timestamp, pod: _Pod, configmap: str, latency_ms: int) -> None:
        if pod.deleted_at is not None:
            return
        # atomic ..data symlink swap: the projected view flips in one step
        pod.volumes[configmap] = content_hash(self.configmaps[configmap])
        self.emit(ts, EventType.KubeletSync, pod, configmap_name=configmap, pattern_id="P003",
                  container_name=None, payload=EventPayload(propagation_latency_ms=latency_ms))
        self.observe(ts, pod)


def run_scenario(scenario: SimScenario) -> SimResult:
    return _Simulation(scenario).run()


# --------------------------------------------------------------------------- #
# Stress generation
# --------------------------------------------------------------------------- #


@dataclass
class StressRun:
    pods: int
    duration_s: float
    result: SimResult
    expected_edges: int

    @property
    def events(self) -> int:
        return len(self.result.events)

    @property
    def events_per_sec(self) -> float:
        return self.events / self.duration_s

    def to_json(self) -> dict:
        return {
            "events": self.events,
            "events_per_sec": round(self.events_per_sec, 4),
            "expected_edges": self.expected_edges,
            "pods": self.pods,
        }


def stress_scenario(pod_count: int, duration_s: float = 120, seed: int = 42) -> SimScenario:
    rng = random.Random(seed)
    pods = [
        PodSpec(name=f"stress-{i:02d}", start_at_s=round(rng.uniform(0, 5), 6))
        for i in range(pod_count)
    ]
    return SimScenario(
        name=f"stress_{pod_count}",
        seed=seed,
        duration_s=duration_s,
        namespace="oma-stress",
        pods=pods,
        node=NodeSpec(name="sim-node-0", allocatable_memory_bytes=16 * 1024 * MI),
    )


def stress_generate(pod_count: int, duration_s: float = 120, seed: int = 42) -> StressRun:
    from .oracle import brute_force_edges

    result = run_scenario(stress_scenario(pod_count, duration_s, seed))
    return StressRun(pod_count, duration_s, result, len(brute_force_edges(result.events)))


def iter_log(result: SimResult) -> Iterable[str]:
    for rec in result.records:
        yield encode_record(rec) + "\n"
