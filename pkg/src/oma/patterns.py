"""Declarative causal patterns and insertion-time edge construction.

Patterns are data: a trigger step plus related steps, each with a role, a
temporal window and a confidence. The engine turns them into edges whenever
an event lands in the store. Linking is symmetric (an event looks both for
its causes and for effects already present), so the edge set depends only on
which events are stored, not on the order they arrived in.

Absence signals (P002) are driven by an event-time watermark rather than
wall-clock timers, which keeps replays of historical logs deterministic.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

from .events import (
    CausalEdge,
    CausalEvent,
    EdgeType,
    EventPayload,
    EventType,
    Timestamp,
    dumps_canonical,
)

if TYPE_CHECKING:
    from .store import MemoryStore

ROLES = ("precursor", "trigger", "evidence", "effect", "absence", "propagation")
SCOPES = ("pod", "node", "configmap_consumers")

INTRA_CYCLE_THRESHOLD_MS = 100


@dataclass(frozen=True)
class PatternStep:
    event_type: EventType
    role: str
    window_seconds: int = 0
    confidence: float = 1.0
    same_scope: str = "pod"
    consumer_mode: Optional[str] = None

    def __post_init__(self) -> None:
        if not isinstance(self.event_type, EventType):
            object.__setattr__(self, "event_type", EventType(self.event_type))
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.same_scope not in SCOPES:
            raise ValueError(f"unknown scope {self.same_scope!r}")
        if self.role != "trigger" and self.window_seconds <= 0:
            raise ValueError(f"{self.role} step needs a positive window")

    @property
    def window_us(self) -> int:
        return self.window_seconds * 1_000_000

    def to_json(self) -> dict:
        doc = {
            "confidence": self.confidence,
            "event_type": self.event_type.value,
            "role": self.role,
            "same_scope": self.same_scope,
            "window_seconds": self.window_seconds,
        }
        if self.consumer_mode is not None:
            doc["consumer_mode"] = self.consumer_mode
        return doc


@dataclass(frozen=True)
class PatternDefinition:
    pattern_id: str
    steps: tuple[PatternStep, ...]
    description: str = ""

    def __post_init__(self) -> None:
        triggers = [s for s in self.steps if s.role == "trigger"]
        if len(triggers) != 1:
            raise ValueError(f"{self.pattern_id}: exactly one trigger step required, found {len(triggers)}")

    @property
    def trigger(self) -> PatternStep:
        return next(s for s in self.steps if s.role == "trigger")

    @property
    def related_steps(self) -> tuple[PatternStep, ...]:
        return tuple(s for s in self.steps if s.role != "trigger")

    def to_json(self) -> dict:
        return {
            "description": self.description,
            "pattern_id": self.pattern_id,
            "steps": [s.to_json() for s in self.steps],
        }

    def to_document(self) -> str:
        return dumps_canonical(self.to_json())

    @classmethod
    def from_json(cls, doc: dict) -> "PatternDefinition":
        steps = tuple(PatternStep(**step) for step in doc["steps"])
        return cls(pattern_id=doc["pattern_id"], steps=steps, description=doc.get("description", ""))

    @classmethod
    def from_document(cls, text: str) -> "PatternDefinition":
        return cls.from_json(json.loads(text))


P001 = PatternDefinition(
    "P001",
    (
        PatternStep(EventType.NodeMemoryPressure, "precursor", 300, 0.9, "node"),
        PatternStep(EventType.OOMKill, "trigger", 0, 1.0, "pod"),
        PatternStep(EventType.OOMKillEvidence, "evidence", 90, 1.0, "pod"),
        PatternStep(EventType.ContainerTerminated, "effect", 10, 1.0, "pod"),
    ),
    "OOMKill causal chain",
)
P002 = PatternDefinition(
    "P002",
    (
        PatternStep(EventType.ConfigMapChanged, "trigger", 0, 1.0, "configmap_consumers"),
        PatternStep(EventType.PodNotRestarted, "absence", 120, 1.0, "configmap_consumers", "env"),
    ),
    "ConfigMap env var silent misconfiguration",
)
P003 = PatternDefinition(
    "P003",
    (
        PatternStep(EventType.ConfigMapChanged, "trigger", 0, 1.0, "configmap_consumers"),
        PatternStep(EventType.KubeletSync, "propagation", 90, 1.0, "configmap_consumers", "volume"),
    ),
    "ConfigMap volume mount symlink swap propagation",
)
BUILTIN_PATTERNS: dict[str, PatternDefinition] = {p.pattern_id: p for p in (P001, P002, P003)}


def export_patterns(patterns=None) -> str:
    """Pattern library as a JSON document (sorted keys, one object)."""
    patterns = BUILTIN_PATTERNS.values() if patterns is None else patterns
    return dumps_canonical({"patterns": [p.to_json() for p in patterns]})


def import_patterns(document: str) -> dict[str, PatternDefinition]:
    doc = json.loads(document)
    return {p["pattern_id"]: PatternDefinition.from_json(p) for p in doc["patterns"]}


def classify_edge(edge: CausalEdge) -> str:
    return "intra_cycle" if edge.event_time_delta_ms < INTRA_CYCLE_THRESHOLD_MS else "cross_cycle"


# --------------------------------------------------------------------------- #
# Edge construction
# --------------------------------------------------------------------------- #


def _scope_filter(step: PatternStep, event: CausalEvent) -> Optional[dict]:
    if step.same_scope == "pod":
        if not event.pod_name:
            return None
        return {"namespace": event.namespace, "pod_name": event.pod_name}
    if step.same_scope == "node":
        if not event.node_name:
            return None
        return {"node_name": event.node_name}
    if not event.configmap_name:
        return None
    return {"namespace": event.namespace, "configmap_name": event.configmap_name}


def _store_edge(store: "MemoryStore", edge: CausalEdge) -> bool:
    cur = store.conn.execute(
        """INSERT OR IGNORE INTO causal_edges (from_event_id, to_event_id, edge_type, pattern_id,
               confidence, event_time_delta_us, construction_wall_ms)
           VALUES (?, ?, ?, ?, ?, ?, ?)""",
        (
            edge.from_event_id,
            edge.to_event_id,
            edge.edge_type.value,
            edge.pattern_id,
            edge.confidence,
            edge.event_time_delta_us,
            edge.construction_wall_ms,
        ),
    )
    return cur.rowcount == 1


def _link(store, pattern: PatternDefinition, step: PatternStep, event: CausalEvent, as_trigger: bool) -> list[CausalEdge]:
    started = time.perf_counter()
    scope = _scope_filter(step, event)
    if scope is None:
        return []
    t = event.timestamp
    # Precursors sit before the trigger; every other role follows it.
    cause_first = step.role != "precursor"
    if as_trigger:
        other_type = step.event_type
        window = (t, t.plus_us(step.window_us)) if cause_first else (t.plus_us(-step.window_us), t)
    else:
        other_type = pattern.trigger.event_type
        window = (t.plus_us(-step.window_us), t) if cause_first else (t, t.plus_us(step.window_us))
    candidates = store.events_in_window(dict(scope, event_type=other_type), window)
    pairs = []
    for other in candidates:
        if other.event_id == event.event_id:
            continue
        trigger, related = (event, other) if as_trigger else (other, event)
        src, dst = (trigger, related) if cause_first else (related, trigger)
        pairs.append((src, dst))
    if not pairs:
        return []
    elapsed_ms = (time.perf_counter() - started) * 1000
    edges = []
    for src, dst in pairs:
        edge = CausalEdge(
            from_event_id=src.event_id,
            to_event_id=dst.event_id,
            pattern_id=pattern.pattern_id,
            edge_type=EdgeType(step.role),
            confidence=step.confidence,
            event_time_delta_us=dst.timestamp.us - src.timestamp.us,
            construction_wall_ms=elapsed_ms / len(pairs),
        )
        if _store_edge(store, edge):
            edges.append(edge)
    return edges


def _patterns(store) -> list[PatternDefinition]:
    cached = getattr(store, "_pattern_cache", None)
    if cached is None:
        cached = [store.get_pattern(pid) for pid in store.pattern_ids()]
        store._pattern_cache = cached
    return cached


def on_event_inserted(store: "MemoryStore", event: CausalEvent) -> list[CausalEdge]:
    """Construct every edge between ``event`` and events already stored.

    Runs inside the caller's transaction. Absence steps are skipped here;
    they are resolved by :func:`advance_watermark`.
    """
    edges: list[CausalEdge] = []
    for pattern in _patterns(store):
        is_trigger = event.event_type is pattern.trigger.event_type
        for step in pattern.related_steps:
            if step.role == "absence":
                continue
            if is_trigger:
                edges.extend(_link(store, pattern, step, event, as_trigger=True))
            if event.event_type is step.event_type:
                edges.extend(_link(store, pattern, step, event, as_trigger=False))
    if event.event_type is EventType.ConfigMapChanged:
        wm = store.watermark
        if wm is not None:
            _, absence_edges = _resolve_triggers(store, [event], wm)
            edges.extend(absence_edges)
    return edges


# --------------------------------------------------------------------------- #
# Absence signals
# --------------------------------------------------------------------------- #

_REF_CARRIERS = (EventType.ContainerStarted, EventType.OOMKillEvidence)


def _absence_step(store) -> list[tuple[PatternDefinition, PatternStep]]:
    out = []
    for pattern in _patterns(store):
        for step in pattern.related_steps:
            if step.role == "absence":
                out.append((pattern, step))
    return out


def env_consumers(store: "MemoryStore", trigger: CausalEvent, mode: str = "env") -> list[str]:
    """Pods consuming the trigger's ConfigMap in ``mode`` as of the trigger time.

    Consumption is read from the most recent pod-scoped event carrying
    ConfigMap references; a later PodDeleted (up to the trigger) removes the pod.
    """
    latest = {ev.pod_name: ev for ev in store.latest_per_pod(trigger.namespace, trigger.timestamp, _REF_CARRIERS)}
    pods = []
    for pod, ev in sorted(latest.items()):
        if not any(r.name == trigger.configmap_name and r.mode == mode for r in ev.payload.configmap_refs):
            continue
        deleted = store.events_in_window(
            {"namespace": trigger.namespace, "pod_name": pod, "event_type": EventType.PodDeleted},
            (ev.timestamp, trigger.timestamp),
        )
        if not deleted:
            pods.append(pod)
    return pods


def absence_discriminator(trigger_id: str) -> int:
    return int(hashlib.sha256(trigger_id.encode("utf-8")).hexdigest()[:8], 16)


def _resolve_triggers(store, triggers, watermark: Timestamp):
    synthesized: list[CausalEvent] = []
    edges: list[CausalEdge] = []
    for pattern, step in _absence_step(store):
        for trigger in triggers:
            if trigger.event_type is not pattern.trigger.event_type:
                continue
            deadline = trigger.timestamp.plus_us(step.window_us)
            if not deadline < watermark:
                continue
            started = time.perf_counter()
            for pod in env_consumers(store, trigger, step.consumer_mode or "env"):
                restarted = [
                    ev
                    for ev in store.events_in_window(
                        {"namespace": trigger.namespace, "pod_name": pod, "event_type": EventType.ContainerStarted},
                        (trigger.timestamp, deadline),
                    )
                    if ev.timestamp > trigger.timestamp
                ]
                if restarted:
                    continue
                signal = CausalEvent.create(
                    step.event_type,
                    deadline,
                    trigger.namespace,
                    pod_name=pod,
                    configmap_name=trigger.configmap_name,
                    pattern_id=pattern.pattern_id,
                    discriminator=absence_discriminator(trigger.event_id),
                    payload=EventPayload(
                        content_hash_before=trigger.payload.content_hash_before,
                        content_hash_after=trigger.payload.content_hash_after,
                        changed_keys=trigger.payload.changed_keys,
                    ),
                )
                if not store._insert_event_row(signal, synthesized=True):
                    continue
                synthesized.append(signal)
                edge = CausalEdge(
                    from_event_id=trigger.event_id,
                    to_event_id=signal.event_id,
                    pattern_id=pattern.pattern_id,
                    edge_type=EdgeType(step.role),
                    confidence=step.confidence,
                    event_time_delta_us=signal.timestamp.us - trigger.timestamp.us,
                    construction_wall_ms=(time.perf_counter() - started) * 1000,
                )
                if _store_edge(store, edge):
                    edges.append(edge)
    return synthesized, edges


def advance_watermark(store: "MemoryStore", t: Timestamp) -> tuple[list[CausalEvent], list[CausalEdge]]:
    """Move the watermark to ``t`` and resolve triggers whose window closed.

    A trigger at time c with absence window W resolves once the watermark is
    strictly past c + W, so every event up to the deadline has been seen in a
    time-ordered stream. Each trigger resolves exactly once because the
    watermark only moves forward. Moving backwards is a no-op.
    """
    old = store.watermark
    if old is not None and t <= old:
        return [], []
    with store.transaction():
        store._set_watermark(t)
        steps = _absence_step(store)
        if not steps:
            return [], []
        window_us = max(step.window_us for _, step in steps)
        trigger_types = {p.trigger.event_type for p, _ in steps}
        # Triggers whose deadline c + W falls in [old, t).
        lo = None if old is None else old.plus_us(-window_us)
        hi = t.plus_us(-window_us - 1)
        if lo is not None and lo > hi:
            return [], []
        triggers = [
            ev
            for ev in store.events_in_window({}, (lo, hi), event_types=sorted(trigger_types))
            if old is None or not ev.timestamp.plus_us(window_us) < old
        ]
        return _resolve_triggers(store, triggers, t)


def rebuild_edges(store: "MemoryStore") -> int:
    """Drop all edges and synthesized events, then rebuild them from the event set."""
    with store.transaction():
        store.conn.execute("DELETE FROM causal_edges")
        store.conn.execute("DELETE FROM event WHERE synthesized = 1")
        store._set_watermark(None)
        store._pattern_cache = None
        last = None
        for event in list(store.iter_events()):
            on_event_inserted(store, event)
            last = event.timestamp
        if last is not None:
            advance_watermark(store, last)
        return store.conn.execute("SELECT COUNT(*) FROM causal_edges").fetchone()[0]
