"""Brute-force reference for the edge set.

A plain O(n^2) scan over every ordered pair of events with the linking rules
written out by hand. It deliberately shares no code with the pattern engine
so the two can be checked against each other.
"""

from __future__ import annotations

import hashlib
import random
from typing import Iterable, NamedTuple

from .events import (
    CausalEvent,
    ConfigMapRef,
    EventPayload,
    EventType,
    NodeSnapshot,
    QoSClass,
    Timestamp,
    compute_event_id,
    normalize_timestamp,
)

SECOND_US = 1_000_000


class EdgeKey(NamedTuple):
    from_event_id: str
    to_event_id: str
    edge_type: str
    pattern_id: str
    confidence: float
    event_time_delta_us: int


def _same_pod(a: CausalEvent, b: CausalEvent) -> bool:
    return a.pod_name is not None and a.namespace == b.namespace and a.pod_name == b.pod_name


def pair_edges(events: list[CausalEvent]) -> set[EdgeKey]:
    """Edges from the four pairwise rules (precursor, evidence, effect, propagation)."""
    out: set[EdgeKey] = set()
    OOM, EVID, TERM = EventType.OOMKill, EventType.OOMKillEvidence, EventType.ContainerTerminated
    NMP, CMC, SYNC = EventType.NodeMemoryPressure, EventType.ConfigMapChanged, EventType.KubeletSync
    for a in events:
        for b in events:
            if a.event_id == b.event_id:
                continue
            d = b.timestamp.us - a.timestamp.us
            if d < 0:
                continue
            ta, tb = a.event_type, b.event_type
            if ta is NMP and tb is OOM:
                if a.node_name is not None and a.node_name == b.node_name and d <= 300 * SECOND_US:
                    out.add(EdgeKey(a.event_id, b.event_id, "precursor", "P001", 0.9, d))
            elif ta is OOM and tb is EVID:
                if _same_pod(a, b) and d <= 90 * SECOND_US:
                    out.add(EdgeKey(a.event_id, b.event_id, "evidence", "P001", 1.0, d))
            elif ta is OOM and tb is TERM:
                if _same_pod(a, b) and d <= 10 * SECOND_US:
                    out.add(EdgeKey(a.event_id, b.event_id, "effect", "P001", 1.0, d))
            elif ta is CMC and tb is SYNC:
                if (
                    a.configmap_name is not None
                    and a.namespace == b.namespace
                    and a.configmap_name == b.configmap_name
                    and d <= 90 * SECOND_US
                ):
                    out.add(EdgeKey(a.event_id, b.event_id, "propagation", "P003", 1.0, d))
    return out


def absence_signals(events: list[CausalEvent]) -> tuple[list[CausalEvent], set[EdgeKey]]:
    """PodNotRestarted events and absence edges implied by the full stream.

    The watermark is the latest source event time; a ConfigMap change at c is
    decided once the watermark is strictly past c + 120 s.
    """
    source = [e for e in events if e.event_type is not EventType.PodNotRestarted]
    if not source:
        return [], set()
    watermark = max(e.timestamp.us for e in source)
    signals: list[CausalEvent] = []
    edges: set[EdgeKey] = set()
    for c in source:
        if c.event_type is not EventType.ConfigMapChanged:
            continue
        deadline = c.timestamp.us + 120 * SECOND_US
        if not deadline < watermark:
            continue
        # latest ref-carrying event per pod at or before the change
        latest: dict[str, CausalEvent] = {}
        for e in source:
            if (
                e.event_type in (EventType.ContainerStarted, EventType.OOMKillEvidence)
                and e.namespace == c.namespace
                and e.pod_name
                and e.payload.configmap_refs is not None
                and e.timestamp.us <= c.timestamp.us
            ):
                prev = latest.get(e.pod_name)
                if prev is None or (e.timestamp.us, e.event_id) > (prev.timestamp.us, prev.event_id):
                    latest[e.pod_name] = e
        for pod, carrier in latest.items():
            if not any(r.name == c.configmap_name and r.mode == "env" for r in carrier.payload.configmap_refs):
                continue
            deleted = any(
                e.event_type is EventType.PodDeleted
                and e.namespace == c.namespace
                and e.pod_name == pod
                and carrier.timestamp.us <= e.timestamp.us <= c.timestamp.us
                for e in source
            )
            if deleted:
                continue
            restarted = any(
                e.event_type is EventType.ContainerStarted
                and e.namespace == c.namespace
                and e.pod_name == pod
                and c.timestamp.us < e.timestamp.us <= deadline
                for e in source
            )
            if restarted:
                continue
            disc = int(hashlib.sha256(c.event_id.encode("utf-8")).hexdigest()[:8], 16)
            ts = Timestamp(deadline)
            signal = CausalEvent(
                event_id=compute_event_id(EventType.PodNotRestarted, c.namespace, pod, None, c.configmap_name, ts, disc),
                timestamp=ts,
                event_type=EventType.PodNotRestarted,
                namespace=c.namespace,
                pod_name=pod,
                configmap_name=c.configmap_name,
                pattern_id="P002",
                discriminator=disc,
                payload=EventPayload(
                    content_hash_before=c.payload.content_hash_before,
                    content_hash_after=c.payload.content_hash_after,
                    changed_keys=c.payload.changed_keys,
                ),
            )
            signals.append(signal)
            edges.add(EdgeKey(c.event_id, signal.event_id, "absence", "P002", 1.0, deadline - c.timestamp.us))
    return signals, edges


def brute_force_edges(events: Iterable[CausalEvent]) -> set[EdgeKey]:
    """Complete expected edge set for a stream of source events."""
    events = list({e.event_id: e for e in events}.values())
    edges = pair_edges(events)
    _, absence = absence_signals(events)
    return edges | absence


def edge_keys(edges) -> set[EdgeKey]:
    """Project store edges (or raw rows) onto comparable keys."""
    out = set()
    for e in edges:
        if isinstance(e, tuple):
            out.add(EdgeKey(*e))
        else:
            out.add(
                EdgeKey(e.from_event_id, e.to_event_id, e.edge_type.value, e.pattern_id, e.confidence, e.event_time_delta_us)
            )
    return out


# --------------------------------------------------------------------------- #
# Random streams
# --------------------------------------------------------------------------- #

# window lengths that matter to the rules, for boundary probing
_BOUNDARIES_S = (10, 90, 120, 300)


def random_stream(rng: random.Random, n_events: int, start: str = "2026-01-15T10:00:00Z") -> list[CausalEvent]:
    """A valid but adversarial source stream over a few pods, nodes and ConfigMaps.

    About a fifth of the events are placed exactly on, or one microsecond
    past, a window boundary relative to an earlier event.
    """
    t0 = normalize_timestamp(start).us
    span_us = rng.choice((60, 300, 900, 1800)) * 1_000_000
    pods = [f"pod-{i}" for i in range(rng.randint(1, 4))]
    nodes = [f"node-{i}" for i in range(rng.randint(1, 2))]
    cms = [f"cm-{i}" for i in range(rng.randint(1, 2))]
    pod_node = {p: rng.choice(nodes) for p in pods}
    ns = "rand"
    types = [
        (EventType.OOMKill, 4), (EventType.OOMKillEvidence, 6), (EventType.ContainerTerminated, 3),
        (EventType.ContainerStarted, 3), (EventType.NodeMemoryPressure, 1), (EventType.PodDeleted, 1),
        (EventType.ConfigMapChanged, 1), (EventType.KubeletSync, 2),
    ]
    population = [t for t, w in types for _ in range(w)]
    out: dict[str, CausalEvent] = {}
    stamps: list[int] = []
    while len(out) < n_events:
        if stamps and rng.random() < 0.2:
            ts = rng.choice(stamps) + rng.choice(_BOUNDARIES_S) * 1_000_000 + rng.choice((0, 0, 1, -1))
        else:
            ts = t0 + rng.randrange(span_us)
        etype = rng.choice(population)
        pod = rng.choice(pods)
        node = pod_node[pod]
        cm = rng.choice(cms)
        kw: dict = {}
        refs = tuple(
            ConfigMapRef(c, rng.choice(("env", "volume"))) for c in cms if rng.random() < 0.7
        )
        if etype in (EventType.OOMKill, EventType.OOMKillEvidence):
            payload = EventPayload(exit_code=137, reason="OOMKilled")
            if etype is EventType.OOMKillEvidence:
                payload = EventPayload(
                    exit_code=137, reason="OOMKilled", memory_limit_bytes=64 << 20,
                    qos_class=QoSClass.Guaranteed, restart_count=rng.randint(0, 5),
                    configmap_refs=refs, node_snapshot=NodeSnapshot(4 << 30, False, node),
                )
            kw = dict(pod_name=pod, container_name="app", node_name=node, pattern_id="P001", payload=payload)
        elif etype is EventType.ContainerTerminated:
            kw = dict(pod_name=pod, container_name="app", node_name=node, payload=EventPayload(exit_code=137))
        elif etype is EventType.ContainerStarted:
            kw = dict(pod_name=pod, container_name="app", node_name=node,
                      payload=EventPayload(configmap_refs=refs, restart_count=rng.randint(0, 5)))
        elif etype is EventType.PodDeleted:
            kw = dict(pod_name=pod, container_name="app", node_name=node)
        elif etype is EventType.NodeMemoryPressure:
            kw = dict(node_name=rng.choice(nodes), pattern_id="P001")
        elif etype is EventType.ConfigMapChanged:
            before, after = rng.sample("0123456789abcdef", 2)
            kw = dict(configmap_name=cm, payload=EventPayload(
                content_hash_before=before * 64, content_hash_after=after * 64, changed_keys=("KEY",)))
        elif etype is EventType.KubeletSync:
            kw = dict(pod_name=pod, node_name=node, configmap_name=cm, pattern_id="P003",
                      payload=EventPayload(propagation_latency_ms=rng.randint(0, 90_000)))
        ev = CausalEvent.create(etype, Timestamp(ts), ns, **kw)
        if ev.event_id not in out:
            out[ev.event_id] = ev
            stamps.append(ts)
    return sorted(out.values(), key=lambda e: (e.timestamp.us, e.event_id))
