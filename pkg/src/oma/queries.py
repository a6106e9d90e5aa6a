"""The three canonical queries: causal chain, pattern history, frozen state.

Every result renders to a stable JSON document (sorted keys) and to a plain
text table. The CLI and the HTTP service share these renderers so their
output is byte-identical.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .events import CausalEdge, CausalEvent, EventType, Snapshot, Timestamp, normalize_timestamp
from .simulator import NOT_FOUND, NotFound

DEFAULT_MAX_DEPTH = 10


class QueryError(LookupError):
    pass


class UnknownEvent(QueryError):
    pass


class UnknownPattern(QueryError):
    pass


# --------------------------------------------------------------------------- #
# Result types
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class ChainLink:
    edge: CausalEdge
    event: CausalEvent
    depth: int

    def to_json(self) -> dict:
        return {"depth": self.depth, "edge": _edge_json(self.edge), "event": self.event.to_json()}


@dataclass
class CausalChain:
    root: CausalEvent
    links: list[ChainLink] = field(default_factory=list)
    truncated: bool = False
    max_depth: int = DEFAULT_MAX_DEPTH

    def event_ids(self) -> list[str]:
        return [link.event.event_id for link in self.links]

    def to_json(self) -> dict:
        return {
            "links": [link.to_json() for link in self.links],
            "max_depth": self.max_depth,
            "root": self.root.to_json(),
            "truncated": self.truncated,
        }


@dataclass(frozen=True)
class PatternInstance:
    trigger_event: CausalEvent
    related: tuple[tuple[CausalEdge, CausalEvent], ...]

    def to_json(self) -> dict:
        return {
            "related": [{"edge": _edge_json(e), "event": ev.to_json()} for e, ev in self.related],
            "trigger_event": self.trigger_event.to_json(),
        }


@dataclass
class PatternInstanceSet:
    pattern_id: str
    since: Timestamp
    until: Timestamp
    instances: list[PatternInstance] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.instances)

    def to_json(self) -> dict:
        return {
            "instances": [i.to_json() for i in self.instances],
            "pattern_id": self.pattern_id,
            "window": [self.since.isoformat(), self.until.isoformat()],
        }


@dataclass(frozen=True)
class FrozenState:
    snapshot: Snapshot
    as_of: Timestamp

    @property
    def staleness_ms(self) -> int:
        return (self.as_of.us - self.snapshot.timestamp.us) // 1000

    def to_json(self) -> dict:
        return {
            "as_of": self.as_of.isoformat(),
            "snapshot": self.snapshot.to_json(),
            "staleness_ms": self.staleness_ms,
        }


def _edge_json(edge: CausalEdge) -> dict:
    doc = edge.to_json()
    doc.pop("construction_wall_ms", None)
    return doc


# --------------------------------------------------------------------------- #
# Queries
# --------------------------------------------------------------------------- #


def q1_causal_chain(store, event_id: str, max_depth: int = DEFAULT_MAX_DEPTH) -> CausalChain:
    """Causal predecessors of ``event_id`` by reverse breadth-first search.

    Each ancestor appears once, at its shortest distance from the root.
    ``truncated`` is set when unexplored predecessors remain at ``max_depth``.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be non-negative")
    root = store.get_event(event_id)
    if root is None:
        raise UnknownEvent(f"unknown event {event_id!r}")
    chain = CausalChain(root=root, max_depth=max_depth)
    visited = {event_id}
    frontier: deque[tuple[str, int]] = deque([(event_id, 0)])
    while frontier:
        current, depth = frontier.popleft()
        incoming = [e for e in store.edges_into(current) if e.from_event_id not in visited]
        if not incoming:
            continue
        if depth >= max_depth:
            chain.truncated = True
            continue
        for edge in incoming:
            if edge.from_event_id in visited:
                continue
            visited.add(edge.from_event_id)
            parent = store.get_event(edge.from_event_id)
            chain.links.append(ChainLink(edge, parent, depth + 1))
            frontier.append((edge.from_event_id, depth + 1))
    chain.links.sort(key=lambda l: (l.depth, l.event.timestamp, l.event.event_id))
    return chain


def q2_pattern_history(store, pattern_id: str, since, until) -> PatternInstanceSet:
    """One instance per trigger event of the pattern inside [since, until]."""
    pattern = store.get_pattern(pattern_id)
    if pattern is None:
        raise UnknownPattern(f"unknown pattern {pattern_id!r}")
    lo, hi = normalize_timestamp(since), normalize_timestamp(until)
    if lo > hi:
        raise ValueError("since must not be after until")
    out = PatternInstanceSet(pattern_id, lo, hi)
    trigger_type = EventType(pattern.trigger.event_type)
    for trigger in store.events_in_window({"event_type": trigger_type}, (lo, hi)):
        related = []
        for edge in store.edges_from(trigger.event_id):
            if edge.pattern_id == pattern_id:
                related.append((edge, store.get_event(edge.to_event_id)))
        for edge in store.edges_into(trigger.event_id):
            if edge.pattern_id == pattern_id:
                related.append((edge, store.get_event(edge.from_event_id)))
        related.sort(key=lambda pair: (pair[1].timestamp, pair[1].event_id, pair[0].edge_type.value))
        out.instances.append(PatternInstance(trigger, tuple(related)))
    return out


def q3_state_at(store, object_kind: str, object_name: str, namespace: str, t) -> FrozenState | NotFound:
    """Latest snapshot of the object at or before ``t``; NOT_FOUND when none exists."""
    at = normalize_timestamp(t)
    snap = store.latest_snapshot(object_kind, object_name, namespace, at)
    if snap is None:
        return NOT_FOUND
    return FrozenState(snap, at)


# --------------------------------------------------------------------------- #
# Rendering
# --------------------------------------------------------------------------- #


def render_json(result) -> str:
    if isinstance(result, NotFound):
        doc: dict = {"error": "NotFound"}
    elif isinstance(result, dict):
        doc = result
    else:
        doc = result.to_json()
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*headers).rstrip(), fmt.format(*("-" * w for w in widths)).rstrip()]
    lines += [fmt.format(*row).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


def _scope(ev: CausalEvent) -> str:
    return ev.pod_name or ev.node_name or ev.configmap_name or "-"


def render_text(result) -> str:
    if isinstance(result, NotFound):
        return "not found\n"
    if isinstance(result, CausalChain):
        head = f"root {result.root.event_id} {result.root.event_type} {result.root.timestamp} {_scope(result.root)}\n"
        rows = [
            [str(l.depth), l.event.event_id, str(l.event.event_type), str(l.event.timestamp),
             l.edge.edge_type.value, f"{l.edge.confidence:.1f}", f"{l.edge.event_time_delta_ms:.3f}"]
            for l in result.links
        ]
        body = _table(["depth", "event_id", "type", "timestamp", "edge", "conf", "delta_ms"], rows)
        tail = "truncated at max depth\n" if result.truncated else ""
        return head + body + tail
    if isinstance(result, PatternInstanceSet):
        rows = [
            [i.trigger_event.event_id, str(i.trigger_event.timestamp), _scope(i.trigger_event), str(len(i.related))]
            for i in result.instances
        ]
        head = f"{result.pattern_id} {result.since} .. {result.until}: {len(result.instances)} instance(s)\n"
        return head + _table(["trigger", "timestamp", "scope", "related"], rows)
    if isinstance(result, FrozenState):
        snap = result.snapshot
        head = (f"{snap.object_kind.value}/{snap.namespace}/{snap.object_name} at {snap.timestamp} "
                f"(as of {result.as_of}, staleness {result.staleness_ms} ms)\n")
        return head + json.dumps(snap.state, sort_keys=True, indent=2) + "\n"
    if isinstance(result, dict):
        return "".join(f"{k}: {json.dumps(v, sort_keys=True)}\n" for k, v in sorted(result.items()))
    raise TypeError(f"cannot render {type(result).__name__}")


def render(result, fmt: str = "json") -> str:
    if fmt == "json":
        return render_json(result)
    if fmt == "text":
        return render_text(result)
    raise ValueError(f"unknown format {fmt!r}")
