"""Canonical event, edge and snapshot records plus the line-delimited log codec.

Every component (simulator, ingest, store, queries) speaks this format. A log
line is one compact JSON object with sorted keys; optional fields are omitted
rather than written as ``null`` so that lines stay byte-stable across runs.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Any, Iterable, Mapping, Optional

SCHEMA = 1

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_ISO_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})[T ](\d{2}):(\d{2}):(\d{2})"
    r"(?:\.(\d{1,9}))?"
    r"(Z|z|[+-]\d{2}:?\d{2})?$"
)


class DecodeError(ValueError):
    """Base class for anything that makes a log line unusable."""


class MalformedLine(DecodeError):
    pass


class MalformedTimestamp(DecodeError):
    pass


class UnknownEventType(DecodeError):
    pass


class InvalidEvent(DecodeError):
    """A structurally valid line whose content breaks an event invariant."""


# --------------------------------------------------------------------------- #
# Timestamps
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, order=True)
class Timestamp:
    """UTC instant with microsecond precision, stored as microseconds since epoch."""

    us: int

    @classmethod
    def parse(cls, raw: str) -> "Timestamp":
        return normalize_timestamp(raw)

    @classmethod
    def from_datetime(cls, dt: datetime) -> "Timestamp":
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return cls((dt - _EPOCH) // timedelta(microseconds=1))

    def to_datetime(self) -> datetime:
        return _EPOCH + timedelta(microseconds=self.us)

    def isoformat(self) -> str:
        dt = self.to_datetime()
        base = dt.strftime("%Y-%m-%dT%H:%M:%S")
        if dt.microsecond:
            base += f".{dt.microsecond:06d}"
        return base + "Z"

    def plus_us(self, delta_us: int) -> "Timestamp":
        return Timestamp(self.us + delta_us)

    def plus_seconds(self, seconds: float) -> "Timestamp":
        return Timestamp(self.us + round(seconds * 1_000_000))

    def __str__(self) -> str:
        return self.isoformat()


def normalize_timestamp(raw: str | Timestamp) -> Timestamp:
    """Parse an ISO 8601 instant, folding any UTC offset into the instant.

    A missing offset is read as UTC. Fractions longer than six digits are
    truncated to microseconds.
    """
    if isinstance(raw, Timestamp):
        return raw
    if not isinstance(raw, str):
        raise MalformedTimestamp(f"timestamp must be a string, got {type(raw).__name__}")
    m = _ISO_RE.match(raw.strip())
    if m is None:
        raise MalformedTimestamp(f"unparseable timestamp {raw!r}")
    year, month, day, hour, minute, second, frac, offset = m.groups()
    micro = int((frac or "0").ljust(6, "0")[:6])
    try:
        dt = datetime(
            int(year), int(month), int(day), int(hour), int(minute), int(second),
            micro, tzinfo=timezone.utc,
        )
    except ValueError as exc:
        raise MalformedTimestamp(f"invalid timestamp {raw!r}: {exc}") from None
    if offset and offset not in ("Z", "z"):
        sign = -1 if offset[0] == "-" else 1
        digits = offset[1:].replace(":", "")
        hours, minutes = int(digits[:2]), int(digits[2:])
        if hours > 23 or minutes > 59:
            raise MalformedTimestamp(f"invalid UTC offset in {raw!r}")
        dt -= sign * timedelta(hours=hours, minutes=minutes)
    return Timestamp.from_datetime(dt)


# --------------------------------------------------------------------------- #
# Enumerations
# --------------------------------------------------------------------------- #


class EventType(str, enum.Enum):
    NodeMemoryPressure = "NodeMemoryPressure"
    OOMKill = "OOMKill"
    OOMKillEvidence = "OOMKillEvidence"
    ContainerTerminated = "ContainerTerminated"
    ContainerStarted = "ContainerStarted"
    PodDeleted = "PodDeleted"
    ConfigMapChanged = "ConfigMapChanged"
    KubeletSync = "KubeletSync"
    # Synthesized by the pattern engine only (absence signal).
    PodNotRestarted = "PodNotRestarted"

    def __str__(self) -> str:
        return self.value


SOURCE_EVENT_TYPES = frozenset(t for t in EventType if t is not EventType.PodNotRestarted)


class EdgeType(str, enum.Enum):
    precursor = "precursor"
    evidence = "evidence"
    effect = "effect"
    absence = "absence"
    propagation = "propagation"

    def __str__(self) -> str:
        return self.value


class QoSClass(str, enum.Enum):
    Guaranteed = "Guaranteed"
    Burstable = "Burstable"
    BestEffort = "BestEffort"


class ObjectKind(str, enum.Enum):
    Pod = "Pod"
    Node = "Node"
    ConfigMap = "ConfigMap"


def _event_type(value: Any) -> EventType:
    try:
        return EventType(value)
    except ValueError:
        raise UnknownEventType(f"unknown event_type {value!r}") from None


# --------------------------------------------------------------------------- #
# Payload
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class ConfigMapRef:
    name: str
    mode: str  # "env" | "volume"

    def __post_init__(self) -> None:
        if self.mode not in ("env", "volume"):
            raise InvalidEvent(f"configmap ref mode must be env or volume, got {self.mode!r}")

    def to_json(self) -> dict:
        return {"mode": self.mode, "name": self.name}

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "ConfigMapRef":
        return cls(name=doc["name"], mode=doc["mode"])


@dataclass(frozen=True)
class NodeSnapshot:
    allocatable_memory_bytes: int
    memory_pressure: bool
    node_name: str

    def to_json(self) -> dict:
        return {
            "allocatable_memory_bytes": self.allocatable_memory_bytes,
            "memory_pressure": self.memory_pressure,
            "node_name": self.node_name,
        }

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "NodeSnapshot":
        return cls(
            allocatable_memory_bytes=int(doc["allocatable_memory_bytes"]),
            memory_pressure=bool(doc["memory_pressure"]),
            node_name=doc["node_name"],
        )


_PAYLOAD_INT_FIELDS = (
    "exit_code",
    "memory_limit_bytes",
    "memory_request_bytes",
    "cpu_limit_millicores",
    "cpu_request_millicores",
    "restart_count",
    "propagation_latency_ms",
)


@dataclass(frozen=True)
class EventPayload:
    exit_code: Optional[int] = None
    reason: Optional[str] = None
    started_at: Optional[Timestamp] = None
    finished_at: Optional[Timestamp] = None
    memory_limit_bytes: Optional[int] = None
    memory_request_bytes: Optional[int] = None
    cpu_limit_millicores: Optional[int] = None
    cpu_request_millicores: Optional[int] = None
    qos_class: Optional[QoSClass] = None
    restart_count: Optional[int] = None
    configmap_refs: Optional[tuple[ConfigMapRef, ...]] = None
    content_hash_before: Optional[str] = None
    content_hash_after: Optional[str] = None
    changed_keys: Optional[tuple[str, ...]] = None
    node_snapshot: Optional[NodeSnapshot] = None
    propagation_latency_ms: Optional[int] = None

    def __post_init__(self) -> None:
        if self.restart_count is not None and self.restart_count < 0:
            raise InvalidEvent("restart_count must be >= 0")
        if self.qos_class is not None and not isinstance(self.qos_class, QoSClass):
            object.__setattr__(self, "qos_class", QoSClass(self.qos_class))
        if self.configmap_refs is not None and not isinstance(self.configmap_refs, tuple):
            object.__setattr__(self, "configmap_refs", tuple(self.configmap_refs))
        if self.changed_keys is not None and not isinstance(self.changed_keys, tuple):
            object.__setattr__(self, "changed_keys", tuple(self.changed_keys))

    def to_json(self) -> dict:
        out: dict[str, Any] = {}
        for name in _PAYLOAD_INT_FIELDS:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        if self.reason is not None:
            out["reason"] = self.reason
        if self.started_at is not None:
            out["started_at"] = self.started_at.isoformat()
        if self.finished_at is not None:
            out["finished_at"] = self.finished_at.isoformat()
        if self.qos_class is not None:
            out["qos_class"] = self.qos_class.value
        if self.configmap_refs is not None:
            out["configmap_refs"] = [r.to_json() for r in self.configmap_refs]
        if self.content_hash_before is not None:
            out["content_hash_before"] = self.content_hash_before
        if self.content_hash_after is not None:
            out["content_hash_after"] = self.content_hash_after
        if self.changed_keys is not None:
            out["changed_keys"] = list(self.changed_keys)
        if self.node_snapshot is not None:
            out["node_snapshot"] = self.node_snapshot.to_json()
        return out

    @classmethod
    def from_json(cls, doc: Mapping[str, Any]) -> "EventPayload":
        if not isinstance(doc, Mapping):
            raise MalformedLine("payload must be an object")
        kwargs: dict[str, Any] = {}
        try:
            for name in _PAYLOAD_INT_FIELDS:
                if name in doc:
                    value = doc[name]
                    if isinstance(value, bool) or not isinstance(value, int):
                        raise InvalidEvent(f"payload.{name} must be an integer")
                    kwargs[name] = value
            if "reason" in doc:
                kwargs["reason"] = str(doc["reason"])
            if "started_at" in doc:
                kwargs["started_at"] = normalize_timestamp(doc["started_at"])
            if "finished_at" in doc:
                kwargs["finished_at"] = normalize_timestamp(doc["finished_at"])
            if "qos_class" in doc:
                kwargs["qos_class"] = QoSClass(doc["qos_class"])
            if "configmap_refs" in doc:
                kwargs["configmap_refs"] = tuple(ConfigMapRef.from_json(r) for r in doc["configmap_refs"])
            if "content_hash_before" in doc:
                kwargs["content_hash_before"] = str(doc["content_hash_before"])
            if "content_hash_after" in doc:
                kwargs["content_hash_after"] = str(doc["content_hash_after"])
            if "changed_keys" in doc:
                kwargs["changed_keys"] = tuple(str(k) for k in doc["changed_keys"])
            if "node_snapshot" in doc:
                kwargs["node_snapshot"] = NodeSnapshot.from_json(doc["node_snapshot"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DecodeError):
                raise
            raise InvalidEvent(f"bad payload: {exc}") from None
        return cls(**kwargs)


# --------------------------------------------------------------------------- #
# Events
# --------------------------------------------------------------------------- #


def compute_event_id(
    event_type: EventType | str,
    namespace: str,
    pod_name: Optional[str],
    container_name: Optional[str],
    configmap_name: Optional[str],
    timestamp: Timestamp | str,
    discriminator: int = 0,
) -> str:
    """First 16 hex chars of SHA-256 over the pipe-joined identity fields."""
    timestamp = normalize_timestamp(timestamp)
    canonical = "|".join(
        (
            str(event_type),
            namespace,
            pod_name or "",
            container_name or "",
            configmap_name or "",
            timestamp.isoformat(),
            str(discriminator),
        )
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


_OOM_TYPES = (EventType.OOMKill, EventType.OOMKillEvidence)


@dataclass(frozen=True)
class CausalEvent:
    """An immutable lifecycle event.

    ``id_mismatch`` is set by :func:`decode_event` when the embedded
    ``event_id`` does not match the recomputed one. It is not part of the
    event's identity and is never serialized.
    """

    event_id: str
    timestamp: Timestamp
    event_type: EventType
    namespace: str
    pod_name: Optional[str] = None
    container_name: Optional[str] = None
    node_name: Optional[str] = None
    configmap_name: Optional[str] = None
    pattern_id: Optional[str] = None
    discriminator: int = 0
    payload: EventPayload = field(default_factory=EventPayload)
    id_mismatch: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not isinstance(self.event_type, EventType):
            object.__setattr__(self, "event_type", _event_type(self.event_type))
        _validate(self)

    @classmethod
    def create(
        cls,
        event_type: EventType | str,
        timestamp: Timestamp | str,
        namespace: str,
        *,
        pod_name: Optional[str] = None,
        container_name: Optional[str] = None,
        node_name: Optional[str] = None,
        configmap_name: Optional[str] = None,
        pattern_id: Optional[str] = None,
        discriminator: int = 0,
        payload: Optional[EventPayload] = None,
    ) -> "CausalEvent":
        """Build an event with its deterministic ID filled in."""
        etype = event_type if isinstance(event_type, EventType) else _event_type(event_type)
        ts = normalize_timestamp(timestamp)
        return cls(
            event_id=compute_event_id(etype, namespace, pod_name, container_name, configmap_name, ts, discriminator),
            timestamp=ts,
            event_type=etype,
            namespace=namespace,
            pod_name=pod_name,
            container_name=container_name,
            node_name=node_name,
            configmap_name=configmap_name,
            pattern_id=pattern_id,
            discriminator=discriminator,
            payload=payload or EventPayload(),
        )

    def expected_id(self) -> str:
        return compute_event_id(
            self.event_type, self.namespace, self.pod_name, self.container_name,
            self.configmap_name, self.timestamp, self.discriminator,
        )

    def to_json(self) -> dict:
        doc: dict[str, Any] = {
            "event_id": self.event_id,
            "event_type": self.event_type.value,
            "namespace": self.namespace,
            "payload": self.payload.to_json(),
            "schema": SCHEMA,
            "timestamp": self.timestamp.isoformat(),
        }
        for name in ("pod_name", "container_name", "node_name", "configmap_name", "pattern_id"):
            value = getattr(self, name)
            if value is not None:
                doc[name] = value
        if self.discriminator:
            doc["discriminator"] = self.discriminator
        return doc


def _validate(ev: CausalEvent) -> None:
    if not ev.event_id:
        raise InvalidEvent("event_id is required")
    if not ev.namespace:
        raise InvalidEvent("namespace is required")
    if ev.discriminator < 0:
        raise InvalidEvent("discriminator must be >= 0")
    p = ev.payload
    if ev.event_type in _OOM_TYPES:
        if not (ev.pod_name and ev.container_name and ev.node_name):
            raise InvalidEvent(f"{ev.event_type} requires pod_name, container_name and node_name")
        if p.exit_code != 137 or p.reason != "OOMKilled":
            raise InvalidEvent(f"{ev.event_type} requires exit_code 137 and reason OOMKilled")
    if ev.event_type is EventType.OOMKillEvidence:
        missing = [
            name
            for name in ("memory_limit_bytes", "qos_class", "restart_count", "configmap_refs", "node_snapshot")
            if getattr(p, name) is None
        ]
        if missing:
            raise InvalidEvent(f"OOMKillEvidence missing capture fields: {', '.join(missing)}")
    if ev.event_type is EventType.ConfigMapChanged:
        if not ev.configmap_name:
            raise InvalidEvent("ConfigMapChanged requires configmap_name")
        if not p.content_hash_before or not p.content_hash_after or p.content_hash_before == p.content_hash_after:
            raise InvalidEvent("ConfigMapChanged requires differing content hashes")
        if not p.changed_keys:
            raise InvalidEvent("ConfigMapChanged requires changed_keys")
    if ev.event_type is EventType.NodeMemoryPressure and not ev.node_name:
        raise InvalidEvent("NodeMemoryPressure requires node_name")
    if ev.event_type in (EventType.KubeletSync, EventType.PodNotRestarted):
        if not (ev.configmap_name and ev.pod_name):
            raise InvalidEvent(f"{ev.event_type} requires configmap_name and pod_name")


def dumps_canonical(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def encode_event(event: CausalEvent) -> str:
    return dumps_canonical(event.to_json())


def event_from_json(doc: Mapping[str, Any], verify_id: bool = True) -> CausalEvent:
    """Build an event from its JSON object.

    With ``verify_id`` false a present event_id is trusted as is; the store
    uses this for rows that were already checked on the way in.
    """
    if not isinstance(doc, dict) and not isinstance(doc, Mapping):
        raise MalformedLine("event line must be a JSON object")
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise MalformedLine(f"unsupported schema {schema!r}")
    try:
        etype = _event_type(doc["event_type"])
        ts = normalize_timestamp(doc["timestamp"])
        namespace = doc["namespace"]
    except KeyError as exc:
        raise MalformedLine(f"missing field {exc.args[0]!r}") from None
    disc = doc.get("discriminator", 0)
    if isinstance(disc, bool) or not isinstance(disc, int):
        raise InvalidEvent("discriminator must be an integer")
    fields = {
        name: doc.get(name)
        for name in ("pod_name", "container_name", "node_name", "configmap_name", "pattern_id")
    }
    for name, value in fields.items():
        if value is not None and not isinstance(value, str):
            raise InvalidEvent(f"{name} must be a string")
    if not isinstance(namespace, str):
        raise InvalidEvent("namespace must be a string")
    payload = EventPayload.from_json(doc.get("payload", {}))
    event_id = doc.get("event_id")
    if verify_id or not event_id:
        expected = compute_event_id(
            etype, namespace, fields["pod_name"], fields["container_name"], fields["configmap_name"], ts, disc
        )
        event_id = event_id or expected
    else:
        expected = event_id
    if not isinstance(event_id, str):
        raise InvalidEvent("event_id must be a string")
    return CausalEvent(
        event_id=event_id,
        timestamp=ts,
        event_type=etype,
        namespace=namespace,
        discriminator=disc,
        payload=payload,
        id_mismatch=event_id != expected,
        **fields,
    )


def decode_event(line: str, verify_id: bool = True) -> CausalEvent:
    """Parse one log line. Raises a :class:`DecodeError` subclass on bad input."""
    try:
        doc = json.loads(line)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedLine(f"unparseable JSON: {exc}") from None
    return event_from_json(doc, verify_id)


# --------------------------------------------------------------------------- #
# Edges and snapshots
# --------------------------------------------------------------------------- #

CONFIDENCES = (0.9, 1.0)


@dataclass(frozen=True)
class CausalEdge:
    """Directed cause -> effect link.

    Event-time deltas are kept in microseconds; ``event_time_delta_ms`` is the
    derived millisecond view used for classification and reports.
    """

    from_event_id: str
    to_event_id: str
    pattern_id: str
    edge_type: EdgeType
    confidence: float
    event_time_delta_us: int
    construction_wall_ms: float = field(default=0.0, compare=False)

    def __post_init__(self) -> None:
        if not isinstance(self.edge_type, EdgeType):
            object.__setattr__(self, "edge_type", EdgeType(self.edge_type))
        if self.confidence not in CONFIDENCES:
            raise ValueError(f"confidence must be one of {CONFIDENCES}, got {self.confidence}")
        if self.event_time_delta_us < 0:
            raise ValueError("edges must point forward in event time")
        if self.from_event_id == self.to_event_id:
            raise ValueError("self-edges are not allowed")

    @property
    def event_time_delta_ms(self) -> float:
        return self.event_time_delta_us / 1000

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.from_event_id, self.to_event_id, self.edge_type.value)

    def to_json(self) -> dict:
        doc = {
            "confidence": self.confidence,
            "construction_wall_ms": round(self.construction_wall_ms, 6),
            "edge_type": self.edge_type.value,
            "event_time_delta_ms": self.event_time_delta_ms,
            "from_event_id": self.from_event_id,
            "pattern_id": self.pattern_id,
            "to_event_id": self.to_event_id,
        }
        if self.edge_type is EdgeType.propagation:
            doc["propagation_latency_ms"] = self.event_time_delta_us // 1000
        return doc


@dataclass(frozen=True)
class Snapshot:
    """Frozen object state. ``state_blob`` is canonical JSON text."""

    object_kind: ObjectKind
    object_name: str
    namespace: str
    timestamp: Timestamp
    state_blob: str

    def __post_init__(self) -> None:
        if not isinstance(self.object_kind, ObjectKind):
            object.__setattr__(self, "object_kind", ObjectKind(self.object_kind))

    @classmethod
    def from_state(
        cls, object_kind: ObjectKind | str, object_name: str, namespace: str,
        timestamp: Timestamp | str, state: Mapping[str, Any],
    ) -> "Snapshot":
        return cls(ObjectKind(object_kind), object_name, namespace, normalize_timestamp(timestamp), dumps_canonical(state))

    @property
    def state(self) -> dict:
        return json.loads(self.state_blob)

    @property
    def key(self) -> tuple[str, str, str, int]:
        return (self.object_kind.value, self.object_name, self.namespace, self.timestamp.us)

    def to_json(self) -> dict:
        return {
            "namespace": self.namespace,
            "object_kind": self.object_kind.value,
            "object_name": self.object_name,
            "schema": SCHEMA,
            "state": self.state,
            "timestamp": self.timestamp.isoformat(),
        }


def encode_snapshot(snapshot: Snapshot) -> str:
    return dumps_canonical(snapshot.to_json())


def snapshot_from_json(doc: Mapping[str, Any]) -> Snapshot:
    try:
        return Snapshot.from_state(
            doc["object_kind"], doc["object_name"], doc["namespace"], doc["timestamp"], doc["state"]
        )
    except KeyError as exc:
        raise MalformedLine(f"snapshot missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, DecodeError):
            raise
        raise InvalidEvent(f"bad snapshot: {exc}") from None


def decode_record(line: str) -> CausalEvent | Snapshot:
    """Decode a log line that may carry either an event or a snapshot."""
    try:
        doc = json.loads(line)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedLine(f"unparseable JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MalformedLine("log line must be a JSON object")
    if "object_kind" in doc:
        return snapshot_from_json(doc)
    return event_from_json(doc)


def encode_record(record: CausalEvent | Snapshot) -> str:
    if isinstance(record, Snapshot):
        return encode_snapshot(record)
    return encode_event(record)


def write_log(records: Iterable[CausalEvent | Snapshot], fh) -> int:
    """Write records to a text stream as LF-terminated lines; returns line count."""
    n = 0
    for rec in records:
        fh.write(encode_record(rec))
        fh.write("\n")
        n += 1
    return n
