"""Operational memory store backed by a single SQLite file in WAL mode.

One writer at a time (guarded by an advisory lock on ``<db>.lock``), any
number of read-only handles. Event insertion, the edges derived from it and
any synthesized absence events commit in one transaction.
"""

from __future__ import annotations

import enum
import fcntl
import io
import logging
import os
import sqlite3
import threading
import time
import weakref
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterator, Optional, Sequence

from .events import (
    CausalEdge,
    CausalEvent,
    DecodeError,
    EdgeType,
    EventType,
    InvalidEvent,
    ObjectKind,
    Snapshot,
    Timestamp,
    decode_event,
    decode_record,
    encode_event,
    normalize_timestamp,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"


class StoreError(Exception):
    pass


class SchemaMismatch(StoreError):
    pass


class LockedByWriter(StoreError):
    pass


class IoFailure(StoreError):
    pass


class DanglingEndpoint(StoreError):
    pass


class ReadOnlyStore(StoreError):
    pass


class InsertResult(str, enum.Enum):
    INSERTED = "inserted"
    DUPLICATE = "duplicate"


_DDL = """
CREATE TABLE IF NOT EXISTS meta (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS event (
    event_id       TEXT PRIMARY KEY,
    ts_us          INTEGER NOT NULL,
    timestamp      TEXT NOT NULL,
    event_type     TEXT NOT NULL,
    pattern_id     TEXT,
    namespace      TEXT NOT NULL,
    pod_name       TEXT,
    container_name TEXT,
    node_name      TEXT,
    configmap_name TEXT,
    discriminator  INTEGER NOT NULL DEFAULT 0,
    synthesized    INTEGER NOT NULL DEFAULT 0,
    line           TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_event_ts ON event (ts_us);
CREATE INDEX IF NOT EXISTS idx_event_type_ts ON event (event_type, ts_us);
CREATE INDEX IF NOT EXISTS idx_event_pattern ON event (pattern_id);
CREATE INDEX IF NOT EXISTS idx_event_pod_ts ON event (namespace, pod_name, ts_us);
CREATE INDEX IF NOT EXISTS idx_event_namespace ON event (namespace);
CREATE INDEX IF NOT EXISTS idx_event_node_ts ON event (node_name, ts_us);
CREATE INDEX IF NOT EXISTS idx_event_cm_ts ON event (namespace, configmap_name, ts_us);
CREATE TABLE IF NOT EXISTS causal_edges (
    from_event_id        TEXT NOT NULL REFERENCES event (event_id),
    to_event_id          TEXT NOT NULL REFERENCES event (event_id),
    edge_type            TEXT NOT NULL,
    pattern_id           TEXT NOT NULL,
    confidence           REAL NOT NULL,
    event_time_delta_us  INTEGER NOT NULL,
    construction_wall_ms REAL NOT NULL DEFAULT 0,
    PRIMARY KEY (from_event_id, to_event_id, edge_type)
);
CREATE INDEX IF NOT EXISTS idx_edges_to ON causal_edges (to_event_id);
CREATE INDEX IF NOT EXISTS idx_edges_pattern ON causal_edges (pattern_id);
CREATE TABLE IF NOT EXISTS snapshot (
    object_kind TEXT NOT NULL,
    object_name TEXT NOT NULL,
    namespace   TEXT NOT NULL,
    ts_us       INTEGER NOT NULL,
    timestamp   TEXT NOT NULL,
    state_blob  TEXT NOT NULL,
    PRIMARY KEY (object_kind, object_name, namespace, ts_us)
);
CREATE INDEX IF NOT EXISTS idx_snapshot_kind_name_ts ON snapshot (object_kind, object_name, ts_us);
CREATE TABLE IF NOT EXISTS pattern (
    pattern_id TEXT PRIMARY KEY,
    definition TEXT NOT NULL
);
"""

_FILTER_COLUMNS = ("event_type", "pod_name", "node_name", "namespace", "configmap_name")


def _row_to_edge(row: sqlite3.Row) -> CausalEdge:
    return CausalEdge(
        from_event_id=row["from_event_id"],
        to_event_id=row["to_event_id"],
        pattern_id=row["pattern_id"],
        edge_type=EdgeType(row["edge_type"]),
        confidence=row["confidence"],
        event_time_delta_us=row["event_time_delta_us"],
        construction_wall_ms=row["construction_wall_ms"],
    )


def _row_to_snapshot(row: sqlite3.Row) -> Snapshot:
    return Snapshot(
        object_kind=ObjectKind(row["object_kind"]),
        object_name=row["object_name"],
        namespace=row["namespace"],
        timestamp=Timestamp(row["ts_us"]),
        state_blob=row["state_blob"],
    )


class MemoryStore:
    """Handle over one store file. Not thread-safe; open one handle per thread."""

    def __init__(self, path: str | os.PathLike, mode: str = "read_write") -> None:
        if mode not in ("read_write", "read_only"):
            raise ValueError(f"mode must be read_write or read_only, got {mode!r}")
        self.path = Path(path)
        self.mode = mode
        self._lock_fh: Optional[IO] = None
        self._in_tx = False
        try:
            if mode == "read_write":
                self._acquire_writer_lock()
                self.conn = sqlite3.connect(str(self.path), isolation_level=None, timeout=30.0)
            else:
                if not self.path.exists():
                    raise IoFailure(f"store {self.path} does not exist")
                uri = f"file:{self.path.resolve()}?mode=ro"
                self.conn = sqlite3.connect(uri, uri=True, isolation_level=None, timeout=30.0)
        except sqlite3.Error as exc:
            self._release_writer_lock()
            raise IoFailure(str(exc)) from exc
        self.conn.row_factory = sqlite3.Row
        self.conn.execute("PRAGMA foreign_keys = ON")
        try:
            if mode == "read_write":
                self._init_schema()
            else:
                self._check_schema()
        except sqlite3.DatabaseError as exc:
            self.close()
            raise SchemaMismatch(f"{self.path} is not an operational memory store: {exc}") from exc
        except BaseException:
            self.close()
            raise

    # ------------------------------------------------------------------ #
    # lifecycle
    # ------------------------------------------------------------------ #

    def _acquire_writer_lock(self) -> None:
        lock_path = Path(str(self.path) + ".lock")
        try:
            fh = open(lock_path, "a+")
        except OSError as exc:
            raise IoFailure(f"cannot open lock file {lock_path}: {exc}") from exc
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            fh.close()
            raise LockedByWriter(f"{self.path} is already open for writing") from None
        self._lock_fh = fh

    def _release_writer_lock(self) -> None:
        if self._lock_fh is not None:
            try:
                fcntl.flock(self._lock_fh, fcntl.LOCK_UN)
            finally:
                self._lock_fh.close()
                self._lock_fh = None

    def _init_schema(self) -> None:
        from .patterns import BUILTIN_PATTERNS

        self.conn.execute("PRAGMA journal_mode = WAL")
        self.conn.execute("PRAGMA synchronous = NORMAL")
        has_meta = self.conn.execute(
            "SELECT 1 FROM sqlite_master WHERE type = 'table' AND name = 'meta'"
        ).fetchone()
        if has_meta:
            self._check_schema()
        # executescript commits implicitly, so DDL runs before the transaction.
        self.conn.executescript(_DDL)
        with self.transaction():
            self.conn.execute(
                "INSERT OR IGNORE INTO meta (key, value) VALUES ('schema_version', ?)", (SCHEMA_VERSION,)
            )
            self.conn.execute("INSERT OR IGNORE INTO meta (key, value) VALUES ('watermark_us', '')")
            for pattern in BUILTIN_PATTERNS.values():
                self.conn.execute(
                    "INSERT OR IGNORE INTO pattern (pattern_id, definition) VALUES (?, ?)",
                    (pattern.pattern_id, pattern.to_document()),
                )

    def _check_schema(self) -> None:
        try:
            row = self.conn.execute("SELECT value FROM meta WHERE key = 'schema_version'").fetchone()
        except sqlite3.DatabaseError as exc:
            raise SchemaMismatch(f"{self.path} is not an operational memory store: {exc}") from exc
        if row is None or row["value"] != SCHEMA_VERSION:
            found = None if row is None else row["value"]
            raise SchemaMismatch(f"{self.path}: schema version {found!r}, expected {SCHEMA_VERSION!r}")

    def close(self) -> None:
        conn = getattr(self, "conn", None)
        if conn is not None:
            conn.close()
            self.conn = None
        self._release_writer_lock()

    def __enter__(self) -> "MemoryStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @property
    def writable(self) -> bool:
        return self.mode == "read_write"

    def _require_writer(self) -> None:
        if not self.writable:
            raise ReadOnlyStore(f"{self.path} opened read_only")

    @contextmanager
    def transaction(self) -> Iterator[sqlite3.Connection]:
        """Immediate write transaction; nests as a no-op inside an open one."""
        self._require_writer()
        if self._in_tx:
            yield self.conn
            return
        try:
            self.conn.execute("BEGIN IMMEDIATE")
        except sqlite3.Error as exc:
            raise IoFailure(str(exc)) from exc
        self._in_tx = True
        try:
            yield self.conn
        except BaseException:
            self._in_tx = False
            self.conn.execute("ROLLBACK")
            raise
        self._in_tx = False
        try:
            self.conn.execute("COMMIT")
        except sqlite3.Error as exc:
            self.conn.execute("ROLLBACK")
            raise IoFailure(str(exc)) from exc

    # ------------------------------------------------------------------ #
    # meta
    # ------------------------------------------------------------------ #

    def _get_meta(self, key: str) -> Optional[str]:
        row = self.conn.execute("SELECT value FROM meta WHERE key = ?", (key,)).fetchone()
        return None if row is None else row["value"]

    def _set_meta(self, key: str, value: str) -> None:
        self.conn.execute(
            "INSERT INTO meta (key, value) VALUES (?, ?) ON CONFLICT (key) DO UPDATE SET value = excluded.value",
            (key, value),
        )

    @property
    def watermark(self) -> Optional[Timestamp]:
        raw = self._get_meta("watermark_us")
        return Timestamp(int(raw)) if raw else None

    def _set_watermark(self, ts: Optional[Timestamp]) -> None:
        self._set_meta("watermark_us", "" if ts is None else str(ts.us))

    # ------------------------------------------------------------------ #
    # writes
    # ------------------------------------------------------------------ #

    def _insert_event_row(self, event: CausalEvent, synthesized: bool = False) -> bool:
        cur = self.conn.execute(
            """INSERT OR IGNORE INTO event (event_id, ts_us, timestamp, event_type, pattern_id, namespace,
                   pod_name, container_name, node_name, configmap_name, discriminator, synthesized, line)
               VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)""",
            (
                event.event_id,
                event.timestamp.us,
                event.timestamp.isoformat(),
                event.event_type.value,
                event.pattern_id,
                event.namespace,
                event.pod_name,
                event.container_name,
                event.node_name,
                event.configmap_name,
                event.discriminator,
                int(synthesized),
                encode_event(event),
            ),
        )
        return cur.rowcount == 1

    def insert_event(self, event: CausalEvent, *, edges_out: Optional[list] = None,
                     synthesized_out: Optional[list] = None) -> InsertResult:
        """Insert-if-absent keyed on ``event_id``.

        On insertion the pattern engine links the event and the watermark is
        advanced to its timestamp, all inside one transaction.
        """
        from . import patterns

        if event.event_type is EventType.PodNotRestarted:
            raise ValueError("PodNotRestarted is synthesized by the pattern engine, not ingested")
        with self.transaction():
            if not self._insert_event_row(event):
                return InsertResult.DUPLICATE
            edges = patterns.on_event_inserted(self, event)
            synthesized, absence_edges = patterns.advance_watermark(self, event.timestamp)
            if edges_out is not None:
                edges_out.extend(edges)
                edges_out.extend(absence_edges)
            if synthesized_out is not None:
                synthesized_out.extend(synthesized)
        return InsertResult.INSERTED

    def insert_edge(self, edge: CausalEdge) -> InsertResult:
        self._require_writer()
        with self.transaction():
            found = self.conn.execute(
                "SELECT COUNT(*) FROM event WHERE event_id IN (?, ?)",
                (edge.from_event_id, edge.to_event_id),
            ).fetchone()[0]
            if found != 2:
                raise DanglingEndpoint(f"edge {edge.from_event_id} -> {edge.to_event_id} references a missing event")
            cur = self.conn.execute(
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
        return InsertResult.INSERTED if cur.rowcount == 1 else InsertResult.DUPLICATE

    def insert_snapshot(self, snapshot: Snapshot) -> InsertResult:
        with self.transaction():
            cur = self.conn.execute(
                """INSERT OR IGNORE INTO snapshot (object_kind, object_name, namespace, ts_us, timestamp, state_blob)
                   VALUES (?, ?, ?, ?, ?, ?)""",
                (
                    snapshot.object_kind.value,
                    snapshot.object_name,
                    snapshot.namespace,
                    snapshot.timestamp.us,
                    snapshot.timestamp.isoformat(),
                    snapshot.state_blob,
                ),
            )
        return InsertResult.INSERTED if cur.rowcount == 1 else InsertResult.DUPLICATE

    # ------------------------------------------------------------------ #
    # reads
    # ------------------------------------------------------------------ #

    def get_event(self, event_id: str) -> Optional[CausalEvent]:
        row = self.conn.execute("SELECT line FROM event WHERE event_id = ?", (event_id,)).fetchone()
        return None if row is None else decode_event(row["line"], verify_id=False)

    def is_synthesized(self, event_id: str) -> bool:
        row = self.conn.execute("SELECT synthesized FROM event WHERE event_id = ?", (event_id,)).fetchone()
        return bool(row and row["synthesized"])

    def events_in_window(
        self,
        filter: Optional[dict] = None,
        window: Optional[tuple] = None,
        *,
        event_types: Sequence[EventType | str] = (),
    ) -> list[CausalEvent]:
        """Events matching ``filter`` with timestamp in the inclusive ``window``.

        Ordered by (timestamp, event_id). ``event_types`` widens the
        ``event_type`` filter to a set.
        """
        where: list[str] = []
        args: list = []
        for key, value in (filter or {}).items():
            if key not in _FILTER_COLUMNS:
                raise ValueError(f"unsupported filter key {key!r}")
            if value is None:
                continue
            where.append(f"{key} = ?")
            args.append(value.value if isinstance(value, EventType) else value)
        if event_types:
            where.append(f"event_type IN ({', '.join('?' * len(event_types))})")
            args.extend(str(t) for t in event_types)
        if window is not None:
            lo, hi = (normalize_timestamp(w) if w is not None else None for w in window)
            if lo is not None and hi is not None and lo > hi:
                raise ValueError("window lower bound exceeds upper bound")
            if lo is not None:
                where.append("ts_us >= ?")
                args.append(lo.us)
            if hi is not None:
                where.append("ts_us <= ?")
                args.append(hi.us)
        sql = "SELECT line FROM event"
        if where:
            sql += " WHERE " + " AND ".join(where)
        sql += " ORDER BY ts_us, event_id"
        return [decode_event(row["line"], verify_id=False) for row in self.conn.execute(sql, args)]

    def latest_per_pod(self, namespace: str, at, event_types: Sequence[EventType | str]) -> list[CausalEvent]:
        """Per pod, the latest event of ``event_types`` at or before ``at`` that carries ConfigMap refs."""
        types = [str(t) for t in event_types]
        sql = f"""
            SELECT line FROM (
                SELECT line, ROW_NUMBER() OVER (
                    PARTITION BY pod_name ORDER BY ts_us DESC, event_id DESC) AS rn
                FROM event
                WHERE namespace = ? AND pod_name IS NOT NULL AND pod_name != '' AND ts_us <= ?
                  AND event_type IN ({', '.join('?' * len(types))})
                  AND json_extract(line, '$.payload.configmap_refs') IS NOT NULL
            ) WHERE rn = 1
        """
        rows = self.conn.execute(sql, [namespace, normalize_timestamp(at).us, *types])
        return [decode_event(row["line"], verify_id=False) for row in rows]

    def iter_events(self) -> Iterator[CausalEvent]:
        for row in self.conn.execute("SELECT line FROM event ORDER BY ts_us, event_id"):
            yield decode_event(row["line"], verify_id=False)

    def edges_into(self, event_id: str) -> list[CausalEdge]:
        rows = self.conn.execute(
            "SELECT * FROM causal_edges WHERE to_event_id = ? ORDER BY from_event_id, edge_type", (event_id,)
        )
        return [_row_to_edge(r) for r in rows]

    def edges_from(self, event_id: str) -> list[CausalEdge]:
        rows = self.conn.execute(
            "SELECT * FROM causal_edges WHERE from_event_id = ? ORDER BY to_event_id, edge_type", (event_id,)
        )
        return [_row_to_edge(r) for r in rows]

    def all_edges(self) -> list[CausalEdge]:
        rows = self.conn.execute("SELECT * FROM causal_edges ORDER BY from_event_id, to_event_id, edge_type")
        return [_row_to_edge(r) for r in rows]

    def all_snapshots(self) -> list[Snapshot]:
        rows = self.conn.execute("SELECT * FROM snapshot ORDER BY object_kind, object_name, namespace, ts_us")
        return [_row_to_snapshot(r) for r in rows]

    def snapshots(self, object_kind: Optional[str] = None) -> list[Snapshot]:
        if object_kind is None:
            return self.all_snapshots()
        rows = self.conn.execute(
            "SELECT * FROM snapshot WHERE object_kind = ? ORDER BY object_name, namespace, ts_us",
            (ObjectKind(object_kind).value,),
        )
        return [_row_to_snapshot(r) for r in rows]

    def latest_snapshot(self, object_kind: str, object_name: str, namespace: str, at: Timestamp) -> Optional[Snapshot]:
        row = self.conn.execute(
            """SELECT * FROM snapshot
               WHERE object_kind = ? AND object_name = ? AND namespace = ? AND ts_us <= ?
               ORDER BY ts_us DESC LIMIT 1""",
            (ObjectKind(object_kind).value, object_name, namespace, at.us),
        ).fetchone()
        return None if row is None else _row_to_snapshot(row)

    def pattern_ids(self) -> list[str]:
        return [r["pattern_id"] for r in self.conn.execute("SELECT pattern_id FROM pattern ORDER BY pattern_id")]

    def get_pattern(self, pattern_id: str):
        from .patterns import PatternDefinition

        row = self.conn.execute("SELECT definition FROM pattern WHERE pattern_id = ?", (pattern_id,)).fetchone()
        return None if row is None else PatternDefinition.from_document(row["definition"])

    def row_sets(self) -> dict[str, frozenset]:
        """Order-free content of the three data tables, for equality checks.

        Wall-clock construction time is excluded since it differs per run.
        """
        events = frozenset(
            tuple(r) for r in self.conn.execute("SELECT event_id, line, synthesized FROM event")
        )
        edges = frozenset(
            tuple(r)
            for r in self.conn.execute(
                "SELECT from_event_id, to_event_id, edge_type, pattern_id, confidence, event_time_delta_us "
                "FROM causal_edges"
            )
        )
        snaps = frozenset(
            tuple(r)
            for r in self.conn.execute("SELECT object_kind, object_name, namespace, ts_us, state_blob FROM snapshot")
        )
        return {"events": events, "edges": edges, "snapshots": snaps}

    def stats(self) -> dict:
        return store_stats(self)

    # ------------------------------------------------------------------ #
    # ingest
    # ------------------------------------------------------------------ #

    def ingest_log(self, source, follow: bool = False, **kwargs) -> "IngestReport":
        return ingest_log(self, source, follow=follow, **kwargs)


def open_store(path: str | os.PathLike, mode: str = "read_write") -> MemoryStore:
    return MemoryStore(path, mode)


def store_stats(store: MemoryStore) -> dict:
    from .patterns import classify_edge

    events = {t.value: 0 for t in EventType}
    for row in store.conn.execute("SELECT event_type, COUNT(*) AS n FROM event GROUP BY event_type"):
        events[row["event_type"]] = row["n"]
    by_pattern: dict[str, int] = {}
    by_type = {t.value: 0 for t in EdgeType}
    by_class = {"intra_cycle": 0, "cross_cycle": 0}
    total = 0
    for edge in store.all_edges():
        total += 1
        by_pattern[edge.pattern_id] = by_pattern.get(edge.pattern_id, 0) + 1
        by_type[edge.edge_type.value] += 1
        if edge.edge_type is EdgeType.evidence:
            by_class[classify_edge(edge)] += 1
    snapshots = store.conn.execute("SELECT COUNT(*) FROM snapshot").fetchone()[0]
    patterns = store.conn.execute("SELECT COUNT(*) FROM pattern").fetchone()[0]
    return {
        "edges": {
            "by_class": by_class,
            "by_pattern": dict(sorted(by_pattern.items())),
            "by_type": by_type,
            "total": total,
        },
        "events": events,
        "events_total": sum(events.values()),
        "patterns": patterns,
        "snapshots": snapshots,
    }


# --------------------------------------------------------------------------- #
# Streaming ingest
# --------------------------------------------------------------------------- #


@dataclass
class IngestReport:
    lines_read: int = 0
    events_inserted: int = 0
    events_duplicate: int = 0
    events_quarantined: int = 0
    snapshots_inserted: int = 0
    snapshots_duplicate: int = 0
    edges_constructed: int = 0
    absence_events_synthesized: int = 0
    id_mismatches: int = 0
    peak_live_event_objects: int = 0
    construction_wall_ms: list[float] = field(default_factory=list)

    def check(self) -> None:
        """The line accounting identity; snapshot lines are counted separately."""
        accounted = (
            self.events_inserted + self.events_duplicate + self.events_quarantined
            + self.snapshots_inserted + self.snapshots_duplicate
        )
        assert self.lines_read == accounted, (self.lines_read, accounted)

    def to_json(self) -> dict:
        return {
            "absence_events_synthesized": self.absence_events_synthesized,
            "edges_constructed": self.edges_constructed,
            "events_duplicate": self.events_duplicate,
            "events_inserted": self.events_inserted,
            "events_quarantined": self.events_quarantined,
            "id_mismatches": self.id_mismatches,
            "lines_read": self.lines_read,
            "peak_live_event_objects": self.peak_live_event_objects,
            "snapshots_duplicate": self.snapshots_duplicate,
            "snapshots_inserted": self.snapshots_inserted,
        }


class LiveCounter:
    """Counts decoded records that are still referenced somewhere."""

    def __init__(self) -> None:
        self.live = 0
        self.peak = 0
        self._lock = threading.Lock()

    def track(self, obj) -> None:
        with self._lock:
            self.live += 1
            self.peak = max(self.peak, self.live)
        weakref.finalize(obj, self._release)

    def _release(self) -> None:
        with self._lock:
            self.live -= 1


def _iter_lines(fh: IO[str], follow: bool, stop: Optional[threading.Event], poll_interval: float) -> Iterator[str]:
    pending = ""
    while True:
        chunk = fh.readline()
        if chunk:
            pending += chunk
            if pending.endswith("\n"):
                yield pending
                pending = ""
            continue
        if not follow or (stop is not None and stop.is_set()):
            if pending:
                yield pending
            return
        time.sleep(poll_interval)


def ingest_log(
    store: MemoryStore,
    source,
    follow: bool = False,
    *,
    stop: Optional[threading.Event] = None,
    poll_interval: float = 0.1,
    quarantine_path: Optional[str | os.PathLike] = None,
    counter: Optional[LiveCounter] = None,
) -> IngestReport:
    """Stream a log into the store one line at a time.

    ``source`` is a path or an open text stream. Undecodable lines go to
    ``<source>.quarantine`` (or ``quarantine_path``). With ``follow`` the call
    tails the source until ``stop`` is set.
    """
    store._require_writer()
    report = IngestReport()
    counter = counter or LiveCounter()
    own_fh = None
    if isinstance(source, (str, os.PathLike)):
        source_path = Path(source)
        try:
            own_fh = open(source_path, "r", encoding="utf-8", newline="\n")
        except OSError as exc:
            raise IoFailure(f"cannot read {source_path}: {exc}") from exc
        fh: IO[str] = own_fh
        if quarantine_path is None:
            quarantine_path = Path(str(source_path) + ".quarantine")
    else:
        fh = source if not isinstance(source, (bytes, bytearray)) else io.StringIO(source.decode("utf-8"))
    quarantine_fh = None
    try:
        for lineno, raw in enumerate(_iter_lines(fh, follow, stop, poll_interval), start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            report.lines_read += 1
            try:
                record = decode_record(line)
                if isinstance(record, CausalEvent) and record.event_type is EventType.PodNotRestarted:
                    raise InvalidEvent("PodNotRestarted is synthesized by the pattern engine, not ingested")
            except DecodeError as exc:
                report.events_quarantined += 1
                log.warning("quarantined line %d: %s", lineno, exc)
                if quarantine_path is not None:
                    if quarantine_fh is None:
                        quarantine_fh = open(quarantine_path, "a", encoding="utf-8")
                    quarantine_fh.write(f"{lineno}\t{type(exc).__name__}\t{line}\n")
                continue
            counter.track(record)
            if isinstance(record, Snapshot):
                if store.insert_snapshot(record) is InsertResult.INSERTED:
                    report.snapshots_inserted += 1
                else:
                    report.snapshots_duplicate += 1
                del record
                continue
            if record.id_mismatch:
                report.id_mismatches += 1
                log.warning("line %d: event_id %s does not match recomputed id", lineno, record.event_id)
            edges: list[CausalEdge] = []
            synthesized: list[CausalEvent] = []
            try:
                result = store.insert_event(record, edges_out=edges, synthesized_out=synthesized)
            except sqlite3.Error as exc:
                raise IoFailure(f"line {lineno}: {exc}") from exc
            if result is InsertResult.INSERTED:
                report.events_inserted += 1
                report.edges_constructed += len(edges)
                report.absence_events_synthesized += len(synthesized)
                report.construction_wall_ms.extend(e.construction_wall_ms for e in edges)
            else:
                report.events_duplicate += 1
            del record, edges, synthesized
    finally:
        if own_fh is not None:
            own_fh.close()
        if quarantine_fh is not None:
            quarantine_fh.close()
    report.peak_live_event_objects = counter.peak
    report.check()
    return report
