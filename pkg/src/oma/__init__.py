"""Operational memory for Kubernetes failure forensics.

Events from a cluster watcher (or the bundled simulator) stream into a
single-file store. A pattern engine links them into causal edges as they
arrive, and three queries read the result back: causal chain, pattern
history and frozen state at a past instant.
"""

from .events import (
    CausalEdge,
    CausalEvent,
    ConfigMapRef,
    DecodeError,
    EdgeType,
    EventPayload,
    EventType,
    NodeSnapshot,
    ObjectKind,
    QoSClass,
    Snapshot,
    Timestamp,
    compute_event_id,
    decode_event,
    decode_record,
    encode_event,
    encode_record,
    normalize_timestamp,
)
from .patterns import BUILTIN_PATTERNS, PatternDefinition, PatternStep, classify_edge, rebuild_edges
from .queries import (
    CausalChain,
    FrozenState,
    PatternInstanceSet,
    UnknownEvent,
    UnknownPattern,
    q1_causal_chain,
    q2_pattern_history,
    q3_state_at,
)
from .simulator import NOT_FOUND, NotFound, SimScenario, describe_oracle, load_scenario, run_scenario
from .store import IngestReport, LockedByWriter, MemoryStore, SchemaMismatch, ingest_log, open_store

__version__ = "0.1.0"
