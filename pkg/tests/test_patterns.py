import random

import pytest

from oma.events import (
    CausalEdge,
    CausalEvent,
    ConfigMapRef,
    EdgeType,
    EventPayload,
    EventType,
    NodeSnapshot,
    QoSClass,
    Timestamp,
    normalize_timestamp,
)
from oma.oracle import brute_force_edges, edge_keys, random_stream
from oma.patterns import (
    BUILTIN_PATTERNS,
    PatternDefinition,
    PatternStep,
    classify_edge,
    export_patterns,
    import_patterns,
    rebuild_edges,
)

from conftest import ingest_records

T0 = normalize_timestamp("2026-01-15T10:00:00Z")


def at(seconds: float) -> Timestamp:
    return T0.plus_us(round(seconds * 1_000_000))


def kill(s, pod="a", node="n1"):
    return CausalEvent.create(EventType.OOMKill, at(s), "ns", pod_name=pod, container_name="app", node_name=node,
                              pattern_id="P001", payload=EventPayload(exit_code=137, reason="OOMKilled"))


def evidence(s, pod="a", refs=()):
    return CausalEvent.create(
        EventType.OOMKillEvidence, at(s), "ns", pod_name=pod, container_name="app", node_name="n1",
        pattern_id="P001",
        payload=EventPayload(exit_code=137, reason="OOMKilled", memory_limit_bytes=64 << 20,
                             qos_class=QoSClass.Guaranteed, restart_count=0, configmap_refs=tuple(refs),
                             node_snapshot=NodeSnapshot(4 << 30, False, "n1")),
    )


def terminated(s, pod="a"):
    return CausalEvent.create(EventType.ContainerTerminated, at(s), "ns", pod_name=pod, container_name="app",
                              node_name="n1", payload=EventPayload(exit_code=137))


def pressure(s, node="n1"):
    return CausalEvent.create(EventType.NodeMemoryPressure, at(s), "ns", node_name=node, pattern_id="P001")


def started(s, pod="a", refs=()):
    return CausalEvent.create(EventType.ContainerStarted, at(s), "ns", pod_name=pod, container_name="app",
                              node_name="n1", payload=EventPayload(configmap_refs=tuple(refs)))


def cm_changed(s, cm="app-config"):
    return CausalEvent.create(
        EventType.ConfigMapChanged, at(s), "ns", configmap_name=cm,
        payload=EventPayload(content_hash_before="a" * 64, content_hash_after="b" * 64,
                             changed_keys=("FEATURE_FLAG",)),
    )


def sync(s, cm="app-config", pod="a"):
    return CausalEvent.create(EventType.KubeletSync, at(s), "ns", pod_name=pod, node_name="n1", configmap_name=cm,
                              pattern_id="P003", payload=EventPayload(propagation_latency_ms=0))


def edges_of(store):
    return store.all_edges()


class TestP001:
    def test_intra_cycle_evidence(self, store):
        ingest_records(store, [kill(10.0), evidence(10.001)])
        (edge,) = edges_of(store)
        assert edge.edge_type is EdgeType.evidence and edge.confidence == 1.0
        assert edge.event_time_delta_ms == 1.0

    @pytest.mark.parametrize("delta, linked", [(90.0, True), (90.000001, False), (91.0, False)])
    def test_evidence_window_boundary(self, store, delta, linked):
        ingest_records(store, [kill(0), evidence(delta)])
        assert len(edges_of(store)) == int(linked)

    def test_scope_mismatch(self, store):
        ingest_records(store, [kill(0, pod="a"), evidence(0.001, pod="b")])
        assert edges_of(store) == []

    def test_precursor(self, store):
        ingest_records(store, [pressure(0), kill(200)])
        (edge,) = edges_of(store)
        assert edge.edge_type is EdgeType.precursor and edge.confidence == 0.9

    def test_precursor_other_node(self, store):
        ingest_records(store, [pressure(0, node="n2"), kill(200)])
        assert edges_of(store) == []

    def test_evidence_links_every_kill_in_window(self, store):
        ingest_records(store, [kill(0), kill(40), evidence(40.001)])
        deltas = sorted(e.event_time_delta_ms for e in edges_of(store))
        assert deltas == [1.0, 40001.0]
        assert sorted(classify_edge(e) for e in edges_of(store)) == ["cross_cycle", "intra_cycle"]

    @pytest.mark.parametrize("delta, linked", [(10.0, True), (10.000001, False)])
    def test_effect_window(self, store, delta, linked):
        ingest_records(store, [kill(0), terminated(delta)])
        assert [e.edge_type for e in edges_of(store)] == [EdgeType.effect] * int(linked)

    def test_arrival_order_does_not_matter(self, tmp_path):
        from oma.store import MemoryStore

        events = [pressure(0), kill(100), evidence(100.002), terminated(100.2), kill(150), evidence(170)]
        with MemoryStore(tmp_path / "f.db") as fwd, MemoryStore(tmp_path / "r.db") as rev:
            ingest_records(fwd, events)
            ingest_records(rev, list(reversed(events)))
            assert fwd.row_sets()["edges"] == rev.row_sets()["edges"]
            assert len(fwd.all_edges()) == 6


class TestP002:
    env = [ConfigMapRef("app-config", "env")]

    def test_absence_synthesized_after_window(self, store):
        report = ingest_records(store, [started(0, refs=self.env), cm_changed(10), started(131, pod="other")])
        assert report.absence_events_synthesized == 1
        (edge,) = [e for e in edges_of(store) if e.edge_type is EdgeType.absence]
        signal = store.get_event(edge.to_event_id)
        assert signal.event_type is EventType.PodNotRestarted and signal.pod_name == "a"
        assert signal.timestamp == at(130)
        assert signal.payload.changed_keys == ("FEATURE_FLAG",)
        assert signal.payload.content_hash_before == "a" * 64
        assert store.is_synthesized(signal.event_id)

    def test_not_resolved_at_exact_deadline(self, store):
        report = ingest_records(store, [started(0, refs=self.env), cm_changed(10), started(130, pod="other")])
        assert report.absence_events_synthesized == 0

    def test_restart_cancels(self, store):
        report = ingest_records(store, [started(0, refs=self.env), cm_changed(10), started(60, refs=self.env),
                                        started(200, pod="other")])
        assert report.absence_events_synthesized == 0

    def test_volume_consumer_ignored(self, store):
        refs = [ConfigMapRef("app-config", "volume")]
        report = ingest_records(store, [started(0, refs=refs), cm_changed(10), started(200, pod="other")])
        assert report.absence_events_synthesized == 0

    def test_deleted_pod_not_a_consumer(self, store):
        deleted = CausalEvent.create(EventType.PodDeleted, at(5), "ns", pod_name="a", container_name="app",
                                     node_name="n1")
        report = ingest_records(store, [started(0, refs=self.env), deleted, cm_changed(10),
                                        started(200, pod="other")])
        assert report.absence_events_synthesized == 0

    def test_single_shot(self, store):
        ingest_records(store, [started(0, refs=self.env), cm_changed(10), started(200, pod="other")])
        report = ingest_records(store, [started(400, pod="x"), started(900, pod="y")])
        assert report.absence_events_synthesized == 0
        assert store.stats()["events"]["PodNotRestarted"] == 1


class TestP003:
    @pytest.mark.parametrize("delay, linked", [(10, True), (30, True), (90, True), (91, False)])
    def test_propagation_window(self, store, delay, linked):
        ingest_records(store, [cm_changed(0), sync(delay)])
        edges = edges_of(store)
        assert len(edges) == int(linked)
        if linked:
            assert edges[0].edge_type is EdgeType.propagation and edges[0].event_time_delta_ms == delay * 1000


@pytest.mark.parametrize("ms, cls", [(0.702, "intra_cycle"), (99.999, "intra_cycle"), (100, "cross_cycle"),
                                     (903, "cross_cycle")])
def test_classify(ms, cls):
    assert classify_edge(CausalEdge("a", "b", "P001", "evidence", 1.0, round(ms * 1000))) == cls


def test_pattern_document_roundtrip():
    assert import_patterns(export_patterns()) == BUILTIN_PATTERNS
    p = BUILTIN_PATTERNS["P001"]
    assert PatternDefinition.from_document(p.to_document()) == p


def test_pattern_validation():
    with pytest.raises(ValueError):
        PatternStep(EventType.OOMKillEvidence, "evidence", 0)
    with pytest.raises(ValueError):
        PatternStep(EventType.OOMKillEvidence, "sideways", 10)


def test_stored_definitions_drive_windows(store):
    # a widened evidence window in the store changes linking without code changes
    wide = PatternDefinition("P001", tuple(
        PatternStep(s.event_type, s.role, 200 if s.role == "evidence" else s.window_seconds, s.confidence,
                    s.same_scope, s.consumer_mode)
        for s in BUILTIN_PATTERNS["P001"].steps
    ))
    store.conn.execute("UPDATE pattern SET definition = ? WHERE pattern_id = 'P001'", (wide.to_document(),))
    store._pattern_cache = None
    ingest_records(store, [kill(0), evidence(150)])
    assert len(edges_of(store)) == 1


def test_rebuild_restores_deleted_edge(store):
    ingest_records(store, [kill(0), evidence(0.001), terminated(0.2)])
    before = store.row_sets()
    store.conn.execute("DELETE FROM causal_edges WHERE edge_type = 'effect'")
    assert rebuild_edges(store) == 2
    assert store.row_sets() == before


def test_temporal_soundness_and_confidence_partition(store):
    rng = random.Random(5)
    ingest_records(store, random_stream(rng, 400))
    windows = {"precursor": 300, "evidence": 90, "effect": 10, "absence": 120, "propagation": 90}
    for e in store.all_edges():
        assert 0 <= e.event_time_delta_us <= windows[e.edge_type.value] * 1_000_000
        assert e.confidence == (0.9 if e.edge_type is EdgeType.precursor else 1.0)
        a, b = store.get_event(e.from_event_id), store.get_event(e.to_event_id)
        assert (a.timestamp, a.event_id) < (b.timestamp, b.event_id) or a.timestamp < b.timestamp


@pytest.mark.parametrize("seed", range(5))
def test_engine_matches_oracle(store, seed):
    rng = random.Random(seed)
    events = random_stream(rng, rng.randint(50, 300))
    ingest_records(store, events)
    assert edge_keys(store.all_edges()) == brute_force_edges(events)
