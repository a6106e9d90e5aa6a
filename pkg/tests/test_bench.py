import json

import pytest

from oma.bench import CLASSES, bench_latency, bench_stress
from oma.simulator import CollectorSpec, PodSpec, SimScenario


def test_latency_report_shape():
    report = bench_latency(runs=3)
    doc = report.to_json()
    assert set(doc["classes"]) == set(CLASSES)
    assert doc["total_edges"] == sum(c["count"] for c in doc["classes"].values())
    for c in report.classes.values():
        assert c.min_ms <= c.mean_ms <= c.max_ms
    assert "informational" not in doc and "informational" in report.to_json(timing=True)


def test_latency_deterministic():
    assert json.dumps(bench_latency(2).to_json()) == json.dumps(bench_latency(2).to_json())


def test_single_kill_has_no_cross_cycle():
    sc = SimScenario("one", pods=[PodSpec("oom-app", first_crash_at_s=15)], duration_s=20,
                     collector=CollectorSpec(status_update_delays_ms=[]))
    report = bench_latency(1, sc)
    assert report.classes["cross_cycle"].count == 0
    assert report.classes["intra_cycle"].count == 1


def test_runs_must_be_positive():
    with pytest.raises(ValueError):
        bench_latency(0)


def test_stress_rows():
    report = bench_stress([2, 4], duration_s=60)
    rows = report.rows
    assert [r.pods for r in rows] == [2, 4]
    for r in rows:
        assert r.edges == r.expected_edges
        assert r.events_per_sec == r.events / 60
    assert "peak_live" in report.render_text()
