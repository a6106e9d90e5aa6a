import json

import pytest

from oma.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def loaded(tmp_path, capsys):
    log, db = tmp_path / "e.jsonl", tmp_path / "oma.db"
    assert run(capsys, "simulate", "--scenario", "p001_aks", "--seed", 7, "--out", log)[0] == 0
    assert run(capsys, "ingest", "--db", db, "--input", log)[0] == 0
    return db


def test_simulate_ingest_pattern(loaded, capsys):
    code, out, _ = run(capsys, "query", "pattern", "--db", loaded, "--pattern-id", "P001", "--format", "json",
                       "--since", "2026-01-15T00:00:00Z", "--until", "2026-01-16T00:00:00Z")
    assert code == 0 and len(json.loads(out)["instances"]) == 4


def test_state_at_deleted_pod(loaded, capsys):
    code, out, _ = run(capsys, "query", "state-at", "--db", loaded, "--kind", "Pod", "--name", "oom-app",
                       "--namespace", "oma-poc", "--at", "2026-01-16T00:00:00Z", "--format", "json")
    assert code == 0 and json.loads(out)["snapshot"]["object_name"] == "oom-app"


def test_state_at_missing_is_data_error(loaded, capsys):
    code, out, _ = run(capsys, "query", "state-at", "--db", loaded, "--name", "ghost", "--namespace", "oma-poc",
                       "--at", "2026-01-16T00:00:00Z")
    assert code == 2 and out == "not found\n"


def test_unknown_event(loaded, capsys):
    code, _, err = run(capsys, "query", "causal", "--db", loaded, "--event-id", "nonexistent")
    assert code == 2 and "UnknownEvent" in err


def test_usage_errors(capsys):
    assert run(capsys, "bogus")[0] == 1
    assert run(capsys, "query", "causal")[0] == 1
    code, _, err = run(capsys, "bench", "latency", "--runs", 0)
    assert code == 1 and "usage" in err


def test_missing_db(capsys, monkeypatch):
    monkeypatch.delenv("OMA_DB", raising=False)
    code, _, err = run(capsys, "stats")
    assert code == 1 and "OMA_DB" in err


def test_db_from_env(loaded, capsys, monkeypatch):
    import oma.cli

    monkeypatch.setenv("OMA_DB", str(loaded))
    code, out, _ = run(capsys, "stats", "--format", "json")
    assert code == 0 and json.loads(out)["events_total"] == 20


def test_quarantine_exit_code(tmp_path, capsys):
    log = tmp_path / "bad.jsonl"
    log.write_text("garbage\n")
    code, out, _ = run(capsys, "ingest", "--db", tmp_path / "x.db", "--input", log, "--format", "json")
    assert code == 2 and json.loads(out)["events_quarantined"] == 1


def test_rebuild_edges(loaded, capsys):
    code, out, _ = run(capsys, "rebuild-edges", "--db", loaded, "--format", "json")
    assert code == 0 and json.loads(out) == {"edges": 8, "events_total": 20}


def test_foreign_store_is_data_error(tmp_path, capsys):
    junk = tmp_path / "junk.db"
    junk.write_bytes(b"x" * 4096)
    code, _, err = run(capsys, "stats", "--db", junk)
    assert code == 2 and "SchemaMismatch" in err


def test_bench_json_deterministic(capsys):
    a = run(capsys, "bench", "stress", "--pods", "1,2", "--duration", 30, "--format", "json")
    b = run(capsys, "bench", "stress", "--pods", "1,2", "--duration", 30, "--format", "json")
    assert a == b and a[0] == 0


def test_bench_bad_pods(capsys):
    assert run(capsys, "bench", "stress", "--pods", "a,b")[0] == 1


def test_patterns_export(capsys):
    code, out, _ = run(capsys, "patterns")
    assert code == 0 and [p["pattern_id"] for p in json.loads(out)["patterns"]] == ["P001", "P002", "P003"]


def test_simulate_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        run(capsys, "simulate", "--scenario", "p001_horizon", "--seed", 3, "--out", tmp_path / f"{name}.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
