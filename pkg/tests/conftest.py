from __future__ import annotations

import io
from pathlib import Path

import pytest

from oma.events import encode_record
from oma.store import MemoryStore, ingest_log

FIXTURES = Path(__file__).parent / "fixtures"

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "passed": True, "ran": False})
    if report.when == "call":
        entry["ran"] = True
    if report.failed:
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["passed"] and entry["ran"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {entry['title']}")


@pytest.fixture
def store(tmp_path):
    with MemoryStore(tmp_path / "oma.db") as s:
        yield s


def ingest_records(store, records):
    return ingest_log(store, io.StringIO("".join(encode_record(r) + "\n" for r in records)))


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
