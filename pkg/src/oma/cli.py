"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data error (unknown ids, quarantined
lines, unreadable or foreign store files).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import threading
from typing import Optional, Sequence

from .bench import bench_latency, bench_stress
from .events import DecodeError
from .patterns import export_patterns, rebuild_edges
from .queries import QueryError, q1_causal_chain, q2_pattern_history, q3_state_at, render, render_json
from .service import serve_http
from .simulator import InvalidScenario, NotFound, load_scenario, run_scenario
from .store import MemoryStore, StoreError, ingest_log

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

EARLIEST = "1970-01-01T00:00:00Z"
LATEST = "9999-12-31T23:59:59Z"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.flush()


def _db(args) -> str:
    if not args.db:
        raise UsageError("no store given: pass --db or set OMA_DB")
    return args.db


def _pod_counts(raw: str) -> list[int]:
    try:
        counts = [int(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}") from None
    if not counts or any(c < 1 for c in counts):
        raise argparse.ArgumentTypeError("pod counts must be positive")
    return counts


# --------------------------------------------------------------------------- #
# subcommands
# --------------------------------------------------------------------------- #


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = dataclasses.replace(scenario, seed=args.seed)
    result = run_scenario(scenario)
    result.write(args.out)
    counts: dict[str, int] = {}
    for ev in result.events:
        counts[ev.event_type.value] = counts.get(ev.event_type.value, 0) + 1
    summary = {
        "events": len(result.events),
        "events_by_type": dict(sorted(counts.items())),
        "out": str(args.out),
        "scenario": scenario.name,
        "seed": scenario.seed,
        "snapshots": len(result.snapshots),
    }
    _emit(render(summary, args.format))
    return EXIT_OK


def cmd_ingest(args) -> int:
    stop = threading.Event()
    with MemoryStore(_db(args)) as store:
        try:
            report = ingest_log(store, args.input, follow=args.follow, stop=stop)
        except KeyboardInterrupt:
            stop.set()
            return EXIT_OK
    _emit(render(report.to_json(), args.format))
    return EXIT_DATA if report.events_quarantined else EXIT_OK


def cmd_query(args) -> int:
    with MemoryStore(_db(args), mode="read_only") as store:
        if args.query == "causal":
            result = q1_causal_chain(store, args.event_id, args.depth)
        elif args.query == "pattern":
            result = q2_pattern_history(store, args.pattern_id, args.since, args.until)
        else:
            result = q3_state_at(store, args.kind, args.name, args.namespace, args.at)
    _emit(render(result, args.format))
    return EXIT_DATA if isinstance(result, NotFound) else EXIT_OK


def cmd_rebuild(args) -> int:
    with MemoryStore(_db(args)) as store:
        edges = rebuild_edges(store)
        stats = store.stats()
    _emit(render({"edges": edges, "events_total": stats["events_total"]}, args.format))
    return EXIT_OK


def cmd_stats(args) -> int:
    with MemoryStore(_db(args), mode="read_only") as store:
        _emit(render(store.stats(), args.format))
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.bench == "latency":
        if args.runs < 1:
            raise UsageError("--runs must be at least 1")
        report = bench_latency(args.runs, args.scenario)
    else:
        report = bench_stress(args.pods, args.duration)
    if args.format == "json":
        _emit(render_json(report.to_json(timing=args.timing)))
    else:
        _emit(report.render_text())
    return EXIT_OK


def cmd_patterns(args) -> int:
    _emit(export_patterns() + "\n")
    return EXIT_OK


def cmd_serve(args) -> int:
    serve_http(_db(args), args.listen)
    return EXIT_OK


# --------------------------------------------------------------------------- #
# parser
# --------------------------------------------------------------------------- #


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "json"), default="text", help="output format")
    with_db = argparse.ArgumentParser(add_help=False, parents=[common])
    with_db.add_argument("--db", default=os.environ.get("OMA_DB"), help="store path (default: $OMA_DB)")

    parser = _Parser(prog="oma", description="Operational memory for Kubernetes failure forensics.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="run a scenario and write its event log")
    p.add_argument("--scenario", required=True, help="builtin scenario name or JSON file")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", parents=[with_db], help="stream a JSONL log into the store")
    p.add_argument("--input", required=True, help="JSONL log path")
    p.add_argument("--follow", action="store_true", help="keep tailing the log until interrupted")
    p.set_defaults(func=cmd_ingest)

    q = sub.add_parser("query", help="run one of the three canonical queries")
    qs = q.add_subparsers(dest="query", required=True, parser_class=_Parser)
    p = qs.add_parser("causal", parents=[with_db], help="causal predecessors of an event")
    p.add_argument("--event-id", required=True)
    p.add_argument("--depth", type=int, default=10)
    p.set_defaults(func=cmd_query)
    p = qs.add_parser("pattern", parents=[with_db], help="pattern instances in a time window")
    p.add_argument("--pattern-id", required=True)
    p.add_argument("--since", default=EARLIEST)
    p.add_argument("--until", default=LATEST)
    p.set_defaults(func=cmd_query)
    p = qs.add_parser("state-at", parents=[with_db], help="frozen object state at a timestamp")
    p.add_argument("--kind", default="Pod", choices=("Pod", "ConfigMap", "Node"))
    p.add_argument("--name", required=True)
    p.add_argument("--namespace", required=True)
    p.add_argument("--at", required=True)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("rebuild-edges", parents=[with_db], help="recompute all edges from stored events")
    p.set_defaults(func=cmd_rebuild)

    p = sub.add_parser("stats", parents=[with_db], help="store counters")
    p.set_defaults(func=cmd_stats)

    b = sub.add_parser("bench", help="latency and stress benchmarks")
    bs = b.add_subparsers(dest="bench", required=True, parser_class=_Parser)
    p = bs.add_parser("latency", parents=[common], help="edge latency classes over seeded runs")
    p.add_argument("--runs", type=int, default=30)
    p.add_argument("--scenario", default="p001_latency")
    p.add_argument("--timing", action="store_true", help="include wall-clock figures (not deterministic)")
    p.set_defaults(func=cmd_bench)
    p = bs.add_parser("stress", parents=[common], help="event and edge scaling with pod count")
    p.add_argument("--pods", type=_pod_counts, default=[5, 10, 20])
    p.add_argument("--duration", type=float, default=120)
    p.add_argument("--timing", action="store_true", help="include wall-clock and RSS (not deterministic)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("patterns", help="export the builtin pattern definitions")
    p.set_defaults(func=cmd_patterns)

    p = sub.add_parser("serve", parents=[with_db], help="read-only HTTP query service")
    p.add_argument("--listen", default=os.environ.get("OMA_LISTEN", "127.0.0.1:8080"), help="HOST:PORT")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"oma: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QueryError as exc:
        print(f"oma: {type(exc).__name__}: {exc.args[0]}", file=sys.stderr)
        return EXIT_DATA
    except (InvalidScenario, StoreError, DecodeError, ValueError, OSError) as exc:
        print(f"oma: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
