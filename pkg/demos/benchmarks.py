"""Latency classes over 30 seeded crash loops, then the stress scaling table.

Deltas are event-time differences, so the numbers are identical on every
machine. Wall-clock figures are shown separately and will vary.

    python demos/benchmarks.py
"""

from oma.bench import bench_latency, bench_stress


def main() -> None:
    latency = bench_latency(30)
    print("evidence edges by latency class")
    print(latency.render_text())

    stress = bench_stress([5, 10, 20])
    print("stress scaling")
    print(stress.render_text())
    for row in stress.rows:
        print(f"  {row.pods:>2} pods: {row.wall_s:.2f} s wall, max RSS {row.max_rss_kb} KiB (informational)")


if __name__ == "__main__":
    main()
