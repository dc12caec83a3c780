"""Benchmark metric collection and CSV emission.

Three CSV files per run:

    throughput.csv       t_sec, txns, mean_latency_us, max_latency_us, page_reads
    restore.csv          t_sec, bytes_restored, batch_size_mean, queue_depth
    latency_samples.csv  txn_id, latency_us, post_failure

The per-second series always has exactly one row per second of the
configured duration, empty seconds included.
"""

import csv
import os
from dataclasses import dataclass, field


@dataclass
class MetricsReport:
    duration_s: float
    failure_time_s: float | None
    txns: dict = field(default_factory=dict)           # sec -> count
    lat_sum: dict = field(default_factory=dict)        # sec -> us
    lat_max: dict = field(default_factory=dict)        # sec -> us
    page_reads: dict = field(default_factory=dict)     # sec -> count
    restored_bytes: dict = field(default_factory=dict)  # sec -> bytes
    batch_sizes: dict = field(default_factory=dict)    # sec -> [sizes]
    queue_depths: dict = field(default_factory=dict)   # sec -> max depth seen
    latency_samples: list = field(default_factory=list)  # (txn_id, us, post_failure)
    restore_events: list = field(default_factory=list)   # (t_start, t_done, first, count, bytes)
    restore_begin_us: float | None = None
    restore_end_us: float | None = None
    archive_mode: str = "sorted"
    total_txns: int = 0
    invariants: dict = field(default_factory=dict)
    valid: bool = True

    # -- recording ------------------------------------------------------------

    def record_txn(self, txn_id: int, done_us: float, latency_us: float,
                   post_failure: bool) -> None:
        sec = int(done_us // 1_000_000)
        self.txns[sec] = self.txns.get(sec, 0) + 1
        self.lat_sum[sec] = self.lat_sum.get(sec, 0.0) + latency_us
        self.lat_max[sec] = max(self.lat_max.get(sec, 0.0), latency_us)
        self.latency_samples.append((txn_id, latency_us, post_failure))
        self.total_txns += 1

    def record_page_read(self, t_us: float) -> None:
        sec = int(t_us // 1_000_000)
        self.page_reads[sec] = self.page_reads.get(sec, 0) + 1

    def record_restore(self, t_start: float, t_done: float, first: int,
                       count: int, nbytes: int, qdepth: int) -> None:
        sec = int(t_done // 1_000_000)
        self.restored_bytes[sec] = self.restored_bytes.get(sec, 0) + nbytes
        self.batch_sizes.setdefault(sec, []).append(count)
        self.queue_depths[sec] = max(self.queue_depths.get(sec, 0), qdepth)
        self.restore_events.append((t_start, t_done, first, count, nbytes))

    def mark_invariant(self, name: str, ok: bool) -> None:
        self.invariants[name] = self.invariants.get(name, True) and ok
        if not ok:
            self.valid = False

    # -- series views ------------------------------------------------------------

    def seconds(self) -> range:
        return range(int(self.duration_s))

    def throughput_rows(self) -> list[tuple]:
        rows = []
        for sec in self.seconds():
            n = self.txns.get(sec, 0)
            mean = self.lat_sum.get(sec, 0.0) / n if n else 0.0
            rows.append((sec, n, round(mean, 3), round(self.lat_max.get(sec, 0.0), 3),
                         self.page_reads.get(sec, 0)))
        return rows

    def restore_rows(self) -> list[tuple]:
        rows = []
        for sec in self.seconds():
            sizes = self.batch_sizes.get(sec, [])
            mean = sum(sizes) / len(sizes) if sizes else 0.0
            rows.append((sec, self.restored_bytes.get(sec, 0), round(mean, 3),
                         self.queue_depths.get(sec, 0)))
        return rows

    def per_second_txns(self) -> list[int]:
        return [self.txns.get(sec, 0) for sec in self.seconds()]

    def post_failure_latencies(self) -> list[float]:
        return [lat for _, lat, post in self.latency_samples if post]

    def pre_failure_latencies(self) -> list[float]:
        return [lat for _, lat, post in self.latency_samples if not post]


def emit_csv(report: MetricsReport, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "throughput.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t_sec", "txns", "mean_latency_us", "max_latency_us", "page_reads"])
        w.writerows(report.throughput_rows())
    with open(os.path.join(out_dir, "restore.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t_sec", "bytes_restored", "batch_size_mean", "queue_depth"])
        w.writerows(report.restore_rows())
    with open(os.path.join(out_dir, "latency_samples.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["txn_id", "latency_us", "post_failure"])
        for txn_id, lat, post in report.latency_samples:
            w.writerow([txn_id, round(lat, 3), int(post)])


def load_csv(path: str) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def percentile(values: list[float], p: float) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    idx = min(len(ordered) - 1, max(0, int(round(p * (len(ordered) - 1)))))
    return ordered[idx]
