"""Deterministic benchmark engine with mid-run media-failure injection.

Workers, the log archiver, and the restore scheduler are simulated actors
with private virtual clocks.  The engine always advances the actor whose
clock is furthest behind (ties broken by actor id), so a run is a pure
function of its configuration and seed, while per-device FCFS busy-until
accounting still shapes the timeline the way real contention would: the
log device serializes appends, restore transfers queue behind each other,
and a transaction that touches a not-yet-restored segment parks until the
scheduler's completion signal.

Time is virtual microseconds end to end; wall mode paces the identical
schedule against the real clock for demo runs.  The same storage, WAL,
archive, and restore objects also run under real threads - that side is
exercised by the concurrency tests - but benchmark numbers come from this
engine so they are reproducible.
"""

import os
import shutil
import statistics
import tempfile
from dataclasses import replace

from .archive import ArchiveDirectory, LogArchiver
from .backup import BackupImage
from .bufferpool import Blocked, BufferPool
from .clock import WallClock
from .device import DeviceRole, LatencyModel
from .errors import StorageError
from .metrics import MetricsReport, emit_csv
from .pages import Page
from .restore import Policy, RestoreContext, begin_restore
from .volume import Geometry, Volume
from .wal import WriteAheadLog
from .workload import WorkloadConfig, WorkerStream

_US = 1_000_000.0


class _Worker:
    __slots__ = ("worker_id", "stream", "clock", "gen", "parked_on",
                 "txns_total", "txns_phase", "done")

    def __init__(self, worker_id: int, stream: WorkerStream):
        self.worker_id = worker_id
        self.stream = stream
        self.clock = 0.0
        self.gen = None
        self.parked_on = None
        self.txns_total = 0
        self.txns_phase = 0
        self.done = False


class BenchEngine:
    """One benchmark run over a scratch directory."""

    def __init__(self, config: WorkloadConfig, workdir: str,
                 inject_failure: bool = True, finish_restore: bool = False):
        config.validate()
        self.config = config
        self.workdir = workdir
        self.inject_failure = inject_failure and config.failure_time_s is not None
        self.finish_restore = finish_restore
        self.pacer = WallClock() if config.wall_clock else None

        geo = Geometry(config.page_size, config.page_count, config.pages_per_segment)
        os.makedirs(workdir, exist_ok=True)
        self.volume = Volume.create(os.path.join(workdir, "volume.db"), geo,
                                    DeviceRole.DATABASE, LatencyModel(*config.db_latency))
        self.replacement = Volume.create(os.path.join(workdir, "replacement.db"), geo,
                                         DeviceRole.REPLACEMENT,
                                         LatencyModel(*config.db_latency))
        self.wal = WriteAheadLog(os.path.join(workdir, "wal.log"),
                                 LatencyModel(*config.log_latency))
        self.archive_dir = ArchiveDirectory(os.path.join(workdir, "archive"),
                                            LatencyModel(*config.archive_latency))
        self.archiver = LogArchiver(self.wal, self.archive_dir,
                                    run_size_limit=config.run_size_limit,
                                    fan_in=config.archive_fan_in,
                                    mode=config.archive_mode)
        self.pool = BufferPool(self.volume, self.wal, config.pool_pages,
                               replacement=self.replacement)
        self.backup, _ = BackupImage.create(workdir, self.volume, self.wal,
                                            LatencyModel(*config.backup_latency))
        self.manager = None
        self.failure_token = None
        self.report = MetricsReport(duration_s=config.duration_s,
                                    failure_time_s=config.failure_time_s,
                                    archive_mode=config.archive_mode)
        self.pool.on_page_read = self.report.record_page_read
        self.workers = [_Worker(i, WorkerStream(config, i))
                        for i in range(config.worker_threads)]
        for w in self.workers:
            w.gen = self._txn_gen(w)
        self._arch_clock = 0.0
        self._arch_next = 0.0
        self._cleaner_clock = 0.0
        self._cleaner_next = 0.0
        self._sched_clock = 0.0
        self._t_fail_us = (config.failure_time_s * _US
                           if config.failure_time_s is not None else None)
        self._post_failure = False
        self._latency_ok = True

    # -- the worker coroutine ------------------------------------------------

    def _txn_gen(self, w: _Worker):
        tick = self.config
        while True:
            ops = w.stream.next_txn()
            t_start = w.clock
            io_wait = 0.0
            w.clock += tick.txn_think_us
            for page_id, op, key, value in ops:
                w.clock += tick.op_think_us
                while True:
                    out = self.pool.try_fix_page(page_id, "exclusive", now=w.clock)
                    if isinstance(out, Blocked):
                        resume = yield ("blocked", out.handle)
                        io_wait += max(0.0, resume - w.clock)
                        w.clock = max(w.clock, resume)
                        continue
                    handle, t = out
                    io_wait += max(0.0, t - w.clock)
                    w.clock = max(w.clock, t)
                    break
                lsn, t = self.wal.append(page_id, w.worker_id, op, key, value, now=w.clock)
                io_wait += max(0.0, t - w.clock)
                w.clock = max(w.clock, t)
                page = handle.page
                if op == 0:
                    page.records[key] = value
                else:
                    page.records.pop(key, None)
                page.page_lsn = lsn
                self.pool.unfix_page(handle, mark_dirty=True)
            latency = w.clock - t_start
            if latency + 1e-6 < io_wait:
                self._latency_ok = False
            self.report.record_txn(w.worker_id * 10 ** 9 + w.txns_total,
                                   w.clock, latency, self._post_failure)
            w.txns_total += 1
            w.txns_phase += 1
            yield ("txn_done",)

    # -- actor scheduling -------------------------------------------------------

    def _archiver_runnable(self) -> bool:
        behind = max(self.archiver.consumed_lsn, 1) < self.wal.durable_lsn()
        return behind or self.archiver.maintenance_due()

    def _archiver_step(self) -> None:
        now = max(self._arch_clock, self._arch_next, self.wal.last_append_at)
        _, t = self.archiver.archive_step(self.config.archiver_budget, now)
        if self.archiver.maintenance_due():
            t = self.archiver.run_maintenance(t)
        self._arch_clock = t
        self._arch_next = t + self.config.archiver_interval_us

    def _cleaner_ready(self) -> float | None:
        if self.config.cleaner_interval_us <= 0 or self.pool.dirty_count() == 0:
            return None
        return max(self._cleaner_clock, self._cleaner_next)

    def _cleaner_step(self, ready: float) -> None:
        _, t = self.pool.flush_some(self.config.cleaner_batch, ready)
        self._cleaner_clock = t
        self._cleaner_next = t + self.config.cleaner_interval_us

    def _scheduler_ready(self) -> float | None:
        if self.manager is None or not self.manager.has_pending_work():
            return None
        head = self.manager.next_queue_time()
        base = self._sched_clock
        return max(base, head) if head is not None else base

    def _scheduler_step(self, ready: float) -> None:
        worked, t = self.manager.step(ready)
        if worked:
            self._sched_clock = t

    def _unpark(self) -> None:
        for w in self.workers:
            if w.parked_on is not None and w.parked_on.ready:
                handle = w.parked_on
                if handle.error is not None:
                    raise StorageError(f"worker {w.worker_id} saw restore failure: "
                                       f"{handle.error}")
                w.parked_on = None
                resume = max(w.clock, handle.done_at or w.clock)
                out = w.gen.send(resume)
                self._dispatch(w, out)

    def _dispatch(self, w: _Worker, out) -> None:
        if out[0] == "blocked":
            w.parked_on = out[1]

    def _worker_step(self, w: _Worker) -> None:
        out = next(w.gen)
        self._dispatch(w, out)

    def _run_phase(self, worker_active) -> None:
        """Advance actors until every worker has either left the phase (per
        the predicate) or finished; the archiver and scheduler interleave by
        virtual time while any worker still has business here."""
        while True:
            self._unpark()
            runnable = [w for w in self.workers
                        if w.parked_on is None and not w.done and worker_active(w)]
            parked = [w for w in self.workers if w.parked_on is not None]
            if not runnable and not parked:
                return  # archiver/scheduler lag is picked up by later phases
            candidates = [(w.clock, 1, w.worker_id, "worker", w) for w in runnable]
            if self._archiver_runnable():
                now = max(self._arch_clock, self._arch_next, self.wal.last_append_at)
                candidates.append((now, 0, -1, "archiver", None))
            ready = self._scheduler_ready()
            if ready is not None:
                candidates.append((ready, 0, -2, "scheduler", ready))
            cleaner = self._cleaner_ready()
            if cleaner is not None and (runnable or parked):
                candidates.append((cleaner, 0, -3, "cleaner", cleaner))
            if not candidates:
                raise StorageError("workers parked with no restore work pending")
            candidates.sort(key=lambda c: (c[0], c[1], c[2]))
            t, _, _, kind, payload = candidates[0]
            if self.pacer is not None:
                self.pacer.sleep_until(t)
            if kind == "worker":
                self._worker_step(payload)
            elif kind == "archiver":
                self._archiver_step()
            elif kind == "cleaner":
                self._cleaner_step(payload)
            else:
                self._scheduler_step(payload)

    # -- failure injection ---------------------------------------------------------

    def _inject_failure(self) -> None:
        t_fail = self._t_fail_us if self._t_fail_us is not None else \
            max((w.clock for w in self.workers), default=0.0)
        self._t_fail_us = t_fail
        self.failure_token = self.pool.fail_device(now=t_fail)
        self._db_ops_at_failure = (self.volume.device.reads + self.volume.device.writes)
        t_catch = self.archiver.archive_up_to(self.failure_token.failure_lsn,
                                              max(self._arch_clock, t_fail))
        self._arch_clock = t_catch
        ctx = RestoreContext(
            backup=self.backup,
            archive=self.archive_dir,
            replacement=self.replacement,
            failure_lsn=self.failure_token.failure_lsn,
            policy=self.config.policy,
            batch_cap=self.config.batch_cap,
            buffer_pool=self.pool,
        )
        self.manager = begin_restore(ctx, start_thread=False)
        self.manager.on_restore = self.report.record_restore
        self._sched_clock = max(t_catch, t_fail)
        self.report.restore_begin_us = self._sched_clock

    # -- run -------------------------------------------------------------------------

    def run(self) -> MetricsReport:
        cfg = self.config
        count_mode = cfg.txns_per_worker is not None
        duration_us = cfg.duration_s * _US
        if count_mode:
            pre_budget, post_budget = cfg.txns_per_worker
            if not self.inject_failure:
                pre_budget += post_budget  # shadow runs do the same total work
            phase_a = lambda w: w.txns_phase < pre_budget
        elif self.inject_failure:
            fail_at = self._t_fail_us
            phase_a = lambda w: w.clock < fail_at
        else:
            phase_a = lambda w: w.clock < duration_us
        self._run_phase(phase_a)

        if self.inject_failure:
            for w in self.workers:
                w.txns_phase = 0
            if count_mode:
                # failure lands at the quiesced boundary
                self._t_fail_us = max((w.clock for w in self.workers), default=0.0)
            self._inject_failure()
            self._post_failure = True
            if count_mode:
                phase_b = lambda w: w.txns_phase < post_budget
            else:
                phase_b = lambda w: w.clock < duration_us
            self._run_phase(phase_b)

        for w in self.workers:
            w.done = True

        if self.manager is not None and self.finish_restore:
            if cfg.policy == Policy.ON_DEMAND:
                for seg in range(self.manager.bitmap.total):
                    self.manager.request_segment(seg, self._sched_clock)
            t = self.manager.drain(self._sched_clock)
            self._sched_clock = t
        if self.manager is not None and self.manager.complete:
            self.report.restore_end_us = max(
                (e[1] for e in self.report.restore_events), default=self._sched_clock)

        self._finalize()
        return self.report

    def _finalize(self) -> None:
        end_us = max([w.clock for w in self.workers]
                     + [self._arch_clock, self._sched_clock, 1.0])
        if self.config.txns_per_worker is not None:
            self.report.duration_s = int(end_us // _US) + 1
        self.report.mark_invariant("latency_accounting", self._latency_ok)
        if self.failure_token is not None:
            untouched = (self.volume.device.reads + self.volume.device.writes
                         == self._db_ops_at_failure)
            self.report.mark_invariant("failed_device_untouched", untouched)
        if self.manager is not None and self.manager.complete:
            geo = self.replacement.geometry
            self.report.mark_invariant(
                "restored_bytes_total",
                self.manager.bytes_restored == geo.page_count * geo.page_size)
            once = all(n == 1 for n in self.manager.success_count.values())
            self.report.mark_invariant("segments_restored_once", once)

    def flush_all(self) -> None:
        """Push every dirty page to the live volume (used by verification
        runs after restore completes; never blocks then)."""
        end = max(w.clock for w in self.workers)
        self.pool.flush_all(end)
        self.wal.flush()

    def final_volume(self) -> Volume:
        return self.replacement if self.pool.failed else self.volume

    def close(self) -> None:
        self.volume.close()
        self.replacement.close()
        self.wal.close()
        self.archive_dir.close()
        self.backup.close()


# -- oracles ---------------------------------------------------------------------

def oracle_volume_bytes(backup: BackupImage, wal: WriteAheadLog) -> bytes:
    """Brute-force media recovery: load the backup image and replay the
    whole log in LSN order from the backup's min_lsn.  Returns the full
    volume image those semantics produce.  Kept deliberately independent
    of the probe/merge/replay restore path."""
    from .backup import HEADER_SIZE as BK_HEADER
    geo = backup.geometry
    pages = {}
    with open(backup.path, "rb") as f:
        f.seek(BK_HEADER)
        for pid in range(geo.page_count):
            pages[pid] = Page.from_bytes(f.read(geo.page_size))
    for rec in wal.scan(0):
        if rec.lsn < backup.min_lsn:
            continue
        page = pages[rec.page_id]
        if rec.lsn <= page.page_lsn:
            continue
        if rec.op == 0:
            page.records[rec.key] = rec.value
        else:
            page.records.pop(rec.key, None)
        page.page_lsn = rec.lsn
    out = bytearray(geo.header_bytes())
    for pid in range(geo.page_count):
        out += pages[pid].to_bytes(geo.page_size)
    return bytes(out)


def volume_file_bytes(path: str) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def logical_state(path: str) -> dict[int, dict[int, bytes]]:
    """page id -> records map for every non-empty page of a volume file."""
    vol = Volume.open(path)
    state = {}
    try:
        for pid in range(vol.geometry.page_count):
            page, _ = vol.read_page(pid)
            if page.records:
                state[pid] = dict(page.records)
    finally:
        vol.close()
    return state


# -- entry points -----------------------------------------------------------------

def run_benchmark(config: WorkloadConfig, workdir: str | None = None,
                  keep_workdir: bool = False) -> MetricsReport:
    """Build the volume, take a full backup, run the workload with the
    archiver online, inject the failure, restore on demand, and emit CSVs
    when config.out_dir is set."""
    own_dir = workdir is None
    workdir = workdir or tempfile.mkdtemp(prefix="segstore-bench-")
    engine = BenchEngine(config, workdir)
    try:
        report = engine.run()
    except StorageError:
        engine.report.valid = False
        raise
    finally:
        engine.close()
        if own_dir and not keep_workdir:
            shutil.rmtree(workdir, ignore_errors=True)
    if config.out_dir:
        emit_csv(report, config.out_dir)
    return report


def measure_archiving_overhead(config: WorkloadConfig) -> dict:
    """Same run twice, no failure: archiving with sort+index vs a plain
    file copy.  Reports the median per-second throughput of each and the
    overhead ratio."""
    results = {}
    for mode in ("sorted", "copy"):
        cfg = replace(config, archive_mode=mode, failure_time_s=None)
        workdir = tempfile.mkdtemp(prefix=f"segstore-ovh-{mode}-")
        engine = BenchEngine(cfg, workdir, inject_failure=False)
        try:
            report = engine.run()
        finally:
            engine.close()
            shutil.rmtree(workdir, ignore_errors=True)
        series = [n for n in report.per_second_txns() if n > 0]
        results[mode] = statistics.median(series) if series else 0.0
    sorted_tps = results["sorted"]
    copy_tps = results["copy"]
    overhead = 1.0 - (sorted_tps / copy_tps) if copy_tps else 0.0
    return {"sorted_indexed_tps": sorted_tps, "plain_copy_tps": copy_tps,
            "overhead_ratio": overhead}


def verify_equivalence(config: WorkloadConfig) -> dict:
    """The headline correctness check: a run that loses its database device
    mid-way and restores on demand must end byte-identical to brute-force
    recovery and logically identical to the same run without a failure."""
    cfg = config if config.txns_per_worker is not None else \
        replace(config, txns_per_worker=(200, 200))
    out = {}

    fail_dir = tempfile.mkdtemp(prefix="segstore-verify-fail-")
    engine = BenchEngine(cfg, fail_dir, finish_restore=True)
    try:
        report = engine.run()
        engine.flush_all()
        restored = volume_file_bytes(engine.replacement.device.path)
        oracle = oracle_volume_bytes(engine.backup, engine.wal)
        out["oracle_match"] = restored == oracle
        out["restore_complete"] = engine.manager is not None and engine.manager.complete
        out["invariants"] = dict(report.invariants)
        failed_state = logical_state(engine.replacement.device.path)
    finally:
        engine.close()
        shutil.rmtree(fail_dir, ignore_errors=True)

    shadow_dir = tempfile.mkdtemp(prefix="segstore-verify-shadow-")
    shadow_cfg = replace(cfg, failure_time_s=None)
    engine = BenchEngine(shadow_cfg, shadow_dir, inject_failure=False)
    try:
        engine.run()
        engine.flush_all()
        shadow_state = logical_state(engine.volume.device.path)
    finally:
        engine.close()
        shutil.rmtree(shadow_dir, ignore_errors=True)

    out["shadow_match"] = failed_state == shadow_state
    out["ok"] = bool(out["oracle_match"] and out["shadow_match"]
                     and out["restore_complete"]
                     and all(out["invariants"].values()))
    return out
