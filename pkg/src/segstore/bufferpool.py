"""Buffer pool with CLOCK eviction over simulated volumes.

fix/unfix pin pages and take a shared or exclusive frame latch; a pinned
frame is never evicted and eviction of a dirty frame enforces the
write-ahead rule (log flushed through the page's LSN before the page is
written).  After the database device fails, reads and dirty write-back
reroute to the pre-attached replacement volume, gated per segment by the
restore manager: the page is only read from (or flushed to) the
replacement once its segment is restored.

Two fix flavors exist so both threaded servers and the deterministic
benchmark engine can share this code:

  fix_page      blocks until the page is resident (waiting on the restore
                manager's completion signal when needed), never holding a
                pool-wide lock while it waits;
  try_fix_page  never blocks on restore - it returns a Blocked outcome
                carrying the segment's completion handle so a cooperative
                caller can park and retry.
"""

import threading

from .errors import InvalidPageIdError, MediaFailureError, StorageError
from .pages import segment_of
from .volume import Volume
from .wal import WriteAheadLog


class RWLatch:
    """Shared/exclusive frame latch."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def acquire(self, mode: str) -> None:
        with self._cond:
            if mode == "shared":
                while self._writer:
                    self._cond.wait()
                self._readers += 1
            elif mode == "exclusive":
                while self._writer or self._readers:
                    self._cond.wait()
                self._writer = True
            else:
                raise StorageError(f"bad latch mode {mode}")

    def release(self, mode: str) -> None:
        with self._cond:
            if mode == "shared":
                self._readers -= 1
            else:
                self._writer = False
            self._cond.notify_all()


class BufferFrame:
    __slots__ = ("frame_id", "page", "pin_count", "dirty", "ref",
                 "loading", "evicting", "latch")

    def __init__(self, frame_id: int):
        self.frame_id = frame_id
        self.page = None
        self.pin_count = 0
        self.dirty = False
        self.ref = False
        self.loading = False
        self.evicting = False
        self.latch = RWLatch()


class PageHandle:
    """One fix; release it exactly once via unfix_page."""

    __slots__ = ("frame", "mode", "released")

    def __init__(self, frame: BufferFrame, mode: str):
        self.frame = frame
        self.mode = mode
        self.released = False

    @property
    def page(self):
        return self.frame.page


class Blocked:
    """try_fix_page outcome: the access needs a segment restored first."""

    __slots__ = ("segment_id", "handle", "reason")

    def __init__(self, segment_id: int, handle, reason: str):
        self.segment_id = segment_id
        self.handle = handle
        self.reason = reason  # "read" or "evict"


class FailureToken:
    __slots__ = ("failure_lsn",)

    def __init__(self, failure_lsn: int):
        self.failure_lsn = failure_lsn


class BufferPool:
    def __init__(self, volume: Volume, wal: WriteAheadLog, capacity: int,
                 replacement: Volume | None = None):
        if capacity <= 0:
            raise StorageError("pool needs at least one frame")
        self.volume = volume
        self.replacement = replacement
        self.wal = wal
        self.capacity = capacity
        self._frames = [BufferFrame(i) for i in range(capacity)]
        self._free = list(reversed(range(capacity)))
        self._table: dict[int, BufferFrame] = {}
        self._hand = 0
        self._cond = threading.Condition()
        self._gate = None  # restore manager: is_restored(seg), request_segment(seg, now)
        self._dirty_n = 0
        self.page_reads = 0
        self.evictions = 0
        self.on_page_read = None  # callback(t_us) for metrics

    # -- failure wiring -----------------------------------------------------

    def fail_device(self, now: float = 0.0) -> FailureToken:
        """Inject the media failure; the WAL is flushed so the failure LSN
        is durable before anyone archives up to it."""
        self.wal.flush(now=now)
        self.volume.device.fail()
        return FailureToken(self.wal.end_lsn())

    def set_restore_gate(self, gate) -> None:
        with self._cond:
            self._gate = gate
            self._cond.notify_all()

    @property
    def failed(self) -> bool:
        return self.volume.device.failed

    def _segment_ready(self, page_id: int) -> bool:
        seg = segment_of(page_id, self.volume.geometry.pages_per_segment)
        return self._gate is not None and self._gate.is_restored(seg)

    def _blocked(self, page_id: int, reason: str, now: float) -> Blocked:
        if self._gate is None:
            raise MediaFailureError(
                f"database device failed and no restore manager is attached "
                f"(page {page_id})")
        seg = segment_of(page_id, self.volume.geometry.pages_per_segment)
        return Blocked(seg, self._gate.request_segment(seg, now), reason)

    # -- fix / unfix ----------------------------------------------------------

    def fix_page(self, page_id: int, mode: str = "exclusive",
                 now: float = 0.0, timeout: float | None = 60.0):
        """Blocking fix; returns (PageHandle, t)."""
        while True:
            out = self._fix_inner(page_id, mode, now, blocking=True)
            if isinstance(out, Blocked):
                out.handle.wait(timeout)
                now = max(now, out.handle.done_at or now)
                continue
            return out

    def try_fix_page(self, page_id: int, mode: str = "exclusive", now: float = 0.0):
        """Cooperative fix; returns (PageHandle, t) or Blocked."""
        return self._fix_inner(page_id, mode, now, blocking=False)

    def _fix_inner(self, page_id: int, mode: str, now: float, blocking: bool):
        if not 0 <= page_id < self.volume.geometry.page_count:
            raise InvalidPageIdError(f"page {page_id} out of range")
        while True:
            victim = None
            loader = None
            with self._cond:
                frame = self._table.get(page_id)
                if frame is not None:
                    if frame.loading or frame.evicting:
                        if not blocking:
                            raise StorageError("cooperative fix raced a concurrent load")
                        self._cond.wait(0.05)
                        continue
                    frame.pin_count += 1
                    frame.ref = True
                    target, t_done = frame, now
                else:
                    if self.failed and not self._segment_ready(page_id):
                        return self._blocked(page_id, "read", now)
                    if not self._free:
                        pick = self._clock_pick_locked()
                        if pick is None:
                            if not blocking:
                                raise StorageError("every frame pinned; pool too small")
                            self._cond.wait(0.05)
                            continue
                        kind, payload = pick
                        if kind == "blocked":
                            return self._blocked(payload, "evict", now)
                        if kind == "clean":
                            self._retire_locked(payload)
                        else:
                            payload.evicting = True
                            victim = payload
                    if victim is None:
                        loader = self._frames[self._free.pop()]
                        loader.page = None
                        loader.pin_count = 1
                        loader.dirty = False
                        loader.loading = True
                        self._table[page_id] = loader
            if victim is not None:
                t = self._flush_frame(victim, now)
                with self._cond:
                    self._retire_locked(victim)
                    victim.evicting = False
                    self._cond.notify_all()
                now = t
                continue
            if loader is not None:
                try:
                    src = self.replacement if self.failed else self.volume
                    page, t_done = src.read_page(page_id, now)
                except BaseException:
                    with self._cond:
                        del self._table[page_id]
                        loader.loading = False
                        loader.pin_count = 0
                        self._free.append(loader.frame_id)
                        self._cond.notify_all()
                    raise
                with self._cond:
                    loader.page = page
                    loader.loading = False
                    loader.ref = True
                    self._cond.notify_all()
                self.page_reads += 1
                if self.on_page_read is not None:
                    self.on_page_read(t_done)
                target = loader
            target.latch.acquire(mode)
            return PageHandle(target, mode), t_done

    def unfix_page(self, handle: PageHandle, mark_dirty: bool = False) -> None:
        if handle.released:
            raise StorageError("page handle released twice")
        if mark_dirty and handle.mode != "exclusive":
            raise StorageError("dirtying a page requires the exclusive latch")
        handle.released = True
        handle.frame.latch.release(handle.mode)
        with self._cond:
            if handle.frame.pin_count <= 0:
                raise StorageError("unfix without matching fix")
            handle.frame.pin_count -= 1
            if mark_dirty and not handle.frame.dirty:
                handle.frame.dirty = True
                self._dirty_n += 1
            self._cond.notify_all()

    # -- eviction internals ---------------------------------------------------

    def _clock_pick_locked(self):
        """One CLOCK sweep.  Returns ("clean", frame), ("dirty", frame),
        ("blocked", page_id) when only restore-gated dirty frames remain,
        or None when everything is pinned."""
        blocked_page = None
        for _ in range(2 * self.capacity):
            frame = self._frames[self._hand]
            self._hand = (self._hand + 1) % self.capacity
            if frame.page is None or frame.pin_count > 0 or frame.loading or frame.evicting:
                continue
            if frame.ref:
                frame.ref = False
                continue
            if frame.dirty:
                if self.failed and not self._segment_ready(frame.page.page_id):
                    blocked_page = frame.page.page_id
                    continue
                return "dirty", frame
            return "clean", frame
        if blocked_page is not None:
            return "blocked", blocked_page
        return None

    def _retire_locked(self, frame: BufferFrame) -> None:
        self._table.pop(frame.page.page_id, None)
        frame.page = None
        if frame.dirty:
            frame.dirty = False
            self._dirty_n -= 1
        frame.ref = False
        self._free.append(frame.frame_id)
        self.evictions += 1

    def _flush_frame(self, frame: BufferFrame, now: float) -> float:
        """Write-ahead rule, then write the page to the live destination."""
        page = frame.page
        t = self.wal.flush(page.page_lsn, now)
        dest = self.replacement if self.failed else self.volume
        if dest is None:
            raise MediaFailureError("no writable device for dirty page")
        t = dest.write_page(page, t)
        with self._cond:
            if frame.dirty:
                frame.dirty = False
                self._dirty_n -= 1
        return t

    # -- explicit flushes -------------------------------------------------------

    def flush_page(self, page_id: int, now: float = 0.0,
                   timeout: float | None = 60.0) -> float:
        """Durably write one page if it is dirty in the pool.  Blocks on the
        restore gate when the replacement segment is not restored yet."""
        while True:
            with self._cond:
                frame = self._table.get(page_id)
                if frame is None or frame.page is None or not frame.dirty:
                    return now
                if frame.loading or frame.evicting:
                    self._cond.wait(0.05)
                    continue
                if self.failed and not self._segment_ready(page_id):
                    blocked = self._blocked(page_id, "flush", now)
                else:
                    frame.pin_count += 1
                    blocked = None
            if blocked is not None:
                blocked.handle.wait(timeout)
                now = max(now, blocked.handle.done_at or now)
                continue
            frame.latch.acquire("shared")
            try:
                t = self._flush_frame(frame, now)
            finally:
                frame.latch.release("shared")
                with self._cond:
                    frame.pin_count -= 1
                    self._cond.notify_all()
            return t

    def flush_all(self, now: float = 0.0) -> float:
        t = now
        with self._cond:
            dirty = [f.page.page_id for f in self._frames
                     if f.page is not None and f.dirty]
        for page_id in dirty:
            t = max(t, self.flush_page(page_id, t))
        return t

    def flush_some(self, limit: int, now: float = 0.0) -> tuple[int, float]:
        """Background page cleaning: write back up to limit dirty, unpinned
        pages, skipping anything the restore gate is not ready for.  Never
        blocks; returns (pages flushed, completion time)."""
        with self._cond:
            candidates = []
            for frame in self._frames:
                if len(candidates) >= limit:
                    break
                if (frame.page is None or not frame.dirty or frame.pin_count
                        or frame.loading or frame.evicting):
                    continue
                if self.failed and not self._segment_ready(frame.page.page_id):
                    continue
                frame.pin_count += 1
                candidates.append(frame)
        t = now
        flushed = 0
        for frame in candidates:
            frame.latch.acquire("shared")
            try:
                if frame.dirty:
                    t = self._flush_frame(frame, t)
                    flushed += 1
            finally:
                frame.latch.release("shared")
                with self._cond:
                    frame.pin_count -= 1
                    self._cond.notify_all()
        return flushed, t

    def dirty_count(self) -> int:
        return self._dirty_n

    # -- introspection ----------------------------------------------------------

    def resident(self, page_id: int) -> bool:
        with self._cond:
            frame = self._table.get(page_id)
            return frame is not None and frame.page is not None

    def pin_count(self, page_id: int) -> int:
        with self._cond:
            frame = self._table.get(page_id)
            return frame.pin_count if frame else 0
