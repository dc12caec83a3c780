"""Simulated storage devices.

A device is a byte store (usually file-backed) with a two-parameter cost
model: one contiguous transfer costs fixed_us plus size * per_byte_us.
Timing is explicit rather than slept: callers pass the time at which they
issue a request and get the completion time back.  A device serializes
its transfers first-come-first-served, so a request issued while the
device is still busy queues behind the in-flight one.

Only the database device may fail.  Log, archive, and backup devices are
treated as stable storage and reject fail().
"""

import enum
import os
import threading
from dataclasses import dataclass

from .errors import MediaFailureError, StorageError


class DeviceRole(enum.Enum):
    DATABASE = "database"
    REPLACEMENT = "replacement"
    LOG = "log"
    ARCHIVE = "archive"
    BACKUP = "backup"


# Roles that may suffer a media failure.
_FAILABLE = {DeviceRole.DATABASE}


@dataclass(frozen=True)
class LatencyModel:
    fixed_us: float = 0.0
    per_byte_us: float = 0.0

    def cost_us(self, nbytes: int) -> float:
        return self.fixed_us + nbytes * self.per_byte_us


class Device:
    """Byte store plus latency accounting and failure state.

    path=None builds an accounting-only device (no byte store) for
    subsystems that manage their own files, like the log archive.
    """

    def __init__(self, role: DeviceRole, path: str | None = None,
                 latency: LatencyModel = LatencyModel(), create: bool = False):
        self.role = role
        self.path = path
        self.latency = latency
        self.failed = False
        self.reads = 0
        self.writes = 0
        self.bytes_read = 0
        self.bytes_written = 0
        self._busy_until = 0.0
        self._lock = threading.Lock()
        self._fd = None
        if path is not None:
            flags = os.O_RDWR | (os.O_CREAT if create else 0)
            self._fd = os.open(path, flags, 0o644)

    def close(self) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None

    def fail(self) -> None:
        if self.role not in _FAILABLE:
            raise StorageError(f"{self.role.value} device is stable storage and cannot fail")
        if self.failed:
            raise StorageError("device already failed")
        self.failed = True

    def _admit(self, nbytes: int, now: float) -> float:
        """Reserve the device for one transfer; returns completion time."""
        cost = self.latency.cost_us(nbytes)
        with self._lock:
            start = max(now, self._busy_until)
            done = start + cost
            self._busy_until = done
        return done

    def _check(self) -> None:
        if self.failed:
            raise MediaFailureError(f"{self.role.value} device has failed")

    def read(self, offset: int, nbytes: int, now: float = 0.0) -> tuple[bytes, float]:
        self._check()
        done = self._admit(nbytes, now)
        data = os.pread(self._fd, nbytes, offset)
        if len(data) != nbytes:
            raise StorageError(f"short read at offset {offset}: {len(data)} < {nbytes}")
        self.reads += 1
        self.bytes_read += nbytes
        return data, done

    def write(self, offset: int, data: bytes, now: float = 0.0) -> float:
        self._check()
        done = self._admit(len(data), now)
        written = os.pwrite(self._fd, data, offset)
        if written != len(data):
            raise StorageError(f"short write at offset {offset}")
        self.writes += 1
        self.bytes_written += len(data)
        return done

    # Accounting-only entry points for subsystems with their own file I/O.
    def charge_read(self, nbytes: int, now: float = 0.0) -> float:
        self._check()
        self.reads += 1
        self.bytes_read += nbytes
        return self._admit(nbytes, now)

    def charge_write(self, nbytes: int, now: float = 0.0) -> float:
        self._check()
        self.writes += 1
        self.bytes_written += nbytes
        return self._admit(nbytes, now)

    def size(self) -> int:
        return os.fstat(self._fd).st_size
