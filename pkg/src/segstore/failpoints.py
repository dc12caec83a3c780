"""Named failure-injection points.

Crash-sensitive code paths call ``hit("some:point")`` at the interesting
spots (between writing a shadow file and renaming it, for instance).  By
default a hit is free.  Tests arm a point to raise, usually CrashInjected,
for a limited number of hits.
"""

import threading

from .errors import CrashInjected

_lock = threading.Lock()
_armed: dict[str, list] = {}  # name -> [exception type, remaining hits]


def arm(name: str, exc=CrashInjected, times: int = 1) -> None:
    with _lock:
        _armed[name] = [exc, times]


def disarm(name: str) -> None:
    with _lock:
        _armed.pop(name, None)


def clear() -> None:
    with _lock:
        _armed.clear()


def hit(name: str) -> None:
    with _lock:
        entry = _armed.get(name)
        if entry is None:
            return
        entry[1] -= 1
        if entry[1] <= 0:
            del _armed[name]
        exc = entry[0]
    raise exc(f"failpoint {name}")
