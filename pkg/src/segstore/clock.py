"""Virtual and wall clocks.

All timing in the engine is expressed in microseconds.  Devices do no
sleeping of their own; they take the caller's current time and return a
completion time.  A clock only matters to code that has to pace itself:
the threaded restore scheduler and the wall-clock demo mode.
"""

import threading
import time


class VirtualClock:
    """A clock that advances only when someone moves it.

    Safe for concurrent use; sleep_until never blocks, it just pushes the
    clock forward.
    """

    def __init__(self, start_us: float = 0.0):
        self._now = float(start_us)
        self._lock = threading.Lock()

    def now(self) -> float:
        return self._now

    def sleep_until(self, t_us: float) -> None:
        with self._lock:
            if t_us > self._now:
                self._now = t_us


class WallClock:
    """Real time, scaled: one simulated microsecond takes 1/scale real us."""

    def __init__(self, scale: float = 1.0):
        self.scale = scale
        self._origin = time.monotonic()

    def now(self) -> float:
        return (time.monotonic() - self._origin) * 1e6 * self.scale

    def sleep_until(self, t_us: float) -> None:
        delta = (t_us - self.now()) / (1e6 * self.scale)
        if delta > 0:
            time.sleep(delta)
