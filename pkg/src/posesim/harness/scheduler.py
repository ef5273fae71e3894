"""Discrete-event scheduler over integer logical seconds.

Events are ordered by ``(time, seq)`` where ``seq`` is assigned at enqueue,
so runs with equal inputs fire events in exactly the same order.
"""

from __future__ import annotations

import heapq


class Scheduler:
    def __init__(self):
        self.now = 0
        self._heap: list = []
        self._seq = 0
        self._cancelled: set[int] = set()
        self.fired = 0

    def at(self, time: int, fn, *args) -> int:
        if time < self.now:
            raise ValueError(f"cannot schedule in the past ({time} < {self.now})")
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, fn, args))
        return self._seq

    def after(self, delay: int, fn, *args) -> int:
        return self.at(self.now + delay, fn, *args)

    def cancel(self, event_id: int | None) -> None:
        if event_id is not None:
            self._cancelled.add(event_id)

    def pending(self) -> int:
        return len(self._heap) - len(self._cancelled)

    def step(self) -> bool:
        while self._heap:
            time, seq, fn, args = heapq.heappop(self._heap)
            if seq in self._cancelled:
                self._cancelled.discard(seq)
                continue
            self.now = time
            self.fired += 1
            fn(*args)
            return True
        return False

    def run(self, until: int | None = None, stop=None) -> None:
        """Fire events until the queue drains, ``until`` passes or ``stop()`` is true."""
        while self._heap:
            if until is not None and self._heap[0][0] > until:
                self.now = until
                return
            if not self.step():
                return
            if stop is not None and stop():
                return
