"""Element-count instrumentation for intermediate arrays.

Follow strategies report every intermediate they allocate; a ``Meter``
opened with :func:`metered` aggregates the counts. Counting elements
instead of process memory keeps the numbers deterministic.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field

_lock = threading.Lock()
_active: list[Meter] = []


@dataclass
class Meter:
    allocated: int = 0  # cumulative elements allocated
    live: int = 0
    peak: int = 0  # max simultaneously live elements
    largest: dict[str, int] = field(default_factory=dict)  # biggest single block per tag
    totals: dict[str, int] = field(default_factory=dict)

    @property
    def peak_bytes(self) -> int:
        return 8 * self.peak

    def _alloc(self, n, tag):
        self.allocated += n
        self.live += n
        self.peak = max(self.peak, self.live)
        self.largest[tag] = max(self.largest.get(tag, 0), n)
        self.totals[tag] = self.totals.get(tag, 0) + n

    def _free(self, n):
        self.live -= n


def alloc(n, tag="dense"):
    if not _active:
        return
    with _lock:
        for m in _active:
            m._alloc(int(n), tag)


def free(n):
    if not _active:
        return
    with _lock:
        for m in _active:
            m._free(int(n))


@contextmanager
def metered():
    """Collect allocation counts from every follow call made inside the block."""
    m = Meter()
    with _lock:
        _active.append(m)
    try:
        yield m
    finally:
        with _lock:
            _active.remove(m)
