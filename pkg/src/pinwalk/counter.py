"""Open-addressing visit counter.

Fixed-capacity power-of-two table mapping node ID -> visit count.
Probing starts at the Fibonacci multiplicative hash of the key and
advances linearly; the table refuses to grow past load factor 0.5,
which the capacity rule (next power of two >= 2x the step budget)
makes unreachable in normal operation.

The same layout is written in-place by the walk kernels; this class is
the Python-side view and reference implementation of the probe rule.
"""

from __future__ import annotations

import numpy as np

from .errors import CounterFullError
from .kernels import EMPTY as _EMPTY_U32
from .kernels import counter_compact as _compact
from .rng import MASK64

FIB64 = 0x9E3779B97F4A7C15
EMPTY = int(_EMPTY_U32)


def _capacity_for(n_steps: int) -> int:
    """Next power of two >= 2*n_steps (minimum 2)."""
    need = max(2, 2 * n_steps)
    return 1 << (need - 1).bit_length()


class VisitCounter:
    __slots__ = ("keys", "vals", "capacity", "shift", "occupied")

    def __init__(self, capacity: int):
        if capacity < 2 or capacity & (capacity - 1):
            raise ValueError("capacity must be a power of two >= 2")
        self.capacity = capacity
        self.shift = 64 - capacity.bit_length() + 1  # 64 - log2(capacity)
        self.keys = np.full(capacity, _EMPTY_U32, dtype=np.uint32)
        self.vals = np.zeros(capacity, dtype=np.int64)
        self.occupied = 0

    @classmethod
    def for_steps(cls, n_steps: int) -> "VisitCounter":
        return cls(_capacity_for(n_steps))

    def _start(self, key: int) -> int:
        return ((key * FIB64) & MASK64) >> self.shift

    def increment(self, key: int) -> int:
        """Add one visit; returns the new count for `key`."""
        idx = self._start(key)
        mask = self.capacity - 1
        keys = self.keys
        while True:
            kk = keys[idx]
            if kk == key:
                self.vals[idx] += 1
                return int(self.vals[idx])
            if kk == EMPTY:
                if self.occupied >= self.capacity // 2:
                    raise CounterFullError(
                        f"counter at load factor 0.5 (capacity {self.capacity})")
                keys[idx] = key
                self.vals[idx] = 1
                self.occupied += 1
                return 1
            idx = (idx + 1) & mask

    def lookup(self, key: int) -> int:
        idx = self._start(key)
        mask = self.capacity - 1
        while True:
            kk = self.keys[idx]
            if kk == key:
                return int(self.vals[idx])
            if kk == EMPTY:
                return 0
            idx = (idx + 1) & mask

    def items(self) -> tuple[np.ndarray, np.ndarray]:
        """(ids, counts) of occupied slots, in slot order."""
        out_keys = np.empty(self.occupied, dtype=np.int64)
        out_vals = np.empty(self.occupied, dtype=np.int64)
        n = _compact(self.keys, self.vals, out_keys, out_vals)
        assert n == self.occupied
        return out_keys, out_vals

    def as_dict(self) -> dict[int, int]:
        ids, counts = self.items()
        return {int(k): int(v) for k, v in zip(ids, counts)}

    def total(self) -> int:
        ids, counts = self.items()
        return int(counts.sum()) if len(counts) else 0

    def __len__(self) -> int:
        return self.occupied
