"""Seedable 64-bit random source shared by all walk and sampling code.

SplitMix64: one uint64 of state, full 2^64 period, passes BigCrush.
The walk kernels inline the same update so that a state handed to a
kernel and back stays on a single deterministic stream.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def splitmix64(state: int) -> tuple[int, int]:
    """Advance one step; returns (new_state, output)."""
    state = (state + GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    z = z ^ (z >> 31)
    return state, z


class RandomSource:
    """Caller-owned random stream. Never shared across workers."""

    __slots__ = ("state",)

    def __init__(self, seed: int = 0):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state, out = splitmix64(self.state)
        return out

    def next_unit(self) -> float:
        """Uniform float in (0, 1]."""
        return ((self.next_u64() >> 11) + 1) * 2.0**-53

    def next_below(self, n: int) -> int:
        """Uniform int in [0, n) via modulo reduction.

        Modulo bias is ~n/2^64 and accepted by design: it keeps the
        draw constant-time, and is far below any test's resolution.
        """
        return self.next_u64() % n

    def fork(self, stream: int) -> "RandomSource":
        """Derive an independent stream, deterministically."""
        _, mixed = splitmix64((self.state ^ stream) & MASK64)
        return RandomSource(mixed)


def derive_seed(*parts: int) -> int:
    """Hash a tuple of integers into one 64-bit seed."""
    acc = 0x243F6A8885A308D3
    for p in parts:
        acc, out = splitmix64((acc ^ (p & MASK64)) & MASK64)
        acc = out
    return acc
