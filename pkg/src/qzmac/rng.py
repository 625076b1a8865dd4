"""Deterministic counter-based random streams.

Every random quantity in a run is a pure function of
(master seed, stream label, counter): the label is hashed into a 64-bit
stream key and the value at counter c is the SplitMix64 output for state
key + c * GAMMA. That buys three things the stateful generators in
numpy.random do not give us here:

* the same integer arithmetic runs unchanged inside numba nopython kernels
  and in plain Python (masked 64-bit ints), so both engine backends are
  bit-identical;
* draws can be addressed positionally (e.g. "arrival coin of node 3 at
  slot 812"), so toggling an unrelated feature or replaying a window never
  shifts anyone else's randomness;
* replay needs no generator state, just the seed.
"""

from __future__ import annotations

import hashlib

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_TO_U01 = 2.0 ** -53


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return (x ^ (x >> 31)) & MASK64


def stream_key(master_seed: int, label: str) -> int:
    """64-bit key for a named stream under a master seed."""
    h = int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "little")
    return mix64(mix64(master_seed & MASK64) ^ h)


def value_at(key: int, counter: int) -> int:
    """The stream's uniform 64-bit value at a counter position."""
    return mix64((key + (GAMMA * counter)) & MASK64)


def u01(u: int) -> float:
    """Map a 64-bit value to a double in [0, 1) (53-bit resolution)."""
    return (u >> 11) * _TO_U01


class Stream:
    """One named stream: sequential draws plus positional access."""

    def __init__(self, key: int, label: str = ""):
        self.key = key
        self.label = label
        self.counter = 0

    def next_u64(self) -> int:
        u = value_at(self.key, self.counter)
        self.counter += 1
        return u

    def next_u01(self) -> float:
        return u01(self.next_u64())

    def next_int(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] (inclusive)."""
        return lo + self.next_u64() % (hi - lo + 1)

    def u64_at(self, counter: int) -> int:
        return value_at(self.key, counter)

    def u01_at(self, counter: int) -> float:
        return u01(value_at(self.key, counter))


class StreamRegistry:
    """Derives named substreams from a master seed; duplicate labels are bugs."""

    def __init__(self, master_seed: int):
        self.master_seed = master_seed
        self._labels: set[str] = set()

    def derive(self, label: str) -> Stream:
        if label in self._labels:
            raise ValueError(f"stream label already derived: {label!r}")
        self._labels.add(label)
        return Stream(stream_key(self.master_seed, label), label)


def derive_stream(master_seed: int, label: str) -> Stream:
    """Standalone derivation: same stream a registry would hand out."""
    return Stream(stream_key(master_seed, label), label)
