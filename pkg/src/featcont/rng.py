"""Counter-based keyed random number generation.

Every random decision in the toolkit (shuffles, source draws, color sampling,
augmentation gates) is keyed by a tuple of integers such as
``(seed, epoch, purpose, item)``.  Two streams with the same key produce the
same draw sequence no matter in which order, or on which worker, they are
consumed.  The generator is a SplitMix64: the state advances by a fixed odd
constant and each output is a finalizer hash of the state.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15  # 2^64 / golden ratio, odd
_BASE = 0x243F6A8885A308D3  # first 64 fractional bits of pi


def _mix(z: int) -> int:
    """SplitMix64 output finalizer (Stafford variant 13)."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _fold(state: int, part: int) -> int:
    # Position-dependent fold so (0, 1) and (1, 0) key different streams.
    state = (state + _GAMMA) & _MASK
    return _mix(state ^ (part & _MASK))


class KeyedRng:
    """Deterministic generator identified by an integer key tuple."""

    __slots__ = ("_state",)

    def __init__(self, *key: int):
        state = _BASE
        for part in key:
            state = _fold(state, int(part))
        self._state = state

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return _mix(self._state)

    def uniform(self) -> float:
        """Uniform draw in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_open(self) -> float:
        """Uniform draw in the open interval (0, 1)."""
        while True:
            u = self.uniform()
            if u > 0.0:
                return u

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError(f"below() needs n >= 1, got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def normals(self, count: int) -> list[float]:
        """Standard normal draws via Box-Muller (pairs share two uniforms)."""
        out: list[float] = []
        while len(out) < count:
            u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53  # (0, 1]
            u2 = self.uniform()
            r = math.sqrt(-2.0 * math.log(u1))
            out.append(r * math.cos(2.0 * math.pi * u2))
            out.append(r * math.sin(2.0 * math.pi * u2))
        return out[:count]

    def shuffled(self, n: int) -> list[int]:
        """Fisher-Yates permutation of range(n)."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


# Key-purpose tags.  Fixed small integers, never reused across purposes.
TAG_SHUFFLE = 1
TAG_MIX = 2
TAG_BATCH_MIX = 3
TAG_OPACITY = 4
TAG_COLOR = 5
TAG_SUBSET = 6
TAG_AUG_GATE = 7
TAG_AUG_LAMBDA = 8
TAG_AUG_PERM = 9
TAG_AUG_PATCH = 10
TAG_GLYPH = 11
TAG_BACKGROUND = 12
TAG_SHAPE = 13
