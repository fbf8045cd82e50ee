"""PCG32 random number generator (XSH-RR output, 64-bit LCG state).

Pure integer arithmetic, so a given (seed, stream) pair produces the same
draws on every platform.
"""
from __future__ import annotations

from dataclasses import dataclass

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1
_MULT = 6364136223846793005


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngSpec:
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            val = getattr(self, name)
            if not 0 <= val <= _MASK64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {val}")

    def substream(self, k: int) -> "RngSpec":
        """Independent spec for sample ``k``, derived from (seed, stream, k)."""
        return RngSpec(seed=self.seed, stream=splitmix64(self.stream ^ splitmix64(k)))

    def generator(self) -> "PCG32":
        return PCG32(self.seed, self.stream)


class PCG32:
    """Minimal PCG32 generator, seeded like the reference ``pcg32_srandom_r``."""

    __slots__ = ("state", "inc")

    def __init__(self, seed: int, stream: int = 0):
        self.state = 0
        self.inc = ((stream << 1) | 1) & _MASK64
        self.next_u32()
        self.state = (self.state + seed) & _MASK64
        self.next_u32()

    def next_u32(self) -> int:
        old = self.state
        self.state = (old * _MULT + self.inc) & _MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & _MASK32
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & _MASK32

    def below(self, bound: int) -> int:
        """Unbiased integer in ``[0, bound)`` (rejection as in ``pcg32_boundedrand_r``)."""
        threshold = ((1 << 32) - bound) % bound
        while True:
            r = self.next_u32()
            if r >= threshold:
                return r % bound

    def uniform(self) -> float:
        """Double in ``[0, 1)`` with 53 random bits."""
        hi = self.next_u32() >> 5
        lo = self.next_u32() >> 6
        return (hi * 67108864.0 + lo) / 9007199254740992.0
