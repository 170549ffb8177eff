"""Deterministic, platform-independent random numbers.

xoshiro256** generator seeded through splitmix64, plus the FNV-1a label
hash used to derive per-job seed streams. Pure integer arithmetic, so the
same seed yields the same stream on every platform and interpreter.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK
    return h


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step; returns (next_state, output)."""
    state = (state + _SPLITMIX_GAMMA) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, (z ^ (z >> 31)) & _MASK


def derive_seed(master: int, label: str) -> int:
    """Derive a stream seed from a master seed and a canonical label.

    One splitmix64 step applied to ``master XOR fnv1a64(label)``. Distinct
    labels give independent streams; the same (master, label) pair always
    gives the same seed.
    """
    _, v = splitmix64((master ^ fnv1a64(label.encode("utf-8"))) & _MASK)
    return v


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Rng:
    """xoshiro256** with splitmix64 state initialisation.

    Explicit-value generator: pass instances down, never share a mutable
    global. Methods consume a fixed number of draws so call sites stay
    reproducible.
    """

    __slots__ = ("_s",)

    def __init__(self, seed: int):
        s = seed & _MASK
        state = []
        for _ in range(4):
            s, v = splitmix64(s)
            state.append(v)
        self._s = state

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform01(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform01()

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection."""
        if n <= 0:
            raise ValueError("below() needs n >= 1")
        limit = _MASK - (_MASK + 1) % n
        while True:
            x = self.next_u64()
            if x <= limit:
                return x % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: list, k: int) -> list:
        """k items without replacement, order of draw."""
        if k > len(items):
            raise ValueError("sample larger than population")
        pool = list(items)
        out = []
        for _ in range(k):
            idx = self.below(len(pool))
            out.append(pool.pop(idx))
        return out
