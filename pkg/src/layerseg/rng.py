"""Counter-based deterministic random generator (splitmix-style 64-bit mixing).

Every random quantity in the package is a pure function of (seed, counter),
so identical configs reproduce bit-identical phantoms, splits, and model
initializations on any platform. Integer mixing and the uniform-float
construction are exact; only transcendental calls (log/cos in the Gaussian
path, sin in phantom boundaries) depend on the local libm.
"""

from __future__ import annotations

import math

import numpy as np

_M64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """Splitmix64 finalizer on a 64-bit integer."""
    x &= _M64
    x ^= x >> 30
    x = (x * _MIX1) & _M64
    x ^= x >> 27
    x = (x * _MIX2) & _M64
    x ^= x >> 31
    return x


def _mix64_vec(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MIX1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MIX2)
    x ^= x >> np.uint64(31)
    return x


def stream_seed(seed: int, *keys: int) -> int:
    """Derive an independent stream seed from a base seed and integer keys.

    Folding is order-sensitive: stream_seed(s, a, b) != stream_seed(s, b, a).
    """
    s = seed & _M64
    for k in keys:
        s = mix64((s + (int(k) + 1) * _GAMMA) & _M64)
    return s


def string_key(text: str) -> int:
    """Stable 64-bit key for a string (for seeding by volume id)."""
    s = 0x811C9DC5
    for b in text.encode("utf-8"):
        s = mix64((s ^ b) + _GAMMA)
    return s


class CounterRng:
    """Stateful facade over the counter-based generator.

    Draws are consumed in a fixed order; the k-th value depends only on
    (seed, k), never on array shapes or platform word size.
    """

    def __init__(self, seed: int):
        self.seed = seed & _M64
        self.counter = 0

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        return _mix64_vec(np.uint64(self.seed) + idx * np.uint64(_GAMMA))

    def uniform(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """n doubles uniform in [lo, hi), built from the top 53 bits."""
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return lo + (hi - lo) * u

    def normal(self, n: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """n standard-normal doubles via Box-Muller."""
        m = (n + 1) // 2
        raw = self._raw(2 * m)
        u1 = ((raw[:m] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53
        u2 = (raw[m:] >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * math.pi) * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return mean + std * z

    def integers(self, n: int, lo: int, hi: int) -> np.ndarray:
        """n integers in [lo, hi); modulo bias is negligible for our ranges."""
        if hi <= lo:
            raise ValueError("empty integer range")
        span = np.uint64(hi - lo)
        return (lo + (self._raw(n) % span).astype(np.int64)).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic uniform permutation of range(n)."""
        return np.argsort(self._raw(n), kind="stable")
