"""Seedable xoshiro256** generator and the seed-derivation scheme.

All randomness in the engine comes from :class:`Xoshiro256` instances
seeded through :func:`hash64` so results do not depend on numpy's global
state or on numpy's own bit generators.

Algorithms
----------
* state expansion: splitmix64 run from the 64-bit seed fills the four
  state words (the reference seeding for xoshiro).
* ``next_u64``: xoshiro256** (Blackman and Vigna).
* ``random``: ``(x >> 11) * 2**-53``, uniform on ``[0, 1)``.
* ``normal``: Box-Muller on consecutive uniform pairs ``(u1, u2)``
  producing ``r*cos(2 pi u2)`` then ``r*sin(2 pi u2)`` with
  ``r = sqrt(-2 log(1 - u1))``.  An odd trailing value is discarded.
* ``permutation``: Fisher-Yates from the last position down, swap index
  ``floor(u * (i + 1))``, one uniform per position.
"""

import numpy as np

from . import _kernels

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x):
    """One splitmix64 output for state ``x``; returns ``(output, next_state)``."""
    x = (x + _GOLDEN) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31), x


def _fnv1a(text):
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & MASK64
    return h


def hash64(seed, purpose, *indices):
    """Derive a 64-bit seed from a run seed, a purpose tag and integer indices.

    ``h = mix(seed ^ fnv1a(purpose))`` then ``h = mix(h ^ index)`` for each
    index, where ``mix`` is the splitmix64 output function.
    """
    h, _ = splitmix64((int(seed) & MASK64) ^ _fnv1a(purpose))
    for idx in indices:
        h, _ = splitmix64(h ^ (int(idx) & MASK64))
    return h


class Xoshiro256:
    """xoshiro256** stream.  Not thread safe; one instance per consumer."""

    def __init__(self, seed):
        s = int(seed) & MASK64
        words = []
        for _ in range(4):
            out, s = splitmix64(s)
            words.append(out)
        self.state = np.array(words, dtype=np.uint64)

    @classmethod
    def derived(cls, seed, purpose, *indices):
        return cls(hash64(seed, purpose, *indices))

    def next_u64(self, n):
        out = np.empty(int(n), dtype=np.uint64)
        if n:
            _kernels.xoshiro_fill(self.state, out)
        return out

    def random(self, n):
        x = self.next_u64(n)
        return (x >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)

    def normal(self, n, scale=1.0):
        n = int(n)
        pairs = (n + 1) // 2
        u = self.random(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n] * scale

    def permutation(self, n):
        arr = np.arange(int(n), dtype=np.int64)
        self.shuffle(arr)
        return arr

    def shuffle(self, arr):
        """Shuffle a 1-D array in place."""
        if arr.shape[0] > 1:
            _kernels.fisher_yates(arr, self.random(arr.shape[0] - 1))
        return arr

    def choice(self, n, k):
        """``k`` distinct indices from ``range(n)``, in draw order."""
        if k > n:
            raise ValueError(f"cannot draw {k} distinct items from {n}")
        return self.permutation(n)[:k]
