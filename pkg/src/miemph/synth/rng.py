"""Portable random streams: splitmix64 seeding and xoshiro256**.

Every stream is a xoshiro256** generator whose four state words are the
first four outputs of splitmix64 started at the stream seed. Many streams
advance in lockstep as numpy uint64 vectors, so one draw yields one value
per stream. Uniforms use the top 53 bits; normals use Box-Muller on
consecutive pairs of uniforms.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step on a Python int; returns (new_state, output)."""
    state = (state + GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def mix_seed(*parts: int) -> int:
    """Fold integers into one 64-bit seed via chained splitmix64."""
    state = 0
    out = 0
    for part in parts:
        state, out = splitmix64((state ^ (int(part) & MASK64)) & MASK64)
        state = out
    return out


def derive_seed(root: int, purpose: str) -> int:
    """Sub-seed for a named purpose (``"folds"``, ``"init/3"``, ...)."""
    tag = int.from_bytes(hashlib.sha256(purpose.encode("utf-8")).digest()[:8], "little")
    return mix_seed(root, tag)


def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class Xoshiro256StarStar:
    """A bank of independent xoshiro256** streams advanced together."""

    def __init__(self, seeds):
        seeds = [int(s) & MASK64 for s in np.atleast_1d(seeds)]
        words = np.empty((4, len(seeds)), dtype=np.uint64)
        for j, seed in enumerate(seeds):
            state = seed
            for i in range(4):
                state, words[i, j] = splitmix64(state)
        self.s = words

    @property
    def n_streams(self) -> int:
        return self.s.shape[1]

    def next_u64(self) -> np.ndarray:
        s0, s1, s2, s3 = self.s
        result = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        self.s[3] = _rotl(s3, 45)
        return result

    def uniform(self, n: int) -> np.ndarray:
        """(n_streams, n) uniforms in [0, 1)."""
        out = np.empty((self.n_streams, n), dtype=np.float64)
        for i in range(n):
            out[:, i] = (self.next_u64() >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return out

    def normal(self, n: int) -> np.ndarray:
        """(n_streams, n) standard normals."""
        u = self.uniform(n + (n % 2))
        u1 = 1.0 - u[:, 0::2]  # (0, 1]
        u2 = u[:, 1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty_like(u)
        z[:, 0::2] = r * np.cos(2 * np.pi * u2)
        z[:, 1::2] = r * np.sin(2 * np.pi * u2)
        return z[:, :n]
