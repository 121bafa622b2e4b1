"""Seeded sampling with a splitmix64 stream.

The generator is deliberately tiny and fully specified so that sample points
are reproducible across platforms and numpy versions::

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z = z ^ (z >> 31)

Uniform doubles in [0, 1) take the top 53 bits of ``z``.
"""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self, lo=0.0, hi=1.0, size=None):
        if size is None:
            return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0**-53)
        count = int(np.prod(size))
        u = np.array([(self.next_u64() >> 11) * 2.0**-53 for _ in range(count)])
        return (np.asarray(lo) + (np.asarray(hi) - np.asarray(lo)) * u.reshape(size))

    def box(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        return np.array([self.uniform(a, b) for a, b in zip(lo, hi)])


def jet_points(seed: int, count: int, t_box, x_box, n: int, p: int):
    """``count`` seeded (t, x, xdot) triples; xdot entries uniform in [-1, 1]."""
    rng = SplitMix64(seed)
    out = []
    for _ in range(count):
        t = rng.box(*t_box)
        x = rng.box(*x_box)
        xdot = rng.uniform(-1.0, 1.0, (n, p))
        out.append((t, x, xdot))
    return out
