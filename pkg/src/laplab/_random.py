"""Seed mixing and generator construction."""

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x):
    """One round of the splitmix64 finalizer on a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(*parts):
    """Fold integers into one 64-bit seed.

    Order matters: ``mix_seed(a, b) != mix_seed(b, a)`` in general.
    """
    h = 0
    for p in parts:
        h = splitmix64(h ^ (int(p) & _MASK64))
    return h


def make_rng(seed):
    # Philox is counter-based and produces the same stream on every platform.
    return np.random.Generator(np.random.Philox(int(seed) & _MASK64))
