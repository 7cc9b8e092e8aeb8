"""Deterministic seed derivation for embarrassingly parallel replicates.

Every stochastic routine in this package takes an explicit seed; nothing reads
global RNG state. Child seeds are derived from a root seed and a task index so
that replicate k is reproducible in isolation, independent of scheduling.
"""
from __future__ import annotations

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One splitmix64 output step for the given 64-bit state."""
    z = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(root_seed: int, index: int) -> int:
    """Child seed for task `index` under `root_seed`.

    The derivation is `splitmix64(root + index)`: a full 64-bit mix, so
    neighboring indices give uncorrelated streams when fed to a generator.
    Note that two roots closer together than the index range share most of
    their child seeds (root+index collides); when comparing whole runs,
    space root seeds further apart than the number of tasks.
    """
    if index < 0:
        raise ValueError("index must be nonnegative, got %d" % index)
    return splitmix64((root_seed + index) & _MASK64)
