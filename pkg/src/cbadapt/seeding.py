"""Seed derivation.

All randomness is drawn from numpy's Philox4x64 counter-based bit generator,
which produces identical streams on every platform. Per-purpose streams are
derived from ``(global_seed, crc32(purpose), index)`` through
``numpy.random.SeedSequence`` so that adding a new consumer never shifts the
draws of an existing one.
"""

import zlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def purpose_tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def _sequence(seed: int, purpose: str, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & SEED_MASK, purpose_tag(purpose), int(index)])


def make_rng(seed: int, purpose: str | None = None, index: int = 0) -> np.random.Generator:
    """Philox generator for ``seed``, optionally specialised to a purpose."""
    if purpose is None:
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) & SEED_MASK)))
    return np.random.Generator(np.random.Philox(_sequence(seed, purpose, index)))


def derive_seed(seed: int, purpose: str, index: int = 0) -> int:
    """64-bit child seed for ``(seed, purpose, index)``."""
    lo, hi = _sequence(seed, purpose, index).generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)
