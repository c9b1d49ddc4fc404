"""Seed derivation and a platform-stable Fisher-Yates shuffle.

Every permutation used for batch ordering comes from :func:`permutation`,
which consumes the raw 64-bit PCG64 output stream directly. PCG64's raw
stream is fixed by its algorithm, so schedules do not depend on the numpy
release's choice of bounded-integer sampler.
"""
from __future__ import annotations

import zlib

import numpy as np


def derive_seed(master: int, name: str) -> int:
    """Independent 64-bit child seed for the named purpose."""
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode())])
    return int(ss.generate_state(1, np.uint64)[0])


def make_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def permutation(n: int, gen: np.random.Generator) -> np.ndarray:
    """Uniform permutation of ``range(n)`` by descending Fisher-Yates.

    Position ``i`` swaps with ``j = (r * (i + 1)) >> 64`` where ``r`` is the
    next raw PCG64 word (multiply-shift bounded draw).
    """
    out = list(range(n))
    if n < 2:
        return np.asarray(out, dtype=np.int64)
    raws = gen.bit_generator.random_raw(n - 1).tolist()
    for step, i in enumerate(range(n - 1, 0, -1)):
        j = (raws[step] * (i + 1)) >> 64
        out[i], out[j] = out[j], out[i]
    return np.asarray(out, dtype=np.int64)


def randbelow(n: int, gen: np.random.Generator) -> int:
    """Uniform integer in ``[0, n)`` from one raw word."""
    if n <= 0:
        raise ValueError("n must be positive")
    return (int(gen.bit_generator.random_raw()) * n) >> 64
